#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "tenrep/cluster.hpp"
#include "tenrep/nn.hpp"

namespace tenrep {

enum class ReconMode { bce_sigmoid, mse_linear };
/// sigma: z = mu + exp(logvar / 2) * eps. variance: z = mu + exp(logvar) * eps.
enum class ReparamMode { sigma, variance };

std::string_view to_string(ReconMode m);
ReconMode recon_mode_from_string(std::string_view name);
std::string_view to_string(ReparamMode m);
ReparamMode reparam_mode_from_string(std::string_view name);

/**
 * Tensorized VAE: a shared trunk on the centered input, per-cluster mean and
 * log-variance heads, per-cluster decoders and a shared output layer.
 * k = 1 with `centered` off is the standard VAE.
 *
 * In bce mode the decoder output is a logit and the reconstruction targets
 * are the raw [0,1] inputs; in mse mode the output is linear and the target
 * is the centered input.
 */
struct TvaeModel {
    Network trunk;
    std::vector<Network> mean_heads;
    std::vector<Network> logvar_heads;
    std::vector<Network> cluster_decoders;
    Network shared_decoder;
    ReconMode recon_mode = ReconMode::bce_sigmoid;
    ReparamMode reparam_mode = ReparamMode::sigma;
    bool centered = true;
    ClusterCenters centers;

    std::size_t k() const noexcept { return mean_heads.size(); }
    std::size_t latent_dim() const;
    std::vector<double> center_of(std::size_t j, std::size_t d) const;

    std::vector<Tensor*> parameters();
    std::size_t param_count() const;
};

/// d -> hidden (tanh) -> k x [hidden -> latent] mean/logvar heads; k x [latent -> hidden (tanh)] -> d.
TvaeModel make_tvae(std::size_t d, std::size_t hidden, std::size_t latent, std::size_t k, ReconMode mode,
                    Rng& rng);

struct Posterior {
    std::vector<double> mean;
    std::vector<double> logvar;
};

Posterior encode(const TvaeModel& model, std::span<const double> x, std::size_t j);

std::vector<double> reparameterize(std::span<const double> mean, std::span<const double> logvar,
                                   std::span<const double> eps, ReparamMode mode = ReparamMode::sigma);

/// KL(N(mean, exp(logvar)) || N(0, I)).
double kl_term(std::span<const double> mean, std::span<const double> logvar);

/// Reconstruction loss of decoder output `out` against `target` (BCE on logits or half squared error).
double recon_loss(ReconMode mode, std::span<const double> target, std::span<const double> out);

/// Decodes z through cluster j and scores it against `target`.
double recon_term(const TvaeModel& model, std::span<const double> target, std::span<const double> z, std::size_t j);

/// Decoder output for z under cluster j (logits in bce mode).
std::vector<double> decode(const TvaeModel& model, std::span<const double> z, std::size_t j);

/**
 * (j, i) -> recon + KL for sample i under cluster j, with one fresh eps per
 * entry drawn from `rng` (cluster-major, then sample order).
 */
Tensor tvae_loss_matrix(const TvaeModel& model, const Tensor& X, Rng& rng);

/// Same with caller-supplied noise: eps has shape (k, n, latent).
Tensor tvae_loss_matrix(const TvaeModel& model, const Tensor& X, const Tensor& eps);

/**
 * Objective (1/|B|) sum_{i in B} [recon + KL](S[i], i) and its gradients with
 * frozen noise eps (n x latent, one row per sample). Empty batch means all samples.
 */
double tvae_objective_and_grads(TvaeModel& model, const Tensor& X, const AssignmentMatrix& S, const Tensor& eps,
                                std::span<const std::size_t> batch, ParamGrads& grads);

/// Draws one eps per sample from `rng` and takes one optimizer step. Returns the pre-step objective.
double tvae_grad_step(TvaeModel& model, const Tensor& X, const AssignmentMatrix& S, Optimizer& opt, Rng& rng,
                      std::span<const std::size_t> batch = {});

/// Decoded outputs for each latent point (sigmoid applied in bce mode).
std::vector<std::vector<double>> sample_latent_grid(const TvaeModel& model, std::size_t j,
                                                    const std::vector<std::vector<double>>& grid);

/// Regular side x side grid over [-extent, extent]^2, row-major in (z1, z2).
std::vector<std::vector<double>> latent_grid(std::size_t side, double extent);

}  // namespace tenrep
