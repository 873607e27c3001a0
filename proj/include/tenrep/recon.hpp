#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "tenrep/cluster.hpp"
#include "tenrep/nn.hpp"

namespace tenrep {

/**
 * Partially tensorized autoencoder.
 *
 *   x_hat = shared_decoder(cluster_decoders[j](cluster_encoders[j](shared_encoder(x - c_j))))
 *   z     = cluster_encoders[j](shared_encoder(x - c_j))
 *
 * Empty shared parts give the fully tensorized AE; k = 1 with `centered`
 * off is a plain autoencoder.
 */
struct PtaeModel {
    Network shared_encoder;
    std::vector<Network> cluster_encoders;
    std::vector<Network> cluster_decoders;
    Network shared_decoder;
    double lambda = 0.0;
    /// Per-sample cap on the norm of the penalty's latent gradient 2*lambda*z.
    double penalty_grad_clip = 1.0;
    bool centered = true;
    ClusterCenters centers;

    std::size_t k() const noexcept { return cluster_encoders.size(); }
    /// c_j, or a zero vector when centering is off or no centers are set yet.
    std::vector<double> center_of(std::size_t j, std::size_t d) const;

    std::vector<Tensor*> parameters();
    std::size_t param_count() const;
};

enum class ReconArch { ae1, ae2, ae3, tae1, tae2, ptae };

std::string_view to_string(ReconArch a);
ReconArch recon_arch_from_string(std::string_view name);
bool is_tensorized(ReconArch a);

/**
 * Named architectures for data dimension d and true class count C
 * (tanh hidden, linear output):
 *   ae1 d->1->d, ae2 d->2->1->2->d, ae3 d->2->C->2->d,
 *   tae1/tae2 k copies of ae1/ae2,
 *   ptae shared d->2, k heads 2->1 and 1->2, shared 2->d.
 * Layers between a hidden layer and the latent code carry no bias; layers
 * touching the data space do. With that convention ptae(k=C) and ae3 have
 * exactly the same parameter count.
 */
PtaeModel make_recon_model(ReconArch arch, std::size_t d, std::size_t C, std::size_t k, Rng& rng);

struct Reconstruction {
    std::vector<double> x_hat;  // in centered coordinates
    std::vector<double> z;
};

Reconstruction reconstruct(const PtaeModel& model, std::span<const double> x, std::size_t j);

/// Latent codes z for every row of X under cluster j (n x h).
Tensor encode_rows(const PtaeModel& model, const Tensor& X, std::size_t j);

/// Reconstructions mapped back to data coordinates (x_hat + c_j) for every row under cluster j.
Tensor reconstruct_rows(const PtaeModel& model, const Tensor& X, std::size_t j);

double kmeans_penalty(std::span<const double> z);

/// (j, i) -> ||x~ - x_hat||^2 - lambda ||z||^2 with x~ = x_i - c_j.
Tensor ptae_loss_matrix(const PtaeModel& model, const Tensor& X);

/**
 * One optimizer step on (1/|B|) sum_{i in B} loss(S[i], i) over batch B
 * (all samples when `batch` is empty). Returns the batch objective before the step.
 */
double ptae_grad_step(PtaeModel& model, const Tensor& X, const AssignmentMatrix& S, Optimizer& opt,
                      std::span<const std::size_t> batch = {});

/// Loss and gradients of the batch objective without stepping; grads follow parameters() order.
double ptae_objective_and_grads(PtaeModel& model, const Tensor& X, const AssignmentMatrix& S,
                                std::span<const std::size_t> batch, ParamGrads& grads);

}  // namespace tenrep
