#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tenrep/cluster.hpp"
#include "tenrep/nn.hpp"

namespace tenrep {

/// Binary RBM, E(x, z) = -x.a - z.b - x^T W z.
struct RbmParams {
    Tensor W;  // d x h
    Tensor a;  // visible bias, d
    Tensor b;  // hidden bias, h

    std::size_t visible() const { return W.dim(0); }
    std::size_t hidden() const { return W.dim(1); }
    std::size_t param_count() const { return W.size() + a.size() + b.size(); }
};

/// Gradient (or update) with the same layout as RbmParams.
using RbmGrads = RbmParams;

RbmParams make_rbm(std::size_t visible, std::size_t hidden);
/// N(0, init_std^2) weights, zero biases.
RbmParams make_rbm(std::size_t visible, std::size_t hidden, Rng& rng, double init_std = 0.01);

/// Largest visible dimension for which the partition function is enumerated.
inline constexpr std::size_t max_exact_visible = 16;

double energy(const RbmParams& p, std::span<const double> x, std::span<const double> z);

/// F(x) = -log sum_z exp(-E(x, z)) = -x.a - sum_h softplus(b_h + (W^T x)_h).
double free_energy(const RbmParams& p, std::span<const double> x);

/// log A by enumeration over all 2^d visible states (d <= max_exact_visible).
double log_partition(const RbmParams& p);
double partition_exact(const RbmParams& p);

/// sum_i (-F(x_i) - log A) over the rows of binary X.
double exact_loglik(const RbmParams& p, const Tensor& X);

/// Gradient of exact_loglik with respect to (W, a, b).
RbmGrads exact_loglik_grad(const RbmParams& p, const Tensor& X);

/// p(h=1 | x) and p(x=1 | h).
std::vector<double> hidden_probs(const RbmParams& p, std::span<const double> x);
std::vector<double> visible_probs(const RbmParams& p, std::span<const double> z);

/// CD-k estimate of the batch-mean log-likelihood gradient.
RbmGrads cd_gradient(const RbmParams& p, const Tensor& batch, std::size_t k_gibbs, Rng& rng);

/// params += lr * cd_gradient(...)
void cd_step(RbmParams& p, const Tensor& batch, std::size_t k_gibbs, double lr, Rng& rng);
void cd_step(RbmParams& p, const Tensor& batch, std::size_t k_gibbs, double lr, std::uint64_t seed);

/// params += lr * exact_loglik_grad / n (the exact-expectation variant of cd_step).
void exact_gradient_step(RbmParams& p, const Tensor& batch, double lr);

/// One mean-field pass: h = sig(b + W^T x), x_hat = sig(a + W h).
std::vector<double> reconstruct(const RbmParams& p, std::span<const double> x);

/// Entries >= threshold become 1, others 0.
Tensor binarize(const Tensor& X, double threshold = 0.5);

/// Per-cluster negative log-likelihood (exact when d <= max_exact_visible, else free energy): k x n.
Tensor trbm_loss_matrix(const std::vector<RbmParams>& models, const Tensor& X);

struct TrbmOptions {
    std::size_t epochs = 300;
    std::size_t k_gibbs = 1;
    double learning_rate = 0.05;
    std::size_t batch_size = 0;  // 0 = all assigned points
    bool exact_gradient = false;
    std::uint64_t seed = 0;
};

/// Seed of cluster j's Gibbs stream; cluster 0 uses the run seed itself.
std::uint64_t cluster_stream_seed(std::uint64_t seed, std::size_t j);

/// One training pass: each cluster's RBM is updated on its assigned points.
void trbm_train_epoch(std::vector<RbmParams>& models, const Tensor& X, const AssignmentMatrix& S,
                      const TrbmOptions& opt, std::vector<Rng>& streams);

struct TrbmResult {
    std::vector<RbmParams> models;
    AssignmentMatrix assignment;
    std::size_t epochs_run = 0;
};

/// Alternates trbm_train_epoch and a Lloyd step on trbm_loss_matrix for opt.epochs epochs.
TrbmResult trbm_assign_and_train(std::vector<RbmParams> models, const Tensor& X, AssignmentMatrix S,
                                 const TrbmOptions& opt);

}  // namespace tenrep
