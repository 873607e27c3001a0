#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tenrep/cluster.hpp"
#include "tenrep/nn.hpp"

namespace tenrep {

struct DisplacementField {
    Tensor dx;  // H x W
    Tensor dy;  // H x W
};

/// Uniform(-1, 1) per pixel, Gaussian-smoothed with std sigma, scaled by alpha.
DisplacementField elastic_displacement(std::size_t height, std::size_t width, double alpha, double sigma,
                                       std::uint64_t seed);

/// Resamples img (H x W) at (y + dy, x + dx) bilinearly with edge clamping.
Tensor warp_image(const Tensor& img, const DisplacementField& field);

/// Elastic distortion of an H x W image; deterministic per seed. Throws for sigma <= 0.
Tensor elastic_transform(const Tensor& img, double alpha, double sigma, std::uint64_t seed);

enum class PairMode { supervised, unsupervised };

std::string_view to_string(PairMode m);
PairMode pair_mode_from_string(std::string_view name);

/// Anchor i's positive and negative, stored as n x d rows.
struct TripletBatch {
    Tensor anchors;
    Tensor positives;
    Tensor negatives;
    PairMode mode = PairMode::unsupervised;
    std::vector<std::size_t> anchor_index;
    /// Dataset row of each positive; empty in unsupervised mode (positives are augmentations).
    std::vector<std::size_t> positive_index;
    std::vector<std::size_t> negative_index;

    std::size_t size() const { return anchor_index.size(); }
};

struct ElasticParams {
    double alpha = 8.0;
    double sigma = 3.0;
};

/**
 * Positives are elastic transforms of the anchors (rows reshaped to
 * image_h x image_w); negatives are drawn uniformly from points in other
 * clusters under S. Requires k >= 2 and no cluster holding every point.
 */
TripletBatch gen_pairs_unsupervised(const Tensor& X, const AssignmentMatrix& S, std::size_t image_h,
                                    std::size_t image_w, ElasticParams elastic, std::uint64_t seed);

/// Positive: another member of the anchor's class. Negative: any member of another class.
TripletBatch gen_pairs_supervised(const Tensor& X, std::span<const int> labels, std::uint64_t seed);

/// Shared trunk g_Omega and k cluster heads g_Psi_j; z_{i,j} = heads[j](trunk(x_i)).
struct TclModel {
    Network trunk;
    std::vector<Network> heads;
    Shape input_shape;  // per-sample shape fed to the trunk

    std::size_t k() const noexcept { return heads.size(); }
    std::vector<Tensor*> parameters();
    std::size_t param_count() const;
};

/// conv 1->8 3x3 relu, conv 8->16 3x3 relu, dense -> trunk_dim relu; k heads trunk_dim -> embed_dim.
TclModel make_tcl_conv(std::size_t image_h, std::size_t image_w, std::size_t k, Rng& rng,
                       std::size_t trunk_dim = 64, std::size_t embed_dim = 128);

/// Dense trunk d -> hidden (tanh); k heads hidden -> embed_dim.
TclModel make_tcl_dense(std::size_t d, std::size_t hidden, std::size_t embed_dim, std::size_t k, Rng& rng);

/// Head-j embeddings of the rows of X (n x embed_dim), not normalized.
Tensor tcl_embed(const TclModel& model, const Tensor& X, std::size_t j);

struct TclLoss {
    double value = 0.0;  // (1/n) sum_i entry(S[i], i)
    Tensor matrix;       // k x n
};

/// Entries <z, z-> - <z, z+> on L2-normalized embeddings, all three through head j.
TclLoss tcl_loss(const TclModel& model, const TripletBatch& batch, const AssignmentMatrix& S);

/// Loss over the triplets in `subset` (all when empty) and its gradients.
double tcl_objective_and_grads(TclModel& model, const TripletBatch& batch, const AssignmentMatrix& S,
                               std::span<const std::size_t> subset, ParamGrads& grads);

double tcl_grad_step(TclModel& model, const TripletBatch& batch, const AssignmentMatrix& S, Optimizer& opt,
                     std::span<const std::size_t> subset = {});

/// Mean pairwise cosine similarity within and between classes of embedding rows.
struct CosineSummary {
    double within = 0.0;
    double between = 0.0;
};
CosineSummary cosine_summary(const Tensor& embeddings, std::span<const int> labels);

}  // namespace tenrep
