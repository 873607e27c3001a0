#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tenrep/tensor.hpp"

namespace tenrep {

/// Hard cluster assignment: assign[i] in [0, k) for every sample i.
class AssignmentMatrix {
public:
    AssignmentMatrix() = default;
    AssignmentMatrix(std::size_t k, std::vector<std::size_t> assign);

    std::size_t k() const noexcept { return k_; }
    std::size_t n() const noexcept { return assign_.size(); }
    std::size_t operator[](std::size_t i) const { return assign_[i]; }
    const std::vector<std::size_t>& labels() const noexcept { return assign_; }

    /// Indices of the samples in cluster j, ascending.
    std::vector<std::size_t> members(std::size_t j) const;
    std::vector<std::size_t> counts() const;
    /// Dense k x n indicator view of the assignment.
    Tensor indicator() const;

    bool operator==(const AssignmentMatrix&) const = default;

private:
    std::size_t k_ = 0;
    std::vector<std::size_t> assign_;
};

struct ClusterCenters {
    Tensor centers;                   // k x d
    std::vector<std::size_t> counts;  // samples per cluster

    std::size_t k() const { return centers.empty() ? 0 : centers.dim(0); }
    std::span<const double> center(std::size_t j) const { return centers.row(j); }
};

/// k-means++ seeding on the rows of X (n x d). Returns the k chosen seed rows.
std::vector<std::size_t> kmeanspp_seeds(const Tensor& X, std::size_t k, std::uint64_t seed);

/// k-means++ seeding followed by nearest-seed assignment.
AssignmentMatrix kmeanspp_init(const Tensor& X, std::size_t k, std::uint64_t seed);

/// Column-wise argmin of a k x n loss matrix, ties to the lowest index.
AssignmentMatrix lloyd_step(const Tensor& loss_matrix);

/// Sum over i of loss_matrix(assign[i], i).
double masked_objective(const Tensor& loss_matrix, const AssignmentMatrix& S);

/**
 * Per-cluster means of X under S. A cluster with no members keeps its row
 * from `previous` when given, otherwise the global mean.
 */
ClusterCenters compute_centers(const Tensor& X, const AssignmentMatrix& S,
                               const ClusterCenters* previous = nullptr);

/// x - c
std::vector<double> center(std::span<const double> x, std::span<const double> c);

/// Every row of X minus c.
Tensor center_rows(const Tensor& X, std::span<const double> c);

struct KMeansResult {
    AssignmentMatrix assignment;
    ClusterCenters centers;
    std::size_t iterations = 0;
};

/// Plain k-means (k-means++ seeding, Lloyd iterations until stable or max_iter).
KMeansResult kmeans(const Tensor& X, std::size_t k, std::uint64_t seed, std::size_t max_iter = 300);

}  // namespace tenrep
