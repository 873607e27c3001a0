#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tenrep/tensor.hpp"

namespace tenrep {

/// Adjusted Rand Index of two labelings of the same n >= 2 points; 1 when both partitions are trivial.
double ari(std::span<const int> a, std::span<const int> b);
double ari(std::span<const std::size_t> a, std::span<const int> b);

/// Mean over all entries of (A - B)^2.
double mse(const Tensor& A, const Tensor& B);

struct TsneOptions {
    double perplexity = 30.0;
    std::size_t iterations = 1000;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    std::size_t exaggeration_iters = 250;
    std::size_t momentum_switch_iter = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    std::uint64_t seed = 0;
};

struct TsneResult {
    Tensor embedding;                // n x 2
    std::vector<double> kl_history;  // KL(P || Q) after every iteration, unexaggerated P
};

/// Exact O(n^2) t-SNE of the rows of X (n <= 2000, perplexity < n).
TsneResult tsne(const Tensor& X, const TsneOptions& options);

/// Row-conditional affinities P(j|i) at the requested perplexity (tolerance 1e-5 on the entropy).
Tensor conditional_affinities(const Tensor& X, double perplexity);

}  // namespace tenrep
