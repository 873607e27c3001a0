#include "tenrep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>

namespace tenrep {

namespace {

double choose2(double m)
{
    return m * (m - 1.0) / 2.0;
}

template <class A>
double ari_impl(std::span<const A> a, std::span<const int> b)
{
    if (a.size() != b.size())
        throw ShapeError("ari: labelings have lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    if (a.size() < 2)
        throw std::invalid_argument("ari needs at least two points");
    std::map<std::pair<long long, long long>, double> table;
    std::map<long long, double> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto x = static_cast<long long>(a[i]);
        const auto y = static_cast<long long>(b[i]);
        table[{x, y}] += 1.0;
        rows[x] += 1.0;
        cols[y] += 1.0;
    }
    double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [key, count] : table) index += choose2(count);
    for (const auto& [key, count] : rows) sum_rows += choose2(count);
    for (const auto& [key, count] : cols) sum_cols += choose2(count);
    const double expected = sum_rows * sum_cols / choose2(static_cast<double>(a.size()));
    const double max_index = 0.5 * (sum_rows + sum_cols);
    const double num = index - expected;
    const double den = max_index - expected;
    if (den == 0.0)
        return num == 0.0 ? 1.0 : 0.0;
    return num / den;
}

}  // namespace

double ari(std::span<const int> a, std::span<const int> b)
{
    return ari_impl(a, b);
}

double ari(std::span<const std::size_t> a, std::span<const int> b)
{
    return ari_impl(a, b);
}

double mse(const Tensor& A, const Tensor& B)
{
    if (A.shape() != B.shape())
        throw ShapeError("mse: shapes " + shape_string(A.shape()) + " and " + shape_string(B.shape()) + " differ");
    if (A.empty())
        return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) {
        const double e = A[i] - B[i];
        acc += e * e;
    }
    return acc / static_cast<double>(A.size());
}

namespace {

constexpr double entropy_tol = 1e-5;
constexpr std::size_t max_search_steps = 200;
constexpr double min_probability = 1e-12;

Tensor pairwise_sq_distances(const Tensor& X)
{
    const auto n = X.dim(0);
    Tensor D = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) D(i, j) = D(j, i) = squared_distance(X.row(i), X.row(j));
    return D;
}

}  // namespace

Tensor conditional_affinities(const Tensor& X, double perplexity)
{
    const auto n = X.dim(0);
    if (n < 2)
        throw std::invalid_argument("t-SNE needs at least two points");
    if (!(perplexity > 0.0) || perplexity > static_cast<double>(n - 1))
        throw std::invalid_argument("perplexity " + std::to_string(perplexity) + " is infeasible for " +
                                    std::to_string(n) + " points");
    const Tensor D = pairwise_sq_distances(X);
    const double target = std::log(perplexity);
    Tensor P = Tensor::matrix(n, n);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) dmin = std::min(dmin, D(i, j));
        for (std::size_t step = 0; step < max_search_steps; ++step) {
            // distances are shifted by their minimum so exp() cannot underflow to an all-zero row
            double sum = 0.0, weighted = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] = j == i ? 0.0 : std::exp(-(D(i, j) - dmin) * beta);
                sum += row[j];
                weighted += (D(i, j) - dmin) * row[j];
            }
            const double H = std::log(sum) + beta * weighted / sum;
            for (auto& v : row) v /= sum;
            const double diff = H - target;
            if (std::abs(diff) < entropy_tol)
                break;
            if (diff > 0.0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        std::copy(row.begin(), row.end(), P.row(i).begin());
    }
    return P;
}

TsneResult tsne(const Tensor& X, const TsneOptions& opt)
{
    if (X.rank() < 2)
        throw ShapeError("tsne expects an n x p matrix");
    const auto n = X.dim(0);
    if (n > 2000)
        throw std::invalid_argument("exact t-SNE is limited to 2000 points");
    const Tensor cond = conditional_affinities(X, opt.perplexity);
    Tensor P = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) P(i, j) = std::max((cond(i, j) + cond(j, i)) / (2.0 * static_cast<double>(n)), min_probability);

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> init(0.0, 1e-2);
    Tensor Y = Tensor::matrix(n, 2);
    for (auto& v : Y.data()) v = init(rng);
    Tensor update = Tensor::matrix(n, 2);
    Tensor gains = Tensor::matrix(n, 2, 1.0);
    Tensor grad = Tensor::matrix(n, 2);
    Tensor num = Tensor::matrix(n, n);

    TsneResult result;
    result.kl_history.reserve(opt.iterations);
    for (std::size_t it = 0; it < opt.iterations; ++it) {
        const double exaggeration = it < opt.exaggeration_iters ? opt.early_exaggeration : 1.0;
        const double momentum = it < opt.momentum_switch_iter ? opt.initial_momentum : opt.final_momentum;
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double q = 1.0 / (1.0 + squared_distance(Y.row(i), Y.row(j)));
                num(i, j) = num(j, i) = q;
                z += 2.0 * q;
            }
        grad.fill(0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j)
                    continue;
                const double mult = 4.0 * (exaggeration * P(i, j) - num(i, j) / z) * num(i, j);
                grad(i, 0) += mult * (Y(i, 0) - Y(j, 0));
                grad(i, 1) += mult * (Y(i, 1) - Y(j, 1));
            }
        for (std::size_t e = 0; e < Y.size(); ++e) {
            const bool same_sign = (grad[e] > 0.0) == (update[e] > 0.0);
            gains[e] = same_sign ? std::max(gains[e] * 0.8, 0.01) : gains[e] + 0.2;
            update[e] = momentum * update[e] - opt.learning_rate * gains[e] * grad[e];
            Y[e] += update[e];
        }
        double mean0 = 0.0, mean1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mean0 += Y(i, 0);
            mean1 += Y(i, 1);
        }
        mean0 /= static_cast<double>(n);
        mean1 /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            Y(i, 0) -= mean0;
            Y(i, 1) -= mean1;
        }
        Y.require_finite("tsne embedding");

        double zq = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) zq += 2.0 / (1.0 + squared_distance(Y.row(i), Y.row(j)));
        double kl = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j)
                    continue;
                const double q = std::max(1.0 / (1.0 + squared_distance(Y.row(i), Y.row(j))) / zq, min_probability);
                kl += P(i, j) * std::log(P(i, j) / q);
            }
        result.kl_history.push_back(kl);
    }
    result.embedding = std::move(Y);
    return result;
}

}  // namespace tenrep
