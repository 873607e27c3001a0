#include "tenrep/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace tenrep {

AssignmentMatrix::AssignmentMatrix(std::size_t k, std::vector<std::size_t> assign) : k_(k), assign_(std::move(assign))
{
    if (k_ == 0)
        throw std::invalid_argument("assignment needs k >= 1");
    for (auto a : assign_)
        if (a >= k_)
            throw std::invalid_argument("cluster index " + std::to_string(a) + " out of range for k=" +
                                        std::to_string(k_));
}

std::vector<std::size_t> AssignmentMatrix::members(std::size_t j) const
{
    std::vector<std::size_t> m;
    for (std::size_t i = 0; i < assign_.size(); ++i)
        if (assign_[i] == j) m.push_back(i);
    return m;
}

std::vector<std::size_t> AssignmentMatrix::counts() const
{
    std::vector<std::size_t> c(k_, 0);
    for (auto a : assign_) ++c[a];
    return c;
}

Tensor AssignmentMatrix::indicator() const
{
    Tensor s = Tensor::matrix(k_, assign_.size());
    for (std::size_t i = 0; i < assign_.size(); ++i) s(assign_[i], i) = 1.0;
    return s;
}

namespace {

void require_samples(const Tensor& X, std::size_t k)
{
    if (X.rank() < 2 || X.dim(0) == 0)
        throw std::invalid_argument("empty dataset");
    if (k == 0)
        throw std::invalid_argument("k must be at least 1");
    if (k > X.dim(0))
        throw std::invalid_argument("k=" + std::to_string(k) + " exceeds sample count " + std::to_string(X.dim(0)));
}

std::vector<std::size_t> nearest(const Tensor& X, const Tensor& centers)
{
    const auto n = X.dim(0), k = centers.dim(0);
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) {
            const double d = squared_distance(X.row(i), centers.row(j));
            if (d < best) {
                best = d;
                out[i] = j;
            }
        }
    }
    return out;
}

}  // namespace

std::vector<std::size_t> kmeanspp_seeds(const Tensor& X, std::size_t k, std::uint64_t seed)
{
    require_samples(X, k);
    const auto n = X.dim(0);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen;
    chosen.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(X.row(i), X.row(chosen[0]));

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (chosen.size() < k) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick = 0;
        if (total > 0.0) {
            const double r = unit(rng) * total;
            double acc = 0.0;
            bool found = false;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (r < acc) {
                    pick = i;
                    found = true;
                    break;
                }
            }
            // r can reach total through rounding; take the last positive-weight point
            if (!found)
                for (std::size_t i = n; i-- > 0;)
                    if (d2[i] > 0.0) {
                        pick = i;
                        break;
                    }
        } else {
            // all remaining points coincide with a seed: fall back to the first unused index
            for (std::size_t i = 0; i < n; ++i)
                if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) {
                    pick = i;
                    break;
                }
        }
        chosen.push_back(pick);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(X.row(i), X.row(pick)));
    }
    return chosen;
}

AssignmentMatrix kmeanspp_init(const Tensor& X, std::size_t k, std::uint64_t seed)
{
    const auto seeds = kmeanspp_seeds(X, k, seed);
    return AssignmentMatrix(k, nearest(X, select_rows(X, seeds)));
}

AssignmentMatrix lloyd_step(const Tensor& loss_matrix)
{
    if (loss_matrix.rank() != 2 || loss_matrix.dim(0) == 0)
        throw ShapeError("lloyd_step expects a non-empty k x n loss matrix");
    loss_matrix.require_finite("lloyd_step");
    const auto k = loss_matrix.dim(0), n = loss_matrix.dim(1);
    std::vector<std::size_t> assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double best = loss_matrix(0, i);
        for (std::size_t j = 1; j < k; ++j)
            if (loss_matrix(j, i) < best) {
                best = loss_matrix(j, i);
                assign[i] = j;
            }
    }
    return AssignmentMatrix(k, std::move(assign));
}

double masked_objective(const Tensor& loss_matrix, const AssignmentMatrix& S)
{
    if (loss_matrix.rank() != 2 || loss_matrix.dim(0) != S.k() || loss_matrix.dim(1) != S.n())
        throw ShapeError("masked_objective: loss matrix does not match assignment");
    double s = 0.0;
    for (std::size_t i = 0; i < S.n(); ++i) s += loss_matrix(S[i], i);
    return s;
}

ClusterCenters compute_centers(const Tensor& X, const AssignmentMatrix& S, const ClusterCenters* previous)
{
    if (X.rank() != 2 || X.dim(0) != S.n())
        throw ShapeError("compute_centers: dataset and assignment sizes differ");
    const auto n = X.dim(0), d = X.dim(1), k = S.k();
    ClusterCenters out;
    out.centers = Tensor::matrix(k, d);
    out.counts.assign(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        auto c = out.centers.row(S[i]);
        auto x = X.row(i);
        for (std::size_t e = 0; e < d; ++e) c[e] += x[e];
        ++out.counts[S[i]];
    }

    std::vector<double> global(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t e = 0; e < d; ++e) global[e] += X(i, e);
    for (auto& g : global) g /= static_cast<double>(n);

    for (std::size_t j = 0; j < k; ++j) {
        auto c = out.centers.row(j);
        if (out.counts[j] > 0) {
            for (auto& v : c) v /= static_cast<double>(out.counts[j]);
        } else if (previous && previous->k() == k && previous->centers.dim(1) == d) {
            auto p = previous->center(j);
            std::copy(p.begin(), p.end(), c.begin());
        } else {
            std::copy(global.begin(), global.end(), c.begin());
        }
    }
    return out;
}

std::vector<double> center(std::span<const double> x, std::span<const double> c)
{
    if (x.size() != c.size())
        throw ShapeError("center: dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - c[i];
    return out;
}

Tensor center_rows(const Tensor& X, std::span<const double> c)
{
    if (X.row_size() != c.size())
        throw ShapeError("center_rows: dimension mismatch");
    Tensor out = X;
    for (std::size_t i = 0; i < X.dim(0); ++i) {
        auto r = out.row(i);
        for (std::size_t e = 0; e < c.size(); ++e) r[e] -= c[e];
    }
    return out;
}

KMeansResult kmeans(const Tensor& X, std::size_t k, std::uint64_t seed, std::size_t max_iter)
{
    KMeansResult r;
    r.assignment = kmeanspp_init(X, k, seed);
    r.centers = compute_centers(X, r.assignment);
    for (r.iterations = 0; r.iterations < max_iter; ++r.iterations) {
        AssignmentMatrix next(k, nearest(X, r.centers.centers));
        if (next == r.assignment)
            break;
        r.assignment = std::move(next);
        r.centers = compute_centers(X, r.assignment, &r.centers);
    }
    return r;
}

}  // namespace tenrep
