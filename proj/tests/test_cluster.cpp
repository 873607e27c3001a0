#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "support/oracles.hpp"
#include "tenrep/cluster.hpp"

using namespace tenrep;

namespace {

/// Same partition up to relabeling.
bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b)
{
    std::map<std::size_t, std::size_t> ab, ba;
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto [x, fresh_a] = ab.emplace(a[i], b[i]);
        auto [y, fresh_b] = ba.emplace(b[i], a[i]);
        if (x->second != b[i] || y->second != a[i])
            return false;
    }
    return true;
}

/// Independent k-means++ seeding and nearest-seed assignment.
std::vector<std::size_t> kmeanspp_oracle(const Tensor& X, std::size_t k, std::uint64_t seed)
{
    const std::size_t n = X.dim(0), d = X.dim(1);
    std::mt19937_64 rng(seed * 7919 + 1);
    std::vector<std::size_t> seeds{std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)};
    auto d2 = [&](std::size_t i, std::size_t s) {
        double acc = 0;
        for (std::size_t c = 0; c < d; ++c) acc += (X(i, c) - X(s, c)) * (X(i, c) - X(s, c));
        return acc;
    };
    while (seeds.size() < k) {
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = INFINITY;
            for (auto s : seeds) w[i] = std::min(w[i], d2(i, s));
        }
        seeds.push_back(std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng));
    }
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (d2(i, seeds[j]) < d2(i, seeds[best])) best = j;
        out[i] = best;
    }
    return out;
}

Tensor blobs(std::uint64_t seed)
{
    const double centers[3][2] = {{0, 0}, {10, 0}, {0, 10}};
    Tensor X = Tensor::matrix(12, 2);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> jitter(0.0, 0.1);
    for (std::size_t i = 0; i < 12; ++i) {
        X(i, 0) = centers[i % 3][0] + jitter(rng);
        X(i, 1) = centers[i % 3][1] + jitter(rng);
    }
    return X;
}

}  // namespace

TEST_SUITE("cluster")
{
    TEST_CASE("kmeans++ basics")
    {
        const Tensor X = blobs(1);
        const auto one = kmeanspp_init(X, 1, 5);
        for (auto a : one.labels()) CHECK(a == 0);

        Tensor two = Tensor::matrix(2, 2);
        two(1, 0) = two(1, 1) = 10.0;
        for (std::uint64_t s = 0; s < 10; ++s) CHECK(kmeanspp_init(two, 2, s)[0] != kmeanspp_init(two, 2, s)[1]);

        CHECK_THROWS(kmeanspp_init(two, 3, 0));
        CHECK_THROWS(kmeanspp_init(Tensor(), 1, 0));
    }

    TEST_CASE("kmeans++ on tight blobs matches an independent seeding")
    {
        for (std::uint64_t s = 0; s < 20; ++s) {
            const Tensor X = blobs(s);
            CHECK(same_partition(kmeanspp_init(X, 3, s).labels(), kmeanspp_oracle(X, 3, s)));
        }
    }

    TEST_CASE("kmeans++ is reproducible per seed")
    {
        Rng rng(3);
        Tensor X = Tensor::matrix(40, 3);
        std::normal_distribution<double> n;
        for (auto& v : X.data()) v = n(rng);
        CHECK(kmeanspp_seeds(X, 4, 11) == kmeanspp_seeds(X, 4, 11));
        CHECK(kmeanspp_init(X, 4, 11) == kmeanspp_init(X, 4, 11));
    }

    TEST_CASE("lloyd step argmin and ties")
    {
        Tensor L = Tensor::matrix(2, 2);
        L(0, 0) = 1.0;
        L(1, 0) = 2.0;
        L(0, 1) = 5.0;
        L(1, 1) = 5.0;
        const auto S = lloyd_step(L);
        CHECK(S[0] == 0);
        CHECK(S[1] == 0);

        Rng rng(8);
        std::uniform_real_distribution<double> u(-1, 1);
        Tensor R = Tensor::matrix(4, 20);
        for (auto& v : R.data()) v = u(rng);
        const auto T = lloyd_step(R);
        for (std::size_t i = 0; i < 20; ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < 4; ++j)
                if (R(j, i) < R(best, i)) best = j;
            CHECK(T[i] == best);
        }

        L(1, 1) = NAN;
        CHECK_THROWS_AS(lloyd_step(L), NumericError);
    }

    TEST_CASE("lloyd step is optimal over every assignment for small instances")
    {
        Rng rng(21);
        std::uniform_real_distribution<double> u(0, 3);
        for (std::size_t k = 1; k <= 3; ++k)
            for (std::size_t n = 1; n <= 8; n += 3) {
                Tensor L = Tensor::matrix(k, n);
                for (auto& v : L.data()) v = u(rng);
                const double got = masked_objective(L, lloyd_step(L));
                std::size_t total = 1;
                for (std::size_t i = 0; i < n; ++i) total *= k;
                for (std::size_t code = 0; code < total; ++code) {
                    std::vector<std::size_t> a(n);
                    for (std::size_t i = 0, c = code; i < n; ++i, c /= k) a[i] = c % k;
                    CHECK(got <= masked_objective(L, AssignmentMatrix(k, a)));
                }
            }
    }

    TEST_CASE("centers")
    {
        Tensor X = Tensor::matrix(2, 2);
        X(1, 0) = 2.0;
        const auto c = compute_centers(X, AssignmentMatrix(1, {0, 0}));
        CHECK(c.centers(0, 0) == 1.0);
        CHECK(c.centers(0, 1) == 0.0);

        Rng rng(4);
        std::normal_distribution<double> n;
        Tensor Y = Tensor::matrix(30, 3);
        for (auto& v : Y.data()) v = n(rng);
        std::vector<std::size_t> a(30);
        for (std::size_t i = 0; i < 30; ++i) a[i] = (i * 7) % 3;
        const auto cc = compute_centers(Y, AssignmentMatrix(3, a));
        for (std::size_t j = 0; j < 3; ++j) {
            std::vector<double> sum(3, 0.0);
            double count = 0;
            for (std::size_t i = 0; i < 30; ++i)
                if (a[i] == j) {
                    for (std::size_t f = 0; f < 3; ++f) sum[f] += Y(i, f);
                    count += 1;
                }
            for (std::size_t f = 0; f < 3; ++f) CHECK(cc.centers(j, f) == doctest::Approx(sum[f] / count));
            CHECK(cc.counts[j] == static_cast<std::size_t>(count));
        }

        // relabeling clusters permutes the center rows
        std::vector<std::size_t> b(30);
        const std::size_t perm[3] = {2, 0, 1};
        for (std::size_t i = 0; i < 30; ++i) b[i] = perm[a[i]];
        const auto cp = compute_centers(Y, AssignmentMatrix(3, b));
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t f = 0; f < 3; ++f) CHECK(cp.centers(perm[j], f) == cc.centers(j, f));
    }

    TEST_CASE("an empty cluster keeps its previous center or falls back to the global mean")
    {
        Tensor X = Tensor::matrix(3, 1);
        X(0, 0) = 1.0;
        X(1, 0) = 2.0;
        X(2, 0) = 6.0;
        const AssignmentMatrix S(2, {0, 0, 0});
        const auto first = compute_centers(X, S);
        CHECK(first.centers(1, 0) == doctest::Approx(3.0));
        ClusterCenters prev;
        prev.centers = Tensor::matrix(2, 1);
        prev.centers(1, 0) = -4.0;
        prev.counts = {1, 1};
        CHECK(compute_centers(X, S, &prev).centers(1, 0) == -4.0);
        CHECK(compute_centers(X, S, &prev).counts[1] == 0);
    }

    TEST_CASE("centering")
    {
        const std::vector<double> x{3, 1}, c{1, 1}, zero{0, 0};
        CHECK(center(x, c) == std::vector<double>{2, 0});
        CHECK(center(x, x) == zero);
        CHECK(center(x, zero) == x);
        CHECK_THROWS_AS(center(x, std::vector<double>{1}), ShapeError);
    }

    TEST_CASE("assignment views")
    {
        const AssignmentMatrix S(3, {2, 0, 2, 1});
        CHECK(S.members(2) == std::vector<std::size_t>{0, 2});
        CHECK(S.counts() == std::vector<std::size_t>{1, 1, 2});
        const Tensor I = S.indicator();
        for (std::size_t i = 0; i < 4; ++i) {
            double col = 0;
            for (std::size_t j = 0; j < 3; ++j) col += I(j, i);
            CHECK(col == 1.0);
        }
        CHECK_THROWS(AssignmentMatrix(2, {0, 2}));
    }

    TEST_CASE("kmeans recovers tight blobs")
    {
        const Tensor X = blobs(2);
        const auto r = kmeans(X, 3, 0);
        std::vector<std::size_t> truth(12);
        for (std::size_t i = 0; i < 12; ++i) truth[i] = i % 3;
        CHECK(same_partition(r.assignment.labels(), truth));
    }
}
