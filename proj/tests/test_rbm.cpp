#include <doctest.h>

#include <cmath>
#include <random>

#include "support/oracles.hpp"
#include "tenrep/data.hpp"
#include "tenrep/metrics.hpp"
#include "tenrep/rbm.hpp"

using namespace tenrep;

namespace {

RbmParams seeded_rbm(std::size_t d, std::size_t h, std::uint64_t seed, double scale = 0.8)
{
    Rng rng(seed);
    RbmParams p = make_rbm(d, h, rng, scale);
    std::normal_distribution<double> n(0.0, scale);
    for (auto& v : p.a.data()) v = n(rng);
    for (auto& v : p.b.data()) v = n(rng);
    return p;
}

std::vector<double> bits(std::uint64_t s, std::size_t n)
{
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>((s >> i) & 1U);
    return v;
}

Tensor binary_rows(std::size_t n, std::size_t d, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.4);
    Tensor X = Tensor::matrix(n, d);
    for (auto& v : X.data()) v = coin(rng) ? 1.0 : 0.0;
    return X;
}

double cosine(const RbmGrads& g, const RbmGrads& h)
{
    double gh = 0, gg = 0, hh = 0;
    for (auto [a, b] : {std::pair{&g.W, &h.W}, std::pair{&g.a, &h.a}, std::pair{&g.b, &h.b}}) {
        gh += dot(a->data(), b->data());
        gg += dot(a->data(), a->data());
        hh += dot(b->data(), b->data());
    }
    return gh / std::sqrt(gg * hh);
}

}  // namespace

TEST_SUITE("rbm")
{
    TEST_CASE("energy")
    {
        RbmParams p = seeded_rbm(3, 2, 1);
        CHECK(energy(p, std::vector<double>{0, 0, 0}, std::vector<double>{0, 0}) == 0.0);
        for (std::uint64_t sx = 0; sx < 8; ++sx)
            for (std::uint64_t sz = 0; sz < 4; ++sz) {
                const auto x = bits(sx, 3), z = bits(sz, 2);
                CHECK(energy(p, x, z) == doctest::Approx(oracle::rbm_energy_loops(p, x, z)).epsilon(1e-14));
                RbmParams twice = p;
                for (auto& w : twice.W.data()) w *= 2.0;
                double xwz = 0;
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 2; ++j) xwz += x[i] * p.W(i, j) * z[j];
                CHECK(energy(twice, x, z) - energy(p, x, z) == doctest::Approx(-xwz));
            }
        RbmParams decoupled = p;
        decoupled.W.fill(0.0);
        const std::vector<double> x{1, 0, 1}, z{0, 1};
        CHECK(energy(decoupled, x, z) == doctest::Approx(-(p.a[0] + p.a[2]) - p.b[1]));
        CHECK_THROWS(energy(p, std::vector<double>{0.5, 0, 1}, z));
    }

    TEST_CASE("free energy")
    {
        const RbmParams zero = make_rbm(5, 4);
        CHECK(free_energy(zero, std::vector<double>{1, 0, 1, 1, 0}) == doctest::Approx(-4 * std::log(2.0)));
        const RbmParams p = seeded_rbm(4, 3, 2);
        for (std::uint64_t s = 0; s < 16; ++s) {
            const auto x = bits(s, 4);
            CHECK(oracle::rel_err(std::exp(-free_energy(p, x)), std::exp(-oracle::rbm_free_energy_enum(p, x)), 0) <
                  1e-10);
            RbmParams shifted = p;
            shifted.a[2] += 0.3;
            CHECK(free_energy(shifted, x) == doctest::Approx(free_energy(p, x) - 0.3 * x[2]).epsilon(1e-13));
        }
    }

    TEST_CASE("partition function")
    {
        CHECK(partition_exact(make_rbm(2, 1)) == doctest::Approx(8.0).epsilon(1e-14));
        const RbmParams p = seeded_rbm(3, 2, 3);
        CHECK(oracle::rel_err(partition_exact(p), oracle::rbm_partition_enum(p), 0) < 1e-10);
        const double logA = log_partition(p);
        for (std::uint64_t s = 0; s < 8; ++s) CHECK(logA >= -free_energy(p, bits(s, 3)));
        CHECK_THROWS(log_partition(make_rbm(17, 1)));
    }

    TEST_CASE("model probabilities sum to one")
    {
        for (std::size_t d : {1u, 4u, 7u, 10u}) {
            const RbmParams p = seeded_rbm(d, 3, d);
            const double logA = log_partition(p);
            double total = 0.0;
            for (std::uint64_t s = 0; s < (std::uint64_t{1} << d); ++s) total += std::exp(-free_energy(p, bits(s, d)) - logA);
            CHECK(std::abs(total - 1.0) < 1e-8);
        }
    }

    TEST_CASE("exact log-likelihood")
    {
        const Tensor X = binary_rows(9, 5, 4);
        CHECK(exact_loglik(make_rbm(5, 3), X) == doctest::Approx(-9 * 5 * std::log(2.0)));
        const RbmParams p = seeded_rbm(5, 3, 5);
        Tensor rep = Tensor::matrix(6, 5);
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t c = 0; c < 5; ++c) rep(r, c) = X(0, c);
        CHECK(exact_loglik(p, rep) == doctest::Approx(6 * exact_loglik(p, select_rows(X, std::vector<std::size_t>{0}))));
    }

    TEST_CASE("exact log-likelihood gradient matches finite differences")
    {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            RbmParams p = seeded_rbm(5, 3, 100 + seed, 0.5);
            const Tensor X = binary_rows(8, 5, seed);
            const RbmGrads g = exact_loglik_grad(p, X);
            const auto res = oracle::check_gradients({&p.W, &p.a, &p.b}, {g.W, g.a, g.b},
                                                     [&] { return exact_loglik(p, X); }, seed, 15);
            CAPTURE(seed);
            CHECK(res.max_rel_err < 1e-5);
        }
    }

    TEST_CASE("exact-gradient ascent is monotone")
    {
        RbmParams p = seeded_rbm(6, 3, 9, 0.1);
        const Tensor X = binary_rows(30, 6, 9);
        double prev = exact_loglik(p, X);
        bool monotone = true;
        for (int step = 0; step < 200; ++step) {
            exact_gradient_step(p, X, 0.02);
            const double cur = exact_loglik(p, X);
            monotone = monotone && cur >= prev;
            prev = cur;
        }
        CHECK(monotone);
    }

    TEST_CASE("cd steps")
    {
        RbmParams p = seeded_rbm(6, 3, 11);
        const RbmParams before = p;
        const Tensor X = binary_rows(10, 6, 11);
        cd_step(p, X, 1, 0.0, std::uint64_t{5});
        CHECK(p.W == before.W);
        CHECK(p.a == before.a);

        RbmParams q1 = before, q2 = before;
        cd_step(q1, X, 2, 0.1, std::uint64_t{77});
        cd_step(q2, X, 2, 0.1, std::uint64_t{77});
        CHECK(q1.W == q2.W);
        CHECK(q1.b == q2.b);
        CHECK_THROWS(cd_step(q1, Tensor::matrix(2, 6, 0.5), 1, 0.1, std::uint64_t{0}));
    }

    TEST_CASE("cd-1 points along the exact gradient on average")
    {
        const RbmParams p = seeded_rbm(6, 3, 12, 0.5);
        const Tensor X = binary_rows(40, 6, 12);
        RbmGrads mean = make_rbm(6, 3);
        Rng rng(3);
        for (int b = 0; b < 50; ++b) {
            const RbmGrads g = cd_gradient(p, X, 1, rng);
            for (auto [dst, src] : {std::pair{&mean.W, &g.W}, std::pair{&mean.a, &g.a}, std::pair{&mean.b, &g.b}})
                for (std::size_t e = 0; e < dst->size(); ++e) (*dst)[e] += (*src)[e] / 50.0;
        }
        CHECK(cosine(mean, exact_loglik_grad(p, X)) > 0.0);
    }

    TEST_CASE("mean-field reconstruction")
    {
        const auto half = reconstruct(make_rbm(4, 2), std::vector<double>{1, 0, 1, 1});
        CHECK(half == std::vector<double>(4, 0.5));
        const RbmParams p = seeded_rbm(5, 3, 13, 2.0);
        const std::vector<double> x{1, 1, 0, 0, 1};
        const auto r = reconstruct(p, x);
        std::vector<double> h(3);
        for (int j = 0; j < 3; ++j) {
            double act = p.b[j];
            for (int i = 0; i < 5; ++i) act += p.W(i, j) * x[i];
            h[j] = 1.0 / (1.0 + std::exp(-act));
        }
        for (int i = 0; i < 5; ++i) {
            double act = p.a[i];
            for (int j = 0; j < 3; ++j) act += p.W(i, j) * h[j];
            CHECK(r[i] == doctest::Approx(1.0 / (1.0 + std::exp(-act))).epsilon(1e-14));
            CHECK(r[i] > 0.0);
            CHECK(r[i] < 1.0);
        }
    }

    TEST_CASE("binarize")
    {
        const Tensor b = binarize(Tensor::from({0.2, 0.5, 0.9}));
        CHECK(b == Tensor::from({0.0, 1.0, 1.0}));
    }

    TEST_CASE("one-cluster trbm follows the plain rbm trajectory")
    {
        const Tensor X = binary_rows(12, 6, 14);
        const RbmParams start = seeded_rbm(6, 3, 14, 0.05);
        TrbmOptions opt;
        opt.epochs = 15;
        opt.seed = 21;
        const auto r = trbm_assign_and_train({start}, X, AssignmentMatrix(1, std::vector<std::size_t>(12, 0)), opt);
        RbmParams plain = start;
        Rng rng(cluster_stream_seed(21, 0));
        for (int e = 0; e < 15; ++e) cd_step(plain, X, 1, opt.learning_rate, rng);
        CHECK(r.models[0].W == plain.W);
        CHECK(r.models[0].b == plain.b);
        for (auto a : r.assignment.labels()) CHECK(a == 0);
    }

    TEST_CASE("two pattern families separate")
    {
        const Dataset data = gen_synthetic(SyntheticKind::binary_families, 0);
        TrbmOptions opt;
        opt.epochs = 300;
        opt.seed = 0;
        Rng rng(0);
        const std::size_t d = data.X.dim(1);
        std::vector<RbmParams> models{make_rbm(d, 6, rng), make_rbm(d, 6, rng)};
        const auto init = kmeanspp_init(data.X, 2, 0);
        const auto r = trbm_assign_and_train(models, data.X, init, opt);
        CHECK(ari(r.assignment.labels(), data.labels) == doctest::Approx(1.0));
    }
}
