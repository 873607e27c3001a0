#include <doctest.h>

#include <cmath>
#include <random>

#include "support/oracles.hpp"
#include "tenrep/vae.hpp"

using namespace tenrep;

namespace {

Tensor random_matrix(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0)
{
    Tensor X = Tensor::matrix(n, d);
    std::normal_distribution<double> g(0.0, scale);
    for (auto& v : X.data()) v = g(rng);
    return X;
}

Tensor unit_matrix(std::size_t n, std::size_t d, Rng& rng)
{
    Tensor X = Tensor::matrix(n, d);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : X.data()) v = u(rng);
    return X;
}

void zero_all(std::vector<Network>& nets)
{
    for (auto& n : nets)
        for (Tensor* p : n.parameters()) p->fill(0.0);
}

ClusterCenters centers_of(Tensor C)
{
    ClusterCenters c;
    c.counts.assign(C.dim(0), 1);
    c.centers = std::move(C);
    return c;
}

std::vector<double> affine(const Network& net, std::vector<double> x)
{
    for (const auto& layer : net.layers()) {
        const auto& l = std::get<DenseLayer>(layer);
        std::vector<double> y(l.fan_out());
        for (std::size_t o = 0; o < y.size(); ++o) {
            double s = l.has_bias() ? l.bias[o] : 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) s += l.weight(o, i) * x[i];
            y[o] = l.activation == Activation::tanh ? std::tanh(s) : s;
        }
        x = std::move(y);
    }
    return x;
}

}  // namespace

TEST_SUITE("vae")
{
    TEST_CASE("encoder heads")
    {
        Rng rng(1);
        TvaeModel m = make_tvae(4, 6, 2, 2, ReconMode::mse_linear, rng);
        zero_all(m.mean_heads);
        zero_all(m.logvar_heads);
        const auto p = encode(m, std::vector<double>{1, 2, 3, 4}, 1);
        CHECK(p.mean == std::vector<double>{0, 0});
        CHECK(p.logvar == std::vector<double>{0, 0});

        TvaeModel same = make_tvae(4, 6, 2, 1, ReconMode::mse_linear, rng);
        same.logvar_heads[0] = same.mean_heads[0];
        const auto q = encode(same, std::vector<double>{0.1, -0.2, 0.3, 0.9}, 0);
        CHECK(q.mean == q.logvar);
    }

    TEST_CASE("encoder matches a straight-line evaluation of the centered input")
    {
        Rng rng(2);
        TvaeModel m = make_tvae(3, 5, 2, 2, ReconMode::mse_linear, rng);
        m.centers = centers_of(random_matrix(2, 3, rng));
        const std::vector<double> x{0.4, -1.0, 2.0};
        for (std::size_t j = 0; j < 2; ++j) {
            std::vector<double> xt(3);
            for (std::size_t f = 0; f < 3; ++f) xt[f] = x[f] - m.centers.centers(j, f);
            const auto h = affine(m.trunk, xt);
            const auto mu = affine(m.mean_heads[j], h), lv = affine(m.logvar_heads[j], h);
            const auto p = encode(m, x, j);
            for (std::size_t e = 0; e < 2; ++e) {
                CHECK(p.mean[e] == doctest::Approx(mu[e]).epsilon(1e-13));
                CHECK(p.logvar[e] == doctest::Approx(lv[e]).epsilon(1e-13));
            }
        }
    }

    TEST_CASE("reparameterization")
    {
        const std::vector<double> mu{0.5, -1.0}, lv{0.3, -0.7}, zero{0, 0}, eps{1.5, -0.5};
        CHECK(reparameterize(mu, lv, zero) == mu);
        const std::vector<double> unit{0, 0};
        const auto a = reparameterize(mu, unit, eps, ReparamMode::sigma);
        const auto b = reparameterize(mu, unit, eps, ReparamMode::variance);
        CHECK(a == b);
        CHECK(a[0] == doctest::Approx(2.0));
        CHECK(reparameterize(mu, lv, eps, ReparamMode::variance)[0] == doctest::Approx(0.5 + std::exp(0.3) * 1.5));
        CHECK_THROWS_AS(reparameterize(mu, lv, std::vector<double>{1}), ShapeError);
    }

    TEST_CASE("reparameterized samples have the target variance")
    {
        std::mt19937_64 rng(42);
        std::normal_distribution<double> n;
        const std::vector<double> mu{0.0}, lv{std::log(4.0)};
        double s = 0, s2 = 0;
        const int draws = 100000;
        for (int t = 0; t < draws; ++t) {
            const double z = reparameterize(mu, lv, std::vector<double>{n(rng)})[0];
            s += z;
            s2 += z * z;
        }
        const double var = s2 / draws - (s / draws) * (s / draws);
        CHECK(std::abs(var - 4.0) / 4.0 < 0.05);
    }

    TEST_CASE("kl term closed form and quadrature")
    {
        CHECK(kl_term(std::vector<double>{0}, std::vector<double>{0}) == 0.0);
        CHECK(kl_term(std::vector<double>{1}, std::vector<double>{0}) == doctest::Approx(0.5));
        Rng rng(5);
        std::uniform_real_distribution<double> mu(-2, 2), lv(-2, 1.5);
        for (int t = 0; t < 20; ++t) {
            const double m = mu(rng), l = lv(rng);
            CHECK(std::abs(kl_term(std::vector<double>{m}, std::vector<double>{l}) - oracle::kl_quadrature(m, l)) <
                  1e-6);
        }
    }

    TEST_CASE("kl term is zero only at the prior")
    {
        for (double m = -2; m <= 2; m += 0.25)
            for (double l = -2; l <= 2; l += 0.25) {
                const double kl = kl_term(std::vector<double>{m}, std::vector<double>{l});
                CHECK(kl >= 0.0);
                if (m != 0.0 || l != 0.0) CHECK(kl > 0.0);
            }
    }

    TEST_CASE("reconstruction terms")
    {
        const std::vector<double> x{0.2, -0.4, 1.0};
        CHECK(recon_loss(ReconMode::mse_linear, x, x) == 0.0);
        const std::vector<double> half(7, 0.5), logits(7, 0.0);
        CHECK(recon_loss(ReconMode::bce_sigmoid, half, logits) == doctest::Approx(7 * std::log(2.0)));

        Rng rng(8);
        std::uniform_real_distribution<double> t(0, 1), y(-4, 4);
        std::vector<double> target(10), out(10);
        double want_bce = 0, want_mse = 0;
        for (int i = 0; i < 10; ++i) {
            target[i] = t(rng);
            out[i] = y(rng);
            const double p = 1.0 / (1.0 + std::exp(-out[i]));
            want_bce -= target[i] * std::log(p) + (1 - target[i]) * std::log(1 - p);
            want_mse += 0.5 * (target[i] - out[i]) * (target[i] - out[i]);
        }
        CHECK(recon_loss(ReconMode::bce_sigmoid, target, out) == doctest::Approx(want_bce).epsilon(1e-12));
        CHECK(recon_loss(ReconMode::mse_linear, target, out) == doctest::Approx(want_mse).epsilon(1e-12));
        target[3] = 1.5;
        CHECK_THROWS(recon_loss(ReconMode::bce_sigmoid, target, out));
    }

    TEST_CASE("perfect reconstruction at the prior scores zero")
    {
        Rng rng(3);
        TvaeModel m = make_tvae(3, 4, 2, 1, ReconMode::mse_linear, rng);
        zero_all(m.mean_heads);
        zero_all(m.logvar_heads);
        zero_all(m.cluster_decoders);
        for (Tensor* p : m.shared_decoder.parameters()) p->fill(0.0);
        Tensor X = Tensor::matrix(1, 3);
        X(0, 0) = 0.3;
        X(0, 2) = -0.8;
        m.centers = centers_of(X);
        const Tensor L = tvae_loss_matrix(m, X, Tensor({1, 1, 2}));
        CHECK(L(0, 0) == 0.0);
    }

    TEST_CASE("one-cluster loss equals an independently computed VAE loss")
    {
        Rng rng(4);
        for (auto mode : {ReconMode::mse_linear, ReconMode::bce_sigmoid}) {
            TvaeModel m = make_tvae(5, 6, 2, 1, mode, rng);
            m.centered = false;
            const Tensor X = unit_matrix(6, 5, rng);
            const Tensor eps = random_matrix(6, 2, rng).reshaped({1, 6, 2});
            const Tensor L = tvae_loss_matrix(m, X, eps);
            for (std::size_t i = 0; i < 6; ++i) {
                const std::vector<double> x(X.row(i).begin(), X.row(i).end());
                const auto h = affine(m.trunk, x);
                const auto mu = affine(m.mean_heads[0], h), lv = affine(m.logvar_heads[0], h);
                std::vector<double> z(2);
                double kl = 0;
                for (int e = 0; e < 2; ++e) {
                    z[e] = mu[e] + std::exp(0.5 * lv[e]) * eps[i * 2 + e];
                    kl += 0.5 * (std::exp(lv[e]) + mu[e] * mu[e] - 1 - lv[e]);
                }
                const auto y = affine(m.shared_decoder, affine(m.cluster_decoders[0], z));
                double rec = 0;
                for (int f = 0; f < 5; ++f) {
                    if (mode == ReconMode::mse_linear) {
                        rec += 0.5 * (x[f] - y[f]) * (x[f] - y[f]);
                    } else {
                        const double p = 1.0 / (1.0 + std::exp(-y[f]));
                        rec -= x[f] * std::log(p) + (1 - x[f]) * std::log(1 - p);
                    }
                }
                CHECK(L(0, i) == doctest::Approx(rec + kl).epsilon(1e-11));
            }
        }
    }

    TEST_CASE("masked objective gradients with frozen noise match finite differences")
    {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(seed);
            const auto mode = seed % 2 ? ReconMode::bce_sigmoid : ReconMode::mse_linear;
            TvaeModel m = make_tvae(5, 6, 2, 3, mode, rng);
            m.reparam_mode = seed % 3 == 1 ? ReparamMode::variance : ReparamMode::sigma;
            const Tensor X = unit_matrix(9, 5, rng);
            m.centers = centers_of(unit_matrix(3, 5, rng));
            std::vector<std::size_t> a(9);
            for (std::size_t i = 0; i < 9; ++i) a[i] = (i * 2 + seed) % 3;
            const AssignmentMatrix S(3, a);
            const Tensor eps = random_matrix(9, 2, rng);
            Tensor eps3({3, 9, 2});
            for (std::size_t j = 0; j < 3; ++j)
                std::copy(eps.data().begin(), eps.data().end(), eps3.data().begin() + j * 18);
            ParamGrads grads;
            const double obj = tvae_objective_and_grads(m, X, S, eps, {}, grads);
            auto loss = [&] { return masked_objective(tvae_loss_matrix(m, X, eps3), S) / 9.0; };
            CHECK(obj == doctest::Approx(loss()).epsilon(1e-12));
            CAPTURE(seed);
            CHECK(oracle::check_gradients(m.parameters(), grads, loss, seed).max_rel_err < 1e-4);
        }
    }

    TEST_CASE("latent grid decoding")
    {
        Rng rng(6);
        TvaeModel bce = make_tvae(4, 5, 2, 2, ReconMode::bce_sigmoid, rng);
        TvaeModel mse = make_tvae(4, 5, 2, 2, ReconMode::mse_linear, rng);
        for (auto* m : {&bce, &mse}) {
            zero_all(m->cluster_decoders);
            for (Tensor* p : m->shared_decoder.parameters()) p->fill(0.0);
        }
        const std::vector<std::vector<double>> origin{{0.0, 0.0}};
        CHECK(sample_latent_grid(bce, 0, origin)[0] == std::vector<double>(4, 0.5));
        CHECK(sample_latent_grid(mse, 1, origin)[0] == std::vector<double>(4, 0.0));

        TvaeModel live = make_tvae(6, 8, 2, 2, ReconMode::bce_sigmoid, rng);
        const std::vector<std::vector<double>> one{{0.7, -1.1}};
        const auto raw = decode(live, one[0], 1);
        const auto got = sample_latent_grid(live, 1, one)[0];
        for (std::size_t e = 0; e < raw.size(); ++e) CHECK(got[e] == doctest::Approx(1.0 / (1.0 + std::exp(-raw[e]))));

        const auto grid = latent_grid(15, 2.0);
        CHECK(grid.size() == 225);
        CHECK(grid.front() == std::vector<double>{-2.0, -2.0});
        CHECK(grid.back() == std::vector<double>{2.0, 2.0});
        for (const auto& row : sample_latent_grid(live, 0, grid))
            for (double v : row) {
                CHECK(v > 0.0);
                CHECK(v < 1.0);
            }
    }

    TEST_CASE("noise shape is checked")
    {
        Rng rng(7);
        TvaeModel m = make_tvae(3, 4, 2, 2, ReconMode::mse_linear, rng);
        const Tensor X = random_matrix(5, 3, rng);
        CHECK_THROWS_AS(tvae_loss_matrix(m, X, Tensor({1, 5, 2})), ShapeError);
        ParamGrads g;
        CHECK_THROWS_AS(tvae_objective_and_grads(m, X, AssignmentMatrix(2, {0, 1, 0, 1, 0}), Tensor({5, 3}), {}, g),
                        ShapeError);
    }
}
