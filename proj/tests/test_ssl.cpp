#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <variant>

#include "support/oracles.hpp"
#include "tenrep/ssl.hpp"

using namespace tenrep;

namespace {

Tensor random_matrix(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0)
{
    Tensor X = Tensor::matrix(n, d);
    std::normal_distribution<double> g(0.0, scale);
    for (auto& v : X.data()) v = g(rng);
    return X;
}

/// Pearson chi-square statistic against a uniform expectation.
double chi_square(const std::map<std::size_t, double>& counts, std::size_t cells, double total)
{
    const double expected = total / static_cast<double>(cells);
    double chi = 0.0;
    for (const auto& [cell, c] : counts) chi += (c - expected) * (c - expected) / expected;
    chi += static_cast<double>(cells - counts.size()) * expected;
    return chi;
}

std::vector<double> unit(std::span<const double> v)
{
    const double n = std::sqrt(dot(v, v));
    std::vector<double> u(v.begin(), v.end());
    for (auto& x : u) x /= n;
    return u;
}

}  // namespace

TEST_SUITE("ssl")
{
    TEST_CASE("elastic transform at alpha zero is the identity bit for bit")
    {
        Rng rng(1);
        const Tensor img = random_matrix(28, 28, rng);
        for (std::uint64_t seed = 0; seed < 5; ++seed) CHECK(elastic_transform(img, 0.0, 3.0, seed) == img);
    }

    TEST_CASE("constant image stays constant")
    {
        const Tensor img({9, 7}, 0.37);
        const Tensor out = elastic_transform(img, 8.0, 2.0, 4);
        for (double v : out.data()) CHECK(v == doctest::Approx(0.37).epsilon(1e-14));
    }

    TEST_CASE("displacement grows with alpha")
    {
        double prev = 0.0;
        for (double alpha : {1.0, 4.0, 8.0}) {
            const auto f = elastic_displacement(28, 28, alpha, 3.0, 17);
            double mean = 0.0;
            for (std::size_t e = 0; e < f.dx.size(); ++e) mean += std::hypot(f.dx[e], f.dy[e]);
            mean /= static_cast<double>(f.dx.size());
            CHECK(mean > prev);
            prev = mean;
        }
        CHECK_THROWS(elastic_transform(Tensor({4, 4}), 1.0, 0.0, 0));
    }

    TEST_CASE("elastic transform is deterministic per seed and moves a textured image")
    {
        Rng rng(2);
        const Tensor img = random_matrix(12, 12, rng);
        CHECK(elastic_transform(img, 8.0, 3.0, 9) == elastic_transform(img, 8.0, 3.0, 9));
        CHECK_FALSE(elastic_transform(img, 8.0, 3.0, 9) == img);
    }

    TEST_CASE("unsupervised pairs")
    {
        Rng rng(3);
        const Tensor two = random_matrix(2, 25, rng);
        const auto b = gen_pairs_unsupervised(two, AssignmentMatrix(2, {0, 1}), 5, 5, {8.0, 2.0}, 1);
        CHECK(b.negative_index == std::vector<std::size_t>{1, 0});
        CHECK_FALSE(b.positives == b.anchors);
        const auto still = gen_pairs_unsupervised(two, AssignmentMatrix(2, {0, 1}), 5, 5, {0.0, 2.0}, 1);
        CHECK(still.positives == still.anchors);

        CHECK_THROWS(gen_pairs_unsupervised(two, AssignmentMatrix(1, {0, 0}), 5, 5, {}, 0));
        CHECK_THROWS(gen_pairs_unsupervised(two, AssignmentMatrix(2, {1, 1}), 5, 5, {}, 0));
    }

    TEST_CASE("unsupervised negatives are uniform over the other clusters")
    {
        Rng rng(4);
        const Tensor X = random_matrix(6, 25, rng);
        const AssignmentMatrix S(3, {0, 0, 1, 1, 2, 2});
        std::map<std::size_t, double> counts;
        const int draws = 1000;
        for (int s = 0; s < draws; ++s) {
            const auto b = gen_pairs_unsupervised(X, S, 5, 5, {1.0, 1.0}, static_cast<std::uint64_t>(s));
            for (std::size_t i = 0; i < 6; ++i) CHECK(S[b.negative_index[i]] != S[i]);
            counts[b.negative_index[0]] += 1;
        }
        CHECK(counts.count(0) == 0);
        CHECK(counts.count(1) == 0);
        // df = 3, p = 0.001
        CHECK(chi_square(counts, 4, draws) < 16.27);
    }

    TEST_CASE("supervised pairs")
    {
        Rng rng(5);
        const Tensor X = random_matrix(4, 3, rng);
        const std::vector<int> labels{0, 0, 1, 1};
        const auto b = gen_pairs_supervised(X, labels, 2);
        CHECK(b.positive_index == std::vector<std::size_t>{1, 0, 3, 2});

        const Tensor Y = random_matrix(12, 3, rng);
        const std::vector<int> three{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
        for (std::uint64_t s = 0; s < 20; ++s) {
            const auto t = gen_pairs_supervised(Y, three, s);
            for (std::size_t i = 0; i < 12; ++i) {
                CHECK(three[t.positive_index[i]] == three[i]);
                CHECK(t.positive_index[i] != i);
                CHECK(three[t.negative_index[i]] != three[i]);
            }
        }

        CHECK_THROWS(gen_pairs_supervised(X, std::vector<int>{0, 0, 0, 1}, 0));
    }

    TEST_CASE("supervised sampling is uniform over eligible candidates")
    {
        Rng rng(6);
        const Tensor X = random_matrix(7, 2, rng);
        const std::vector<int> labels{0, 0, 0, 0, 1, 1, 1};
        std::map<std::size_t, double> pos, neg;
        const int draws = 3000;
        for (int s = 0; s < draws; ++s) {
            const auto b = gen_pairs_supervised(X, labels, static_cast<std::uint64_t>(s));
            pos[b.positive_index[0]] += 1;
            neg[b.negative_index[0]] += 1;
        }
        // df = 2, p = 0.001
        CHECK(chi_square(pos, 3, draws) < 13.82);
        CHECK(chi_square(neg, 3, draws) < 13.82);
        CHECK(pos.count(0) == 0);
    }

    TEST_CASE("tcl loss entries")
    {
        Rng rng(7);
        TclModel m = make_tcl_dense(4, 6, 5, 2, rng);
        TripletBatch b;
        b.anchors = random_matrix(5, 4, rng);
        b.positives = random_matrix(5, 4, rng);
        b.negatives = b.positives;
        for (std::size_t i = 0; i < 5; ++i) b.anchor_index.push_back(i);
        const AssignmentMatrix S(2, {0, 1, 0, 1, 1});
        const auto same = tcl_loss(m, b, S);
        for (double v : same.matrix.data()) CHECK(v == 0.0);

        b.negatives = random_matrix(5, 4, rng);
        const auto loss = tcl_loss(m, b, S);
        double masked = 0.0;
        for (std::size_t j = 0; j < 2; ++j) {
            const Tensor za = tcl_embed(m, b.anchors, j), zp = tcl_embed(m, b.positives, j),
                         zn = tcl_embed(m, b.negatives, j);
            for (std::size_t i = 0; i < 5; ++i) {
                const auto a = unit(za.row(i)), p = unit(zp.row(i)), n = unit(zn.row(i));
                double want = 0.0;
                for (std::size_t e = 0; e < a.size(); ++e) want += a[e] * n[e] - a[e] * p[e];
                CHECK(loss.matrix(j, i) == doctest::Approx(want).epsilon(1e-12));
                CHECK(std::abs(loss.matrix(j, i)) <= 2.0);
                if (S[i] == j) masked += want;
            }
        }
        CHECK(loss.value == doctest::Approx(masked / 5.0));

        TripletBatch swapped = b;
        std::swap(swapped.positives, swapped.negatives);
        const auto flipped = tcl_loss(m, swapped, S);
        for (std::size_t e = 0; e < loss.matrix.size(); ++e) CHECK(flipped.matrix[e] == -loss.matrix[e]);
    }

    TEST_CASE("tcl gradients with frozen triplets match finite differences")
    {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(seed);
            const bool conv = seed % 2 == 1;
            TclModel m = conv ? make_tcl_conv(7, 7, 2, rng, 6, 4) : make_tcl_dense(6, 5, 4, 2, rng);
            // smooth activations keep central differences valid; relu derivatives are covered by the layer suite
            for (auto& layer : m.trunk.layers()) std::visit([](auto& l) { l.activation = Activation::tanh; }, layer);
            const std::size_t d = conv ? 49 : 6;
            TripletBatch b;
            b.anchors = random_matrix(6, d, rng);
            b.positives = random_matrix(6, d, rng);
            b.negatives = random_matrix(6, d, rng);
            for (std::size_t i = 0; i < 6; ++i) b.anchor_index.push_back(i);
            const AssignmentMatrix S(2, {0, 1, 1, 0, 1, 0});
            ParamGrads grads;
            const double obj = tcl_objective_and_grads(m, b, S, {}, grads);
            auto loss = [&] { return tcl_loss(m, b, S).value; };
            CHECK(obj == doctest::Approx(loss()).epsilon(1e-12));
            CAPTURE(seed);
            CHECK(oracle::check_gradients(m.parameters(), grads, loss, seed).max_rel_err < 1e-4);
        }
    }

    TEST_CASE("cosine summary")
    {
        Tensor Z = Tensor::matrix(4, 2);
        Z(0, 0) = Z(1, 0) = 1.0;
        Z(2, 1) = Z(3, 1) = 2.0;
        const auto c = cosine_summary(Z, std::vector<int>{0, 0, 1, 1});
        CHECK(c.within == doctest::Approx(1.0));
        CHECK(c.between == doctest::Approx(0.0));
    }

    TEST_CASE("conv trunk embeds images to the requested width")
    {
        Rng rng(8);
        TclModel m = make_tcl_conv(28, 28, 3, rng);
        const Tensor Z = tcl_embed(m, random_matrix(2, 784, rng), 2);
        CHECK(Z.shape() == Shape{2, 128});
    }
}
