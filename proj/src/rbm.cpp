#include "tenrep/rbm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace tenrep {

namespace {

double sigmoid(double x)
{
    return 1.0 / (1.0 + std::exp(-x));
}

double softplus(double x)
{
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

void require_binary(std::span<const double> v, const char* what)
{
    for (double e : v)
        if (e != 0.0 && e != 1.0)
            throw std::invalid_argument(std::string(what) + " must be binary, found " + std::to_string(e));
}

void check_visible(const RbmParams& p, std::size_t d)
{
    if (d != p.visible())
        throw ShapeError("rbm: expected " + std::to_string(p.visible()) + " visible units, got " + std::to_string(d));
}

// Calls f(x, weight) for every visible state x with weight exp(-F(x) - log A).
template <class F>
void for_each_visible_state(const RbmParams& p, F&& f)
{
    const auto d = p.visible();
    if (d > max_exact_visible)
        throw std::invalid_argument("exact enumeration limited to " + std::to_string(max_exact_visible) +
                                    " visible units, got " + std::to_string(d));
    const double logA = log_partition(p);
    std::vector<double> x(d);
    for (std::uint64_t s = 0; s < (std::uint64_t{1} << d); ++s) {
        for (std::size_t i = 0; i < d; ++i) x[i] = static_cast<double>((s >> i) & 1U);
        f(x, std::exp(-free_energy(p, x) - logA));
    }
}

void scale_add(RbmParams& p, const RbmGrads& g, double s)
{
    for (std::size_t e = 0; e < p.W.size(); ++e) p.W[e] += s * g.W[e];
    for (std::size_t e = 0; e < p.a.size(); ++e) p.a[e] += s * g.a[e];
    for (std::size_t e = 0; e < p.b.size(); ++e) p.b[e] += s * g.b[e];
    if (!p.W.all_finite() || !p.a.all_finite() || !p.b.all_finite())
        throw NumericError("rbm update produced non-finite parameters");
}

}  // namespace

RbmParams make_rbm(std::size_t visible, std::size_t hidden)
{
    return {Tensor({visible, hidden}), Tensor({visible}), Tensor({hidden})};
}

RbmParams make_rbm(std::size_t visible, std::size_t hidden, Rng& rng, double init_std)
{
    RbmParams p = make_rbm(visible, hidden);
    std::normal_distribution<double> n(0.0, init_std);
    for (auto& w : p.W.data()) w = n(rng);
    return p;
}

double energy(const RbmParams& p, std::span<const double> x, std::span<const double> z)
{
    check_visible(p, x.size());
    if (z.size() != p.hidden())
        throw ShapeError("rbm energy: hidden state has wrong length");
    require_binary(x, "visible state");
    require_binary(z, "hidden state");
    double e = -dot(x, p.a.data()) - dot(z, p.b.data());
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < z.size(); ++j) e -= x[i] * p.W(i, j) * z[j];
    return e;
}

double free_energy(const RbmParams& p, std::span<const double> x)
{
    check_visible(p, x.size());
    double f = -dot(x, p.a.data());
    const auto h = p.hidden();
    for (std::size_t j = 0; j < h; ++j) {
        double act = p.b[j];
        for (std::size_t i = 0; i < x.size(); ++i) act += x[i] * p.W(i, j);
        f -= softplus(act);
    }
    return f;
}

double log_partition(const RbmParams& p)
{
    const auto d = p.visible();
    if (d > max_exact_visible)
        throw std::invalid_argument("partition function enumeration limited to " + std::to_string(max_exact_visible) +
                                    " visible units, got " + std::to_string(d));
    const std::uint64_t states = std::uint64_t{1} << d;
    std::vector<double> neg_f(states);
    std::vector<double> x(d);
    for (std::uint64_t s = 0; s < states; ++s) {
        for (std::size_t i = 0; i < d; ++i) x[i] = static_cast<double>((s >> i) & 1U);
        neg_f[s] = -free_energy(p, x);
    }
    const double m = *std::max_element(neg_f.begin(), neg_f.end());
    double acc = 0.0;
    for (double v : neg_f) acc += std::exp(v - m);
    return m + std::log(acc);
}

double partition_exact(const RbmParams& p)
{
    return std::exp(log_partition(p));
}

double exact_loglik(const RbmParams& p, const Tensor& X)
{
    const double logA = log_partition(p);
    double ll = 0.0;
    for (std::size_t i = 0; i < X.dim(0); ++i) ll += -free_energy(p, X.row(i)) - logA;
    return ll;
}

std::vector<double> hidden_probs(const RbmParams& p, std::span<const double> x)
{
    check_visible(p, x.size());
    std::vector<double> out(p.hidden());
    for (std::size_t j = 0; j < out.size(); ++j) {
        double act = p.b[j];
        for (std::size_t i = 0; i < x.size(); ++i) act += x[i] * p.W(i, j);
        out[j] = sigmoid(act);
    }
    return out;
}

std::vector<double> visible_probs(const RbmParams& p, std::span<const double> z)
{
    if (z.size() != p.hidden())
        throw ShapeError("rbm: hidden state has wrong length");
    std::vector<double> out(p.visible());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double act = p.a[i];
        for (std::size_t j = 0; j < z.size(); ++j) act += p.W(i, j) * z[j];
        out[i] = sigmoid(act);
    }
    return out;
}

RbmGrads exact_loglik_grad(const RbmParams& p, const Tensor& X)
{
    const auto d = p.visible(), h = p.hidden();
    const auto n = static_cast<double>(X.dim(0));
    RbmGrads g = make_rbm(d, h);
    for (std::size_t r = 0; r < X.dim(0); ++r) {
        auto x = X.row(r);
        const auto ph = hidden_probs(p, x);
        for (std::size_t i = 0; i < d; ++i) {
            g.a[i] += x[i];
            for (std::size_t j = 0; j < h; ++j) g.W(i, j) += x[i] * ph[j];
        }
        for (std::size_t j = 0; j < h; ++j) g.b[j] += ph[j];
    }
    for_each_visible_state(p, [&](const std::vector<double>& x, double w) {
        const auto ph = hidden_probs(p, x);
        for (std::size_t i = 0; i < d; ++i) {
            g.a[i] -= n * w * x[i];
            for (std::size_t j = 0; j < h; ++j) g.W(i, j) -= n * w * x[i] * ph[j];
        }
        for (std::size_t j = 0; j < h; ++j) g.b[j] -= n * w * ph[j];
    });
    return g;
}

RbmGrads cd_gradient(const RbmParams& p, const Tensor& batch, std::size_t k_gibbs, Rng& rng)
{
    const auto d = p.visible(), h = p.hidden(), m = batch.dim(0);
    check_visible(p, batch.row_size());
    require_binary(batch.data(), "rbm training batch");
    RbmGrads g = make_rbm(d, h);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> v(d), z(h);
    for (std::size_t r = 0; r < m; ++r) {
        auto x0 = batch.row(r);
        const auto ph0 = hidden_probs(p, x0);
        std::copy(x0.begin(), x0.end(), v.begin());
        std::vector<double> ph = ph0;
        for (std::size_t step = 0; step < k_gibbs; ++step) {
            for (std::size_t j = 0; j < h; ++j) z[j] = unit(rng) < ph[j] ? 1.0 : 0.0;
            const auto pv = visible_probs(p, z);
            for (std::size_t i = 0; i < d; ++i) v[i] = unit(rng) < pv[i] ? 1.0 : 0.0;
            ph = hidden_probs(p, v);
        }
        for (std::size_t i = 0; i < d; ++i) {
            g.a[i] += x0[i] - v[i];
            for (std::size_t j = 0; j < h; ++j) g.W(i, j) += x0[i] * ph0[j] - v[i] * ph[j];
        }
        for (std::size_t j = 0; j < h; ++j) g.b[j] += ph0[j] - ph[j];
    }
    const double inv = m ? 1.0 / static_cast<double>(m) : 0.0;
    for (auto& e : g.W.data()) e *= inv;
    for (auto& e : g.a.data()) e *= inv;
    for (auto& e : g.b.data()) e *= inv;
    return g;
}

void cd_step(RbmParams& p, const Tensor& batch, std::size_t k_gibbs, double lr, Rng& rng)
{
    const RbmGrads g = cd_gradient(p, batch, k_gibbs, rng);
    scale_add(p, g, lr);
}

void cd_step(RbmParams& p, const Tensor& batch, std::size_t k_gibbs, double lr, std::uint64_t seed)
{
    Rng rng(seed);
    cd_step(p, batch, k_gibbs, lr, rng);
}

void exact_gradient_step(RbmParams& p, const Tensor& batch, double lr)
{
    if (batch.dim(0) == 0)
        return;
    const RbmGrads g = exact_loglik_grad(p, batch);
    scale_add(p, g, lr / static_cast<double>(batch.dim(0)));
}

std::vector<double> reconstruct(const RbmParams& p, std::span<const double> x)
{
    return visible_probs(p, hidden_probs(p, x));
}

Tensor binarize(const Tensor& X, double threshold)
{
    Tensor out = X;
    for (auto& v : out.data()) v = v >= threshold ? 1.0 : 0.0;
    return out;
}

Tensor trbm_loss_matrix(const std::vector<RbmParams>& models, const Tensor& X)
{
    const auto k = models.size(), n = X.dim(0);
    Tensor L = Tensor::matrix(k, n);
    for (std::size_t j = 0; j < k; ++j) {
        const double logA = models[j].visible() <= max_exact_visible ? log_partition(models[j]) : 0.0;
        for (std::size_t i = 0; i < n; ++i) L(j, i) = free_energy(models[j], X.row(i)) + logA;
    }
    L.require_finite("trbm_loss_matrix");
    return L;
}

std::uint64_t cluster_stream_seed(std::uint64_t seed, std::size_t j)
{
    return seed ^ (static_cast<std::uint64_t>(j) * 0x9E3779B97F4A7C15ULL);
}

void trbm_train_epoch(std::vector<RbmParams>& models, const Tensor& X, const AssignmentMatrix& S,
                      const TrbmOptions& opt, std::vector<Rng>& streams)
{
    if (S.k() != models.size() || streams.size() != models.size() || S.n() != X.dim(0))
        throw ShapeError("trbm_train_epoch: models, streams, assignment and data disagree");
    for (std::size_t j = 0; j < models.size(); ++j) {
        auto rows = S.members(j);
        if (rows.empty())
            continue;
        Rng& rng = streams[j];
        if (opt.batch_size == 0 || opt.batch_size >= rows.size()) {
            Tensor batch = select_rows(X, rows);
            if (opt.exact_gradient)
                exact_gradient_step(models[j], batch, opt.learning_rate);
            else
                cd_step(models[j], batch, opt.k_gibbs, opt.learning_rate, rng);
            continue;
        }
        std::shuffle(rows.begin(), rows.end(), rng);
        for (std::size_t start = 0; start < rows.size(); start += opt.batch_size) {
            const auto end = std::min(rows.size(), start + opt.batch_size);
            Tensor batch = select_rows(X, std::span<const std::size_t>(rows).subspan(start, end - start));
            if (opt.exact_gradient)
                exact_gradient_step(models[j], batch, opt.learning_rate);
            else
                cd_step(models[j], batch, opt.k_gibbs, opt.learning_rate, rng);
        }
    }
}

TrbmResult trbm_assign_and_train(std::vector<RbmParams> models, const Tensor& X, AssignmentMatrix S,
                                 const TrbmOptions& opt)
{
    std::vector<Rng> streams;
    for (std::size_t j = 0; j < models.size(); ++j) streams.emplace_back(cluster_stream_seed(opt.seed, j));
    TrbmResult r{std::move(models), std::move(S), 0};
    for (; r.epochs_run < opt.epochs; ++r.epochs_run) {
        trbm_train_epoch(r.models, X, r.assignment, opt, streams);
        r.assignment = lloyd_step(trbm_loss_matrix(r.models, X));
    }
    return r;
}

}  // namespace tenrep
