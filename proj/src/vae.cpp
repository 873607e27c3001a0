#include "tenrep/vae.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace tenrep {

std::string_view to_string(ReconMode m)
{
    return m == ReconMode::bce_sigmoid ? "bce_sigmoid" : "mse_linear";
}

ReconMode recon_mode_from_string(std::string_view name)
{
    if (name == "bce_sigmoid" || name == "bce") return ReconMode::bce_sigmoid;
    if (name == "mse_linear" || name == "mse") return ReconMode::mse_linear;
    throw std::invalid_argument("unknown reconstruction mode '" + std::string(name) + "'");
}

std::string_view to_string(ReparamMode m)
{
    return m == ReparamMode::sigma ? "sigma" : "variance";
}

ReparamMode reparam_mode_from_string(std::string_view name)
{
    if (name == "sigma") return ReparamMode::sigma;
    if (name == "variance") return ReparamMode::variance;
    throw std::invalid_argument("unknown reparameterization mode '" + std::string(name) + "'");
}

namespace {

double softplus(double x)
{
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x)
{
    return 1.0 / (1.0 + std::exp(-x));
}

double noise_scale(double logvar, ReparamMode mode)
{
    return mode == ReparamMode::sigma ? std::exp(0.5 * logvar) : std::exp(logvar);
}

void check_cluster(const TvaeModel& m, std::size_t j)
{
    if (j >= m.k())
        throw std::out_of_range("cluster index " + std::to_string(j) + " >= k=" + std::to_string(m.k()));
}

Tensor centered(const TvaeModel& m, const Tensor& X, std::size_t j)
{
    if (m.centered && m.centers.k() > 0)
        return center_rows(X, m.centers.center(j));
    return X;
}

void check_bce_targets(std::span<const double> t)
{
    for (double v : t)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::domain_error("bce reconstruction target outside [0,1]: " + std::to_string(v));
}

void add_at(ParamGrads& into, std::size_t offset, const ParamGrads& g)
{
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto dst = into[offset + i].data();
        auto src = g[i].data();
        for (std::size_t e = 0; e < src.size(); ++e) dst[e] += src[e];
    }
}

}  // namespace

std::size_t TvaeModel::latent_dim() const
{
    const auto& l = std::get<DenseLayer>(mean_heads.front().layers().back());
    return l.fan_out();
}

std::vector<double> TvaeModel::center_of(std::size_t j, std::size_t d) const
{
    if (!centered || centers.k() == 0)
        return std::vector<double>(d, 0.0);
    auto c = centers.center(j);
    return {c.begin(), c.end()};
}

std::vector<Tensor*> TvaeModel::parameters()
{
    std::vector<Tensor*> ps = trunk.parameters();
    for (auto* group : {&mean_heads, &logvar_heads, &cluster_decoders})
        for (auto& net : *group)
            for (auto* p : net.parameters()) ps.push_back(p);
    for (auto* p : shared_decoder.parameters()) ps.push_back(p);
    return ps;
}

std::size_t TvaeModel::param_count() const
{
    std::size_t n = trunk.param_count() + shared_decoder.param_count();
    for (const auto* group : {&mean_heads, &logvar_heads, &cluster_decoders})
        for (const auto& net : *group) n += net.param_count();
    return n;
}

TvaeModel make_tvae(std::size_t d, std::size_t hidden, std::size_t latent, std::size_t k, ReconMode mode, Rng& rng)
{
    TvaeModel m;
    m.recon_mode = mode;
    m.trunk.add(DenseLayer::glorot(d, hidden, Activation::tanh, rng));
    for (std::size_t j = 0; j < k; ++j) {
        m.mean_heads.emplace_back(std::vector<Layer>{DenseLayer::glorot(hidden, latent, Activation::linear, rng)});
        m.logvar_heads.emplace_back(std::vector<Layer>{DenseLayer::glorot(hidden, latent, Activation::linear, rng)});
        m.cluster_decoders.emplace_back(std::vector<Layer>{DenseLayer::glorot(latent, hidden, Activation::tanh, rng)});
    }
    m.shared_decoder.add(DenseLayer::glorot(hidden, d, Activation::linear, rng));
    return m;
}

Posterior encode(const TvaeModel& model, std::span<const double> x, std::size_t j)
{
    check_cluster(model, j);
    Tensor xt = Tensor::from_vector(center(x, model.center_of(j, x.size())));
    Tensor h = model.trunk.evaluate(xt);
    return {model.mean_heads[j].evaluate(h).values(), model.logvar_heads[j].evaluate(h).values()};
}

std::vector<double> reparameterize(std::span<const double> mean, std::span<const double> logvar,
                                   std::span<const double> eps, ReparamMode mode)
{
    if (mean.size() != logvar.size() || mean.size() != eps.size())
        throw ShapeError("reparameterize: mean, logvar and eps lengths differ");
    std::vector<double> z(mean.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = mean[i] + noise_scale(logvar[i], mode) * eps[i];
    return z;
}

double kl_term(std::span<const double> mean, std::span<const double> logvar)
{
    if (mean.size() != logvar.size())
        throw ShapeError("kl_term: mean and logvar lengths differ");
    double s = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i)
        s += std::exp(logvar[i]) + mean[i] * mean[i] - 1.0 - logvar[i];
    return 0.5 * s;
}

double recon_loss(ReconMode mode, std::span<const double> target, std::span<const double> out)
{
    if (target.size() != out.size())
        throw ShapeError("recon_loss: target and output lengths differ");
    double s = 0.0;
    if (mode == ReconMode::bce_sigmoid) {
        check_bce_targets(target);
        // -[t log sig(y) + (1-t) log(1-sig(y))] = softplus(y) - t*y
        for (std::size_t i = 0; i < out.size(); ++i) s += softplus(out[i]) - target[i] * out[i];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double e = target[i] - out[i];
            s += e * e;
        }
        s *= 0.5;
    }
    return s;
}

std::vector<double> decode(const TvaeModel& model, std::span<const double> z, std::size_t j)
{
    check_cluster(model, j);
    Tensor zt = Tensor::from_vector({z.begin(), z.end()});
    return model.shared_decoder.evaluate(model.cluster_decoders[j].evaluate(zt)).values();
}

double recon_term(const TvaeModel& model, std::span<const double> target, std::span<const double> z, std::size_t j)
{
    const auto out = decode(model, z, j);
    return recon_loss(model.recon_mode, target, out);
}

Tensor tvae_loss_matrix(const TvaeModel& model, const Tensor& X, Rng& rng)
{
    const auto h = model.latent_dim();
    Tensor eps({model.k(), X.dim(0), h});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& e : eps.data()) e = normal(rng);
    return tvae_loss_matrix(model, X, eps);
}

Tensor tvae_loss_matrix(const TvaeModel& model, const Tensor& X, const Tensor& eps)
{
    if (X.rank() != 2)
        throw ShapeError("tvae_loss_matrix expects an n x d matrix");
    const auto n = X.dim(0), k = model.k(), h = model.latent_dim();
    if (eps.shape() != Shape{k, n, h})
        throw ShapeError("tvae_loss_matrix: eps must have shape (k, n, latent)");

    Tensor L = Tensor::matrix(k, n);
    for (std::size_t j = 0; j < k; ++j) {
        Tensor xt = centered(model, X, j);
        Tensor hid = model.trunk.evaluate(xt);
        Tensor mu = model.mean_heads[j].evaluate(hid);
        Tensor lv = model.logvar_heads[j].evaluate(hid);
        Tensor z({n, h});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t e = 0; e < h; ++e)
                z(i, e) = mu(i, e) + noise_scale(lv(i, e), model.reparam_mode) * eps[(j * n + i) * h + e];
        Tensor out = model.shared_decoder.evaluate(model.cluster_decoders[j].evaluate(z));
        const Tensor& target = model.recon_mode == ReconMode::bce_sigmoid ? X : xt;
        for (std::size_t i = 0; i < n; ++i)
            L(j, i) = recon_loss(model.recon_mode, target.row(i), out.row(i)) + kl_term(mu.row(i), lv.row(i));
    }
    L.require_finite("tvae_loss_matrix");
    return L;
}

double tvae_objective_and_grads(TvaeModel& model, const Tensor& X, const AssignmentMatrix& S, const Tensor& eps,
                                std::span<const std::size_t> batch, ParamGrads& grads)
{
    const auto h = model.latent_dim();
    if (X.rank() != 2 || S.n() != X.dim(0) || S.k() != model.k())
        throw ShapeError("tvae step: dataset, assignment and model disagree");
    if (eps.rank() != 2 || eps.dim(0) != X.dim(0) || eps.dim(1) != h)
        throw ShapeError("tvae step: eps must be n x latent");

    std::vector<std::size_t> all;
    if (batch.empty()) {
        all.resize(X.dim(0));
        std::iota(all.begin(), all.end(), std::size_t{0});
        batch = all;
    }
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    // gradient offsets, matching parameters()
    const std::size_t k = model.k();
    std::vector<std::size_t> off_mu(k), off_lv(k), off_dec(k);
    std::size_t off = model.trunk.parameters().size();
    for (std::size_t j = 0; j < k; ++j) { off_mu[j] = off; off += model.mean_heads[j].parameters().size(); }
    for (std::size_t j = 0; j < k; ++j) { off_lv[j] = off; off += model.logvar_heads[j].parameters().size(); }
    for (std::size_t j = 0; j < k; ++j) { off_dec[j] = off; off += model.cluster_decoders[j].parameters().size(); }
    const std::size_t off_shared = off;

    grads.clear();
    for (Tensor* p : model.parameters()) grads.push_back(zeros_like(*p));

    double objective = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        std::vector<std::size_t> rows;
        for (auto i : batch)
            if (S[i] == j) rows.push_back(i);
        if (rows.empty())
            continue;
        const auto m = rows.size();

        Tensor xb = select_rows(X, rows);
        Tensor xt = centered(model, xb, j);
        Tensor hid = model.trunk.forward(xt);
        Tensor mu = model.mean_heads[j].forward(hid);
        Tensor lv = model.logvar_heads[j].forward(hid);
        Tensor z({m, h}), scale({m, h});
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t e = 0; e < h; ++e) {
                scale(r, e) = noise_scale(lv(r, e), model.reparam_mode);
                z(r, e) = mu(r, e) + scale(r, e) * eps(rows[r], e);
            }
        Tensor u = model.cluster_decoders[j].forward(z);
        Tensor out = model.shared_decoder.forward(u);
        const Tensor& target = model.recon_mode == ReconMode::bce_sigmoid ? xb : xt;

        Tensor g_out(out.shape());
        for (std::size_t r = 0; r < m; ++r) {
            auto t = target.row(r);
            auto y = out.row(r);
            auto g = g_out.row(r);
            objective += inv_n * (recon_loss(model.recon_mode, t, y) + kl_term(mu.row(r), lv.row(r)));
            for (std::size_t e = 0; e < y.size(); ++e)
                g[e] = inv_n * (model.recon_mode == ReconMode::bce_sigmoid ? sigmoid(y[e]) - t[e] : y[e] - t[e]);
        }

        auto bs = model.shared_decoder.backward(g_out);
        add_at(grads, off_shared, bs.grads);
        auto bd = model.cluster_decoders[j].backward(bs.input_grad);
        add_at(grads, off_dec[j], bd.grads);
        const Tensor& gz = bd.input_grad;

        Tensor g_mu({m, h}), g_lv({m, h});
        const double dscale = model.reparam_mode == ReparamMode::sigma ? 0.5 : 1.0;
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t e = 0; e < h; ++e) {
                g_mu(r, e) = gz(r, e) + inv_n * mu(r, e);
                g_lv(r, e) = gz(r, e) * eps(rows[r], e) * dscale * scale(r, e) +
                             inv_n * 0.5 * (std::exp(lv(r, e)) - 1.0);
            }
        auto bm = model.mean_heads[j].backward(g_mu);
        add_at(grads, off_mu[j], bm.grads);
        auto bl = model.logvar_heads[j].backward(g_lv);
        add_at(grads, off_lv[j], bl.grads);
        Tensor g_hid = bm.input_grad;
        for (std::size_t e = 0; e < g_hid.size(); ++e) g_hid[e] += bl.input_grad[e];
        auto bt = model.trunk.backward(g_hid);
        add_at(grads, 0, bt.grads);
    }
    if (!std::isfinite(objective))
        throw NumericError("tvae objective is non-finite");
    return objective;
}

double tvae_grad_step(TvaeModel& model, const Tensor& X, const AssignmentMatrix& S, Optimizer& opt, Rng& rng,
                      std::span<const std::size_t> batch)
{
    Tensor eps({X.dim(0), model.latent_dim()});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& e : eps.data()) e = normal(rng);
    ParamGrads grads;
    const double obj = tvae_objective_and_grads(model, X, S, eps, batch, grads);
    auto params = model.parameters();
    opt.step(params, grads);
    return obj;
}

std::vector<std::vector<double>> sample_latent_grid(const TvaeModel& model, std::size_t j,
                                                    const std::vector<std::vector<double>>& grid)
{
    std::vector<std::vector<double>> out;
    out.reserve(grid.size());
    for (const auto& z : grid) {
        auto y = decode(model, z, j);
        if (model.recon_mode == ReconMode::bce_sigmoid)
            for (auto& v : y) v = sigmoid(v);
        out.push_back(std::move(y));
    }
    return out;
}

std::vector<std::vector<double>> latent_grid(std::size_t side, double extent)
{
    std::vector<std::vector<double>> g;
    for (std::size_t a = 0; a < side; ++a)
        for (std::size_t b = 0; b < side; ++b) {
            const double step = side > 1 ? 2.0 * extent / static_cast<double>(side - 1) : 0.0;
            g.push_back({-extent + step * static_cast<double>(a), -extent + step * static_cast<double>(b)});
        }
    return g;
}

}  // namespace tenrep
