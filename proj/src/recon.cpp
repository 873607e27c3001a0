#include "tenrep/recon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace tenrep {

namespace {

// Offsets of each sub-network's gradients inside PtaeModel::parameters().
struct PtaeLayout {
    std::size_t shared_enc = 0;
    std::vector<std::size_t> enc, dec;
    std::size_t shared_dec = 0;
    std::size_t total = 0;
};

PtaeLayout layout_of(PtaeModel& m)
{
    PtaeLayout l;
    std::size_t off = m.shared_encoder.parameters().size();
    for (auto& e : m.cluster_encoders) {
        l.enc.push_back(off);
        off += e.parameters().size();
    }
    for (auto& d : m.cluster_decoders) {
        l.dec.push_back(off);
        off += d.parameters().size();
    }
    l.shared_dec = off;
    l.total = off + m.shared_decoder.parameters().size();
    return l;
}

void add_at(ParamGrads& into, std::size_t offset, const ParamGrads& g)
{
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto dst = into[offset + i].data();
        auto src = g[i].data();
        for (std::size_t e = 0; e < src.size(); ++e) dst[e] += src[e];
    }
}

Tensor centered_batch(const PtaeModel& m, const Tensor& X, std::span<const std::size_t> rows, std::size_t j)
{
    Tensor B = rows.empty() ? X : select_rows(X, rows);
    if (m.centered && m.centers.k() > 0)
        B = center_rows(B, m.centers.center(j));
    return B;
}

struct Pass {
    Tensor z;
    Tensor x_hat;
};

Pass evaluate_cluster(const PtaeModel& m, const Tensor& xt, std::size_t j)
{
    Pass p;
    p.z = m.cluster_encoders[j].evaluate(m.shared_encoder.evaluate(xt));
    p.x_hat = m.shared_decoder.evaluate(m.cluster_decoders[j].evaluate(p.z));
    return p;
}

void check_cluster(const PtaeModel& m, std::size_t j)
{
    if (j >= m.k())
        throw std::out_of_range("cluster index " + std::to_string(j) + " >= k=" + std::to_string(m.k()));
}

}  // namespace

std::vector<double> PtaeModel::center_of(std::size_t j, std::size_t d) const
{
    if (!centered || centers.k() == 0)
        return std::vector<double>(d, 0.0);
    auto c = centers.center(j);
    if (c.size() != d)
        throw ShapeError("center dimension does not match input");
    return {c.begin(), c.end()};
}

std::vector<Tensor*> PtaeModel::parameters()
{
    std::vector<Tensor*> ps = shared_encoder.parameters();
    for (auto& e : cluster_encoders)
        for (auto* p : e.parameters()) ps.push_back(p);
    for (auto& d : cluster_decoders)
        for (auto* p : d.parameters()) ps.push_back(p);
    for (auto* p : shared_decoder.parameters()) ps.push_back(p);
    return ps;
}

std::size_t PtaeModel::param_count() const
{
    std::size_t n = shared_encoder.param_count() + shared_decoder.param_count();
    for (const auto& e : cluster_encoders) n += e.param_count();
    for (const auto& d : cluster_decoders) n += d.param_count();
    return n;
}

std::string_view to_string(ReconArch a)
{
    switch (a) {
    case ReconArch::ae1: return "ae1";
    case ReconArch::ae2: return "ae2";
    case ReconArch::ae3: return "ae3";
    case ReconArch::tae1: return "tae1";
    case ReconArch::tae2: return "tae2";
    case ReconArch::ptae: return "ptae";
    }
    return "?";
}

ReconArch recon_arch_from_string(std::string_view name)
{
    for (auto a : {ReconArch::ae1, ReconArch::ae2, ReconArch::ae3, ReconArch::tae1, ReconArch::tae2, ReconArch::ptae})
        if (to_string(a) == name) return a;
    throw std::invalid_argument("unknown autoencoder architecture '" + std::string(name) + "'");
}

bool is_tensorized(ReconArch a)
{
    return a == ReconArch::tae1 || a == ReconArch::tae2 || a == ReconArch::ptae;
}

PtaeModel make_recon_model(ReconArch arch, std::size_t d, std::size_t C, std::size_t k, Rng& rng)
{
    if (d == 0 || C == 0 || k == 0)
        throw std::invalid_argument("make_recon_model: d, C and k must be positive");
    constexpr auto tanh = Activation::tanh;
    constexpr auto lin = Activation::linear;

    PtaeModel m;
    auto push = [&](std::vector<Layer> enc, std::vector<Layer> dec) {
        m.cluster_encoders.emplace_back(std::move(enc));
        m.cluster_decoders.emplace_back(std::move(dec));
    };

    switch (arch) {
    case ReconArch::ae1:
    case ReconArch::tae1: {
        const auto copies = arch == ReconArch::ae1 ? 1 : k;
        for (std::size_t j = 0; j < copies; ++j) {
            auto e = DenseLayer::glorot(d, 1, tanh, rng);
            auto o = DenseLayer::glorot(1, d, lin, rng);
            push({e}, {o});
        }
        break;
    }
    case ReconArch::ae2:
    case ReconArch::tae2: {
        const auto copies = arch == ReconArch::ae2 ? 1 : k;
        for (std::size_t j = 0; j < copies; ++j) {
            auto e1 = DenseLayer::glorot(d, 2, tanh, rng);
            auto e2 = DenseLayer::glorot(2, 1, tanh, rng, false);
            auto d1 = DenseLayer::glorot(1, 2, tanh, rng, false);
            auto d2 = DenseLayer::glorot(2, d, lin, rng);
            push({e1, e2}, {d1, d2});
        }
        break;
    }
    case ReconArch::ae3: {
        auto e1 = DenseLayer::glorot(d, 2, tanh, rng);
        auto e2 = DenseLayer::glorot(2, C, tanh, rng, false);
        auto d1 = DenseLayer::glorot(C, 2, tanh, rng, false);
        auto d2 = DenseLayer::glorot(2, d, lin, rng);
        push({e1, e2}, {d1, d2});
        break;
    }
    case ReconArch::ptae: {
        m.shared_encoder.add(DenseLayer::glorot(d, 2, tanh, rng));
        for (std::size_t j = 0; j < k; ++j) {
            auto e = DenseLayer::glorot(2, 1, tanh, rng, false);
            auto o = DenseLayer::glorot(1, 2, tanh, rng, false);
            push({e}, {o});
        }
        m.shared_decoder.add(DenseLayer::glorot(2, d, lin, rng));
        break;
    }
    }
    m.centered = is_tensorized(arch);
    return m;
}

Reconstruction reconstruct(const PtaeModel& model, std::span<const double> x, std::size_t j)
{
    check_cluster(model, j);
    const auto c = model.center_of(j, x.size());
    Tensor xt = Tensor::from_vector(center(x, c));
    Pass p = evaluate_cluster(model, xt, j);
    return {p.x_hat.values(), p.z.values()};
}

Tensor encode_rows(const PtaeModel& model, const Tensor& X, std::size_t j)
{
    check_cluster(model, j);
    Tensor xt = centered_batch(model, X, {}, j);
    return model.cluster_encoders[j].evaluate(model.shared_encoder.evaluate(xt));
}

Tensor reconstruct_rows(const PtaeModel& model, const Tensor& X, std::size_t j)
{
    check_cluster(model, j);
    Tensor xt = centered_batch(model, X, {}, j);
    Tensor out = evaluate_cluster(model, xt, j).x_hat;
    const auto c = model.center_of(j, X.dim(1));
    for (std::size_t i = 0; i < out.dim(0); ++i) {
        auto r = out.row(i);
        for (std::size_t e = 0; e < c.size(); ++e) r[e] += c[e];
    }
    return out;
}

double kmeans_penalty(std::span<const double> z)
{
    return squared_norm(z);
}

Tensor ptae_loss_matrix(const PtaeModel& model, const Tensor& X)
{
    if (X.rank() != 2)
        throw ShapeError("ptae_loss_matrix expects an n x d matrix");
    const auto n = X.dim(0), k = model.k();
    Tensor L = Tensor::matrix(k, n);
    for (std::size_t j = 0; j < k; ++j) {
        Tensor xt = centered_batch(model, X, {}, j);
        Pass p = evaluate_cluster(model, xt, j);
        for (std::size_t i = 0; i < n; ++i)
            L(j, i) = squared_distance(xt.row(i), p.x_hat.row(i)) - model.lambda * kmeans_penalty(p.z.row(i));
    }
    L.require_finite("ptae_loss_matrix");
    return L;
}

double ptae_objective_and_grads(PtaeModel& model, const Tensor& X, const AssignmentMatrix& S,
                                std::span<const std::size_t> batch, ParamGrads& grads)
{
    if (X.rank() != 2 || S.n() != X.dim(0) || S.k() != model.k())
        throw ShapeError("ptae step: dataset, assignment and model disagree");

    std::vector<std::size_t> all;
    if (batch.empty()) {
        all.resize(X.dim(0));
        std::iota(all.begin(), all.end(), std::size_t{0});
        batch = all;
    }
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    const PtaeLayout layout = layout_of(model);
    grads.clear();
    for (Tensor* p : model.parameters()) grads.push_back(zeros_like(*p));

    double objective = 0.0;
    for (std::size_t j = 0; j < model.k(); ++j) {
        std::vector<std::size_t> rows;
        for (auto i : batch)
            if (S[i] == j) rows.push_back(i);
        if (rows.empty())
            continue;

        Tensor xt = centered_batch(model, X, rows, j);
        Tensor h = model.shared_encoder.forward(xt);
        Tensor z = model.cluster_encoders[j].forward(h);
        Tensor u = model.cluster_decoders[j].forward(z);
        Tensor x_hat = model.shared_decoder.forward(u);

        Tensor g_out(x_hat.shape());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            auto xr = xt.row(r), yr = x_hat.row(r);
            auto gr = g_out.row(r);
            for (std::size_t e = 0; e < xr.size(); ++e) gr[e] = 2.0 * inv_n * (yr[e] - xr[e]);
            objective += inv_n * (squared_distance(xr, yr) - model.lambda * kmeans_penalty(z.row(r)));
        }

        auto bd = model.shared_decoder.backward(g_out);
        add_at(grads, layout.shared_dec, bd.grads);
        auto bc = model.cluster_decoders[j].backward(bd.input_grad);
        add_at(grads, layout.dec[j], bc.grads);

        Tensor gz = std::move(bc.input_grad);
        if (model.lambda != 0.0) {
            for (std::size_t r = 0; r < rows.size(); ++r) {
                auto zr = z.row(r);
                auto gr = gz.row(r);
                const double norm = 2.0 * std::abs(model.lambda) * std::sqrt(squared_norm(zr));
                const double scale = norm > model.penalty_grad_clip ? model.penalty_grad_clip / norm : 1.0;
                for (std::size_t e = 0; e < zr.size(); ++e) gr[e] -= inv_n * scale * 2.0 * model.lambda * zr[e];
            }
        }
        auto be = model.cluster_encoders[j].backward(gz);
        add_at(grads, layout.enc[j], be.grads);
        auto bs = model.shared_encoder.backward(be.input_grad);
        add_at(grads, layout.shared_enc, bs.grads);
    }
    if (!std::isfinite(objective))
        throw NumericError("ptae objective is non-finite");
    return objective;
}

double ptae_grad_step(PtaeModel& model, const Tensor& X, const AssignmentMatrix& S, Optimizer& opt,
                      std::span<const std::size_t> batch)
{
    ParamGrads grads;
    const double obj = ptae_objective_and_grads(model, X, S, batch, grads);
    auto params = model.parameters();
    opt.step(params, grads);
    return obj;
}

}  // namespace tenrep
