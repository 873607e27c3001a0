#include "tenrep/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>

namespace tenrep {

namespace {

std::vector<double> gaussian_kernel(double sigma)
{
    const auto radius = static_cast<std::size_t>(std::ceil(4.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double s = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        const double x = static_cast<double>(i) - static_cast<double>(radius);
        k[i] = std::exp(-0.5 * x * x / (sigma * sigma));
        s += k[i];
    }
    for (auto& v : k) v /= s;
    return k;
}

// Separable Gaussian blur with nearest-edge extension.
Tensor smooth(const Tensor& f, double sigma)
{
    const auto h = f.dim(0), w = f.dim(1);
    const auto kern = gaussian_kernel(sigma);
    const auto r = static_cast<std::ptrdiff_t>(kern.size() / 2);
    auto clampi = [](std::ptrdiff_t v, std::size_t n) {
        return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
    };
    Tensor tmp({h, w}), out({h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (std::ptrdiff_t t = -r; t <= r; ++t)
                s += kern[static_cast<std::size_t>(t + r)] * f(y, clampi(static_cast<std::ptrdiff_t>(x) + t, w));
            tmp(y, x) = s;
        }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (std::ptrdiff_t t = -r; t <= r; ++t)
                s += kern[static_cast<std::size_t>(t + r)] * tmp(clampi(static_cast<std::ptrdiff_t>(y) + t, h), x);
            out(y, x) = s;
        }
    return out;
}

void add_at(ParamGrads& into, std::size_t offset, const ParamGrads& g)
{
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto dst = into[offset + i].data();
        auto src = g[i].data();
        for (std::size_t e = 0; e < src.size(); ++e) dst[e] += src[e];
    }
}

Tensor as_batch(const TclModel& m, const Tensor& rows)
{
    Shape s{rows.dim(0)};
    s.insert(s.end(), m.input_shape.begin(), m.input_shape.end());
    return rows.reshaped(std::move(s));
}

constexpr double min_embedding_norm = 1e-12;

/// z / max(|z|, min_embedding_norm) row by row; norms receives the divisor of each row.
void normalize_rows(Tensor& z, std::vector<double>& norms)
{
    norms.resize(z.dim(0));
    for (std::size_t i = 0; i < z.dim(0); ++i) {
        auto r = z.row(i);
        const double n = std::max(std::sqrt(squared_norm(r)), min_embedding_norm);
        norms[i] = n;
        for (auto& v : r) v /= n;
    }
}

}  // namespace

DisplacementField elastic_displacement(std::size_t height, std::size_t width, double alpha, double sigma,
                                       std::uint64_t seed)
{
    if (!(sigma > 0.0))
        throw std::invalid_argument("elastic transform needs sigma > 0");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor dx({height, width}), dy({height, width});
    for (auto& v : dx.data()) v = u(rng);
    for (auto& v : dy.data()) v = u(rng);
    DisplacementField f{smooth(dx, sigma), smooth(dy, sigma)};
    for (auto& v : f.dx.data()) v *= alpha;
    for (auto& v : f.dy.data()) v *= alpha;
    return f;
}

Tensor warp_image(const Tensor& img, const DisplacementField& field)
{
    if (img.rank() != 2 || field.dx.shape() != img.shape() || field.dy.shape() != img.shape())
        throw ShapeError("warp_image: image and displacement field shapes differ");
    const auto h = img.dim(0), w = img.dim(1);
    Tensor out({h, w});
    const double ymax = static_cast<double>(h - 1), xmax = static_cast<double>(w - 1);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double sy = std::clamp(static_cast<double>(y) + field.dy(y, x), 0.0, ymax);
            const double sx = std::clamp(static_cast<double>(x) + field.dx(y, x), 0.0, xmax);
            const auto y0 = static_cast<std::size_t>(std::floor(sy));
            const auto x0 = static_cast<std::size_t>(std::floor(sx));
            const auto y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
            const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
            if (fy == 0.0 && fx == 0.0) {
                out(y, x) = img(y0, x0);
                continue;
            }
            out(y, x) = (1.0 - fy) * ((1.0 - fx) * img(y0, x0) + fx * img(y0, x1)) +
                        fy * ((1.0 - fx) * img(y1, x0) + fx * img(y1, x1));
        }
    return out;
}

Tensor elastic_transform(const Tensor& img, double alpha, double sigma, std::uint64_t seed)
{
    if (img.rank() != 2)
        throw ShapeError("elastic_transform expects an H x W image");
    return warp_image(img, elastic_displacement(img.dim(0), img.dim(1), alpha, sigma, seed));
}

std::string_view to_string(PairMode m)
{
    return m == PairMode::supervised ? "supervised" : "unsupervised";
}

PairMode pair_mode_from_string(std::string_view name)
{
    if (name == "supervised") return PairMode::supervised;
    if (name == "unsupervised") return PairMode::unsupervised;
    throw std::invalid_argument("unknown pair mode '" + std::string(name) + "'");
}

TripletBatch gen_pairs_unsupervised(const Tensor& X, const AssignmentMatrix& S, std::size_t image_h,
                                    std::size_t image_w, ElasticParams elastic, std::uint64_t seed)
{
    const auto n = X.dim(0);
    if (S.n() != n)
        throw ShapeError("gen_pairs_unsupervised: assignment size differs from dataset");
    if (X.row_size() != image_h * image_w)
        throw ShapeError("gen_pairs_unsupervised: rows are not " + std::to_string(image_h) + "x" +
                         std::to_string(image_w) + " images");
    if (S.k() < 2)
        throw std::invalid_argument("unsupervised pairs need k >= 2 to draw negatives");
    const auto counts = S.counts();
    if (std::find(counts.begin(), counts.end(), n) != counts.end())
        throw std::invalid_argument("unsupervised pairs: one cluster holds every point, no negatives available");

    std::vector<std::vector<std::size_t>> others(S.k());
    for (std::size_t j = 0; j < S.k(); ++j)
        for (std::size_t i = 0; i < n; ++i)
            if (S[i] != j) others[j].push_back(i);

    TripletBatch b;
    b.mode = PairMode::unsupervised;
    b.anchors = X;
    b.positives = Tensor(X.shape());
    b.negatives = Tensor(X.shape());
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t sub = rng();
        Tensor img = Tensor({image_h, image_w}, std::vector<double>(X.row(i).begin(), X.row(i).end()));
        Tensor pos = elastic_transform(img, elastic.alpha, elastic.sigma, sub);
        std::copy(pos.data().begin(), pos.data().end(), b.positives.row(i).begin());

        const auto& pool = others[S[i]];
        const auto neg = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        auto src = X.row(neg);
        std::copy(src.begin(), src.end(), b.negatives.row(i).begin());
        b.anchor_index.push_back(i);
        b.negative_index.push_back(neg);
    }
    return b;
}

TripletBatch gen_pairs_supervised(const Tensor& X, std::span<const int> labels, std::uint64_t seed)
{
    const auto n = X.dim(0);
    if (labels.size() != n)
        throw ShapeError("gen_pairs_supervised: label count differs from dataset");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
    if (by_class.size() < 2)
        throw std::invalid_argument("supervised pairs need at least two classes");
    for (const auto& [c, members] : by_class)
        if (members.size() < 2)
            throw std::invalid_argument("class " + std::to_string(c) + " has a single member; no positive exists");

    TripletBatch b;
    b.mode = PairMode::supervised;
    b.anchors = X;
    b.positives = Tensor(X.shape());
    b.negatives = Tensor(X.shape());
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& same = by_class[labels[i]];
        // uniform over same-class members other than i
        auto pick = std::uniform_int_distribution<std::size_t>(0, same.size() - 2)(rng);
        const auto self = static_cast<std::size_t>(std::find(same.begin(), same.end(), i) - same.begin());
        if (pick >= self) ++pick;
        const auto pos = same[pick];

        const auto n_other = n - same.size();
        auto r = std::uniform_int_distribution<std::size_t>(0, n_other - 1)(rng);
        std::size_t neg = 0;
        for (const auto& [c, members] : by_class) {
            if (c == labels[i]) continue;
            if (r < members.size()) {
                neg = members[r];
                break;
            }
            r -= members.size();
        }

        auto ps = X.row(pos);
        std::copy(ps.begin(), ps.end(), b.positives.row(i).begin());
        auto ns = X.row(neg);
        std::copy(ns.begin(), ns.end(), b.negatives.row(i).begin());
        b.anchor_index.push_back(i);
        b.positive_index.push_back(pos);
        b.negative_index.push_back(neg);
    }
    return b;
}

std::vector<Tensor*> TclModel::parameters()
{
    std::vector<Tensor*> ps = trunk.parameters();
    for (auto& h : heads)
        for (auto* p : h.parameters()) ps.push_back(p);
    return ps;
}

std::size_t TclModel::param_count() const
{
    std::size_t n = trunk.param_count();
    for (const auto& h : heads) n += h.param_count();
    return n;
}

TclModel make_tcl_conv(std::size_t image_h, std::size_t image_w, std::size_t k, Rng& rng, std::size_t trunk_dim,
                       std::size_t embed_dim)
{
    TclModel m;
    m.input_shape = {1, image_h, image_w};
    auto c1 = Conv2dLayer::glorot(1, 8, 3, 3, Activation::relu, rng);
    auto c2 = Conv2dLayer::glorot(8, 16, 3, 3, Activation::relu, rng);
    const Shape s2 = c2.output_shape(c1.output_shape(m.input_shape));
    m.trunk.add(c1);
    m.trunk.add(c2);
    m.trunk.add(DenseLayer::glorot(shape_product(s2), trunk_dim, Activation::relu, rng));
    for (std::size_t j = 0; j < k; ++j)
        m.heads.emplace_back(std::vector<Layer>{DenseLayer::glorot(trunk_dim, embed_dim, Activation::linear, rng)});
    return m;
}

TclModel make_tcl_dense(std::size_t d, std::size_t hidden, std::size_t embed_dim, std::size_t k, Rng& rng)
{
    TclModel m;
    m.input_shape = {d};
    m.trunk.add(DenseLayer::glorot(d, hidden, Activation::tanh, rng));
    for (std::size_t j = 0; j < k; ++j)
        m.heads.emplace_back(std::vector<Layer>{DenseLayer::glorot(hidden, embed_dim, Activation::linear, rng)});
    return m;
}

Tensor tcl_embed(const TclModel& model, const Tensor& X, std::size_t j)
{
    if (j >= model.k())
        throw std::out_of_range("tcl_embed: cluster index out of range");
    Tensor z = model.heads[j].evaluate(model.trunk.evaluate(as_batch(model, X)));
    return z.reshaped({X.dim(0), z.row_size()});
}

TclLoss tcl_loss(const TclModel& model, const TripletBatch& batch, const AssignmentMatrix& S)
{
    const auto n = batch.anchors.dim(0);
    if (batch.positives.dim(0) != n || batch.negatives.dim(0) != n || S.n() != n || S.k() != model.k())
        throw ShapeError("tcl_loss: triplets, assignment and model disagree");
    TclLoss out;
    out.matrix = Tensor::matrix(model.k(), n);
    std::vector<double> norms;
    for (std::size_t j = 0; j < model.k(); ++j) {
        Tensor a = tcl_embed(model, batch.anchors, j);
        Tensor p = tcl_embed(model, batch.positives, j);
        Tensor m = tcl_embed(model, batch.negatives, j);
        normalize_rows(a, norms);
        normalize_rows(p, norms);
        normalize_rows(m, norms);
        for (std::size_t i = 0; i < n; ++i) out.matrix(j, i) = dot(a.row(i), m.row(i)) - dot(a.row(i), p.row(i));
    }
    out.value = masked_objective(out.matrix, S) / static_cast<double>(n);
    return out;
}

double tcl_objective_and_grads(TclModel& model, const TripletBatch& batch, const AssignmentMatrix& S,
                               std::span<const std::size_t> subset, ParamGrads& grads)
{
    const auto n = batch.anchors.dim(0);
    if (S.n() != n || S.k() != model.k())
        throw ShapeError("tcl step: triplets, assignment and model disagree");
    std::vector<std::size_t> all;
    if (subset.empty()) {
        all.resize(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        subset = all;
    }
    const double inv_n = 1.0 / static_cast<double>(subset.size());

    grads.clear();
    for (Tensor* p : model.parameters()) grads.push_back(zeros_like(*p));
    std::vector<std::size_t> head_off(model.k());
    std::size_t off = model.trunk.parameters().size();
    for (std::size_t j = 0; j < model.k(); ++j) {
        head_off[j] = off;
        off += model.heads[j].parameters().size();
    }

    double objective = 0.0;
    for (std::size_t j = 0; j < model.k(); ++j) {
        std::vector<std::size_t> rows;
        for (auto i : subset)
            if (S[i] == j) rows.push_back(i);
        if (rows.empty())
            continue;
        const auto m = rows.size();

        // anchors, positives, negatives stacked into one 3m batch
        const auto d = batch.anchors.row_size();
        Tensor stacked({3 * m, d});
        for (std::size_t r = 0; r < m; ++r) {
            std::copy_n(batch.anchors.row(rows[r]).begin(), d, stacked.row(r).begin());
            std::copy_n(batch.positives.row(rows[r]).begin(), d, stacked.row(m + r).begin());
            std::copy_n(batch.negatives.row(rows[r]).begin(), d, stacked.row(2 * m + r).begin());
        }
        Tensor h = model.trunk.forward(as_batch(model, stacked));
        Tensor z = model.heads[j].forward(h);
        z.reshape({3 * m, z.row_size()});
        const auto e = z.row_size();
        std::vector<double> norms;
        Tensor zn = z;
        normalize_rows(zn, norms);

        Tensor gn({3 * m, e});
        for (std::size_t r = 0; r < m; ++r) {
            auto a = zn.row(r), p = zn.row(m + r), q = zn.row(2 * m + r);
            objective += inv_n * (dot(a, q) - dot(a, p));
            auto ga = gn.row(r), gp = gn.row(m + r), gq = gn.row(2 * m + r);
            for (std::size_t c = 0; c < e; ++c) {
                ga[c] = inv_n * (q[c] - p[c]);
                gp[c] = -inv_n * a[c];
                gq[c] = inv_n * a[c];
            }
        }
        // through the normalization: dz = (g - zhat (zhat . g)) / |z|, or g / floor below the floor
        for (std::size_t r = 0; r < 3 * m; ++r) {
            auto g = gn.row(r);
            auto u = zn.row(r);
            const double proj = norms[r] > min_embedding_norm ? dot(u, g) : 0.0;
            for (std::size_t c = 0; c < e; ++c) g[c] = (g[c] - u[c] * proj) / norms[r];
        }

        auto bh = model.heads[j].backward(gn);
        add_at(grads, head_off[j], bh.grads);
        auto bt = model.trunk.backward(bh.input_grad);
        add_at(grads, 0, bt.grads);
    }
    return objective;
}

double tcl_grad_step(TclModel& model, const TripletBatch& batch, const AssignmentMatrix& S, Optimizer& opt,
                     std::span<const std::size_t> subset)
{
    ParamGrads grads;
    const double obj = tcl_objective_and_grads(model, batch, S, subset, grads);
    auto params = model.parameters();
    opt.step(params, grads);
    return obj;
}

CosineSummary cosine_summary(const Tensor& embeddings, std::span<const int> labels)
{
    const auto n = embeddings.dim(0);
    Tensor z = embeddings;
    std::vector<double> norms;
    normalize_rows(z, norms);
    double within = 0.0, between = 0.0;
    std::size_t nw = 0, nb = 0;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
            const double c = dot(z.row(a), z.row(b));
            if (labels[a] == labels[b]) {
                within += c;
                ++nw;
            } else {
                between += c;
                ++nb;
            }
        }
    return {nw ? within / static_cast<double>(nw) : 0.0, nb ? between / static_cast<double>(nb) : 0.0};
}

}  // namespace tenrep
