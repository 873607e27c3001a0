#include "tenrep/nn.hpp"

#include <cmath>
#include <string>

namespace tenrep {

std::string_view to_string(Activation a)
{
    switch (a) {
    case Activation::linear: return "linear";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

Activation activation_from_string(std::string_view name)
{
    if (name == "linear") return Activation::linear;
    if (name == "tanh") return Activation::tanh;
    if (name == "relu") return Activation::relu;
    if (name == "sigmoid") return Activation::sigmoid;
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

namespace {

void apply_activation(Activation a, std::span<double> v)
{
    switch (a) {
    case Activation::linear:
        return;
    case Activation::tanh:
        for (auto& x : v) x = std::tanh(x);
        return;
    case Activation::relu:
        for (auto& x : v) x = x > 0.0 ? x : 0.0;
        return;
    case Activation::sigmoid:
        for (auto& x : v) x = 1.0 / (1.0 + std::exp(-x));
        return;
    }
}

// grad <- grad * act'(pre), expressed through the activation output
void activation_backward(Activation a, std::span<const double> out, std::span<double> grad)
{
    switch (a) {
    case Activation::linear:
        return;
    case Activation::tanh:
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= 1.0 - out[i] * out[i];
        return;
    case Activation::relu:
        for (std::size_t i = 0; i < grad.size(); ++i)
            if (out[i] <= 0.0) grad[i] = 0.0;
        return;
    case Activation::sigmoid:
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= out[i] * (1.0 - out[i]);
        return;
    }
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out)
{
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void glorot_fill(Tensor& t, double bound, Rng& rng)
{
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& w : t.data()) w = u(rng);
}

std::size_t sample_rank(const Layer& layer)
{
    return std::holds_alternative<Conv2dLayer>(layer) ? 3 : 1;
}

Tensor dense_forward(const DenseLayer& l, const Tensor& in)
{
    const auto batch = in.dim(0);
    const auto fi = l.fan_in(), fo = l.fan_out();
    if (in.row_size() != fi)
        throw ShapeError("dense layer expects " + std::to_string(fi) + " inputs, got " +
                         std::to_string(in.row_size()));
    Tensor out({batch, fo});
    const double* w = l.weight.data().data();
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = in.data().data() + b * fi;
        double* y = out.data().data() + b * fo;
        for (std::size_t o = 0; o < fo; ++o) {
            const double* wr = w + o * fi;
            double s = l.has_bias() ? l.bias[o] : 0.0;
            for (std::size_t i = 0; i < fi; ++i) s += wr[i] * x[i];
            y[o] = s;
        }
    }
    return out;
}

void conv_accumulate(const Conv2dLayer& l, const double* img, std::size_t h, std::size_t w, double* out,
                     std::size_t oh, std::size_t ow)
{
    const auto oc = l.out_channels(), ic = l.in_channels(), kh = l.kernel_h(), kw = l.kernel_w();
    const auto s = l.stride;
    for (std::size_t o = 0; o < oc; ++o) {
        double* dst = out + o * oh * ow;
        const double b = l.bias.empty() ? 0.0 : l.bias[o];
        for (std::size_t p = 0; p < oh * ow; ++p) dst[p] = b;
        for (std::size_t c = 0; c < ic; ++c) {
            const double* src = img + c * h * w;
            for (std::size_t u = 0; u < kh; ++u)
                for (std::size_t v = 0; v < kw; ++v) {
                    const double k = l.kernels[((o * ic + c) * kh + u) * kw + v];
                    for (std::size_t y = 0; y < oh; ++y) {
                        const double* srow = src + (y * s + u) * w + v;
                        double* drow = dst + y * ow;
                        for (std::size_t x = 0; x < ow; ++x) drow[x] += k * srow[x * s];
                    }
                }
        }
    }
}

Tensor conv_forward_batch(const Conv2dLayer& l, const Tensor& in)
{
    if (in.rank() != 4)
        throw ShapeError("conv layer expects (batch, channels, H, W) input, got " + shape_string(in.shape()));
    const auto batch = in.dim(0);
    const Shape os = l.output_shape({in.dim(1), in.dim(2), in.dim(3)});
    Tensor out({batch, os[0], os[1], os[2]});
    const auto in_stride = in.row_size(), out_stride = out.row_size();
    for (std::size_t b = 0; b < batch; ++b)
        conv_accumulate(l, in.data().data() + b * in_stride, in.dim(2), in.dim(3),
                        out.data().data() + b * out_stride, os[1], os[2]);
    return out;
}

}  // namespace

DenseLayer DenseLayer::zeros(std::size_t fan_in, std::size_t fan_out, Activation act, bool with_bias)
{
    DenseLayer l;
    l.weight = Tensor({fan_out, fan_in});
    if (with_bias) l.bias = Tensor({fan_out});
    l.activation = act;
    return l;
}

DenseLayer DenseLayer::glorot(std::size_t fan_in, std::size_t fan_out, Activation act, Rng& rng, bool with_bias)
{
    DenseLayer l = zeros(fan_in, fan_out, act, with_bias);
    glorot_fill(l.weight, glorot_bound(fan_in, fan_out), rng);
    return l;
}

Shape Conv2dLayer::output_shape(const Shape& input) const
{
    if (input.size() != 3)
        throw ShapeError("conv input must be (channels, H, W), got " + shape_string(input));
    if (input[0] != in_channels())
        throw ShapeError("conv expects " + std::to_string(in_channels()) + " channels, got " +
                         std::to_string(input[0]));
    if (kernel_h() > input[1] || kernel_w() > input[2])
        throw ShapeError("conv kernel larger than image " + shape_string(input));
    if (stride == 0)
        throw ShapeError("conv stride must be positive");
    return {out_channels(), (input[1] - kernel_h()) / stride + 1, (input[2] - kernel_w()) / stride + 1};
}

Conv2dLayer Conv2dLayer::glorot(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw,
                                Activation act, Rng& rng)
{
    Conv2dLayer l;
    l.kernels = Tensor({out_ch, in_ch, kh, kw});
    l.bias = Tensor({out_ch});
    l.activation = act;
    glorot_fill(l.kernels, glorot_bound(in_ch * kh * kw, out_ch * kh * kw), rng);
    return l;
}

Tensor conv2d_forward(const Conv2dLayer& layer, const Tensor& img)
{
    const Shape os = layer.output_shape(img.shape());
    Tensor out(os);
    conv_accumulate(layer, img.data().data(), img.dim(1), img.dim(2), out.data().data(), os[1], os[2]);
    return out;
}

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {}

void Network::add(Layer layer)
{
    layers_.push_back(std::move(layer));
    cached_ = false;
}

Tensor Network::run(const Tensor& x, std::vector<Cache>* cache) const
{
    if (layers_.empty())
        return x;

    Tensor cur = x;
    const auto rank = sample_rank(layers_.front());
    const bool batched = x.rank() > rank;
    if (!batched) {
        Shape s{1};
        s.insert(s.end(), x.shape().begin(), x.shape().end());
        cur.reshape(std::move(s));
    }

    for (const auto& layer : layers_) {
        Tensor next = std::visit(
            [&](const auto& l) -> Tensor {
                using T = std::decay_t<decltype(l)>;
                Tensor y;
                if constexpr (std::is_same_v<T, DenseLayer>)
                    y = dense_forward(l, cur);
                else
                    y = conv_forward_batch(l, cur);
                apply_activation(l.activation, y.data());
                return y;
            },
            layer);
        if (cache)
            cache->push_back({std::move(cur), next});
        cur = std::move(next);
    }
    cur.require_finite("network forward");

    if (!batched) {
        Shape s(cur.shape().begin() + 1, cur.shape().end());
        cur.reshape(std::move(s));
    }
    return cur;
}

Tensor Network::forward(const Tensor& x)
{
    cache_.clear();
    cached_ = false;
    Tensor out = run(x, &cache_);
    batched_ = !layers_.empty() && x.rank() > sample_rank(layers_.front());
    cached_ = true;
    return out;
}

Tensor Network::evaluate(const Tensor& x) const
{
    return run(x, nullptr);
}

Network::Backward Network::backward(const Tensor& upstream)
{
    if (!cached_)
        throw std::logic_error("Network::backward called without a preceding forward");
    cached_ = false;

    Backward result;
    if (layers_.empty()) {
        result.input_grad = upstream;
        return result;
    }

    Tensor g = upstream;
    const Shape& out_shape = cache_.back().output.shape();
    if (shape_product(g.shape()) != shape_product(out_shape))
        throw ShapeError("backward: upstream gradient " + shape_string(g.shape()) + " does not match output " +
                         shape_string(out_shape));
    g.reshape(out_shape);

    std::vector<std::vector<Tensor>> per_layer(layers_.size());
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const Cache& c = cache_[li];
        const Tensor& in = c.input;
        Tensor din(in.shape());
        std::visit(
            [&](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                activation_backward(l.activation, c.output.data(), g.data());
                if constexpr (std::is_same_v<T, DenseLayer>) {
                    const auto fi = l.fan_in(), fo = l.fan_out(), batch = in.dim(0);
                    Tensor dw({fo, fi});
                    Tensor db = l.has_bias() ? Tensor({fo}) : Tensor();
                    for (std::size_t b = 0; b < batch; ++b) {
                        const double* x = in.data().data() + b * fi;
                        const double* gy = g.data().data() + b * fo;
                        double* dx = din.data().data() + b * fi;
                        for (std::size_t o = 0; o < fo; ++o) {
                            const double go = gy[o];
                            if (go == 0.0) continue;
                            double* dwr = dw.data().data() + o * fi;
                            const double* wr = l.weight.data().data() + o * fi;
                            for (std::size_t i = 0; i < fi; ++i) {
                                dwr[i] += go * x[i];
                                dx[i] += go * wr[i];
                            }
                            if (l.has_bias()) db[o] += go;
                        }
                    }
                    per_layer[li].push_back(std::move(dw));
                    if (l.has_bias()) per_layer[li].push_back(std::move(db));
                } else {
                    const auto batch = in.dim(0), ic = l.in_channels(), oc = l.out_channels();
                    const auto kh = l.kernel_h(), kw = l.kernel_w(), s = l.stride;
                    const auto h = in.dim(2), w = in.dim(3), oh = g.dim(2), ow = g.dim(3);
                    Tensor dk(l.kernels.shape());
                    Tensor db({oc});
                    for (std::size_t b = 0; b < batch; ++b) {
                        const double* img = in.data().data() + b * ic * h * w;
                        double* dimg = din.data().data() + b * ic * h * w;
                        const double* gb = g.data().data() + b * oc * oh * ow;
                        for (std::size_t o = 0; o < oc; ++o) {
                            const double* go = gb + o * oh * ow;
                            for (std::size_t p = 0; p < oh * ow; ++p) db[o] += go[p];
                            for (std::size_t c = 0; c < ic; ++c)
                                for (std::size_t u = 0; u < kh; ++u)
                                    for (std::size_t v = 0; v < kw; ++v) {
                                        const std::size_t ki = ((o * ic + c) * kh + u) * kw + v;
                                        const double k = l.kernels[ki];
                                        double acc = 0.0;
                                        for (std::size_t y = 0; y < oh; ++y) {
                                            const std::size_t base = c * h * w + (y * s + u) * w + v;
                                            const double* srow = img + base;
                                            double* drow = dimg + base;
                                            const double* grow = go + y * ow;
                                            for (std::size_t x = 0; x < ow; ++x) {
                                                acc += grow[x] * srow[x * s];
                                                drow[x * s] += k * grow[x];
                                            }
                                        }
                                        dk[ki] += acc;
                                    }
                        }
                    }
                    per_layer[li].push_back(std::move(dk));
                    per_layer[li].push_back(std::move(db));
                }
            },
            layers_[li]);
        g = std::move(din);
    }

    for (auto& lg : per_layer)
        for (auto& t : lg) result.grads.push_back(std::move(t));

    if (!batched_) {
        Shape s(g.shape().begin() + 1, g.shape().end());
        g.reshape(std::move(s));
    }
    result.input_grad = std::move(g);
    cache_.clear();
    return result;
}

std::vector<Tensor*> Network::parameters()
{
    std::vector<Tensor*> ps;
    for (auto& layer : layers_)
        std::visit(
            [&](auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, DenseLayer>) {
                    ps.push_back(&l.weight);
                    if (l.has_bias()) ps.push_back(&l.bias);
                } else {
                    ps.push_back(&l.kernels);
                    ps.push_back(&l.bias);
                }
            },
            layer);
    return ps;
}

std::vector<const Tensor*> Network::parameters() const
{
    auto ps = const_cast<Network*>(this)->parameters();
    return {ps.begin(), ps.end()};
}

ParamGrads Network::zero_grads() const
{
    ParamGrads g;
    for (const Tensor* p : parameters()) g.push_back(zeros_like(*p));
    return g;
}

std::size_t Network::param_count() const
{
    std::size_t n = 0;
    for (const Tensor* p : parameters()) n += p->size();
    return n;
}

std::size_t param_count(const Network& net)
{
    return net.param_count();
}

void accumulate(ParamGrads& into, const ParamGrads& g)
{
    if (into.size() != g.size())
        throw ShapeError("accumulate: gradient list length mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (into[i].shape() != g[i].shape())
            throw ShapeError("accumulate: gradient shape mismatch");
        auto dst = into[i].data();
        auto src = g[i].data();
        for (std::size_t e = 0; e < src.size(); ++e) dst[e] += src[e];
    }
}

std::string_view to_string(OptimizerKind k)
{
    return k == OptimizerKind::sgd ? "sgd" : "adam";
}

OptimizerKind optimizer_from_string(std::string_view name)
{
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adam") return OptimizerKind::adam;
    throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), lr_(learning_rate)
{
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("learning rate must be positive and finite");
}

void Optimizer::step(std::span<Tensor* const> params, std::span<const Tensor> grads)
{
    if (params.size() != grads.size())
        throw ShapeError("optimizer: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i]->shape() != grads[i].shape())
            throw ShapeError("optimizer: gradient " + std::to_string(i) + " shape " +
                             shape_string(grads[i].shape()) + " does not match parameter " +
                             shape_string(params[i]->shape()));

    if (kind_ == OptimizerKind::sgd) {
        std::vector<Tensor> updated;
        updated.reserve(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor p = *params[i];
            for (std::size_t e = 0; e < p.size(); ++e) p[e] -= lr_ * grads[i][e];
            p.require_finite("sgd update");
            updated.push_back(std::move(p));
        }
        for (std::size_t i = 0; i < params.size(); ++i) *params[i] = std::move(updated[i]);
        ++t_;
        return;
    }

    if (m_.empty()) {
        for (const Tensor* p : params) {
            m_.push_back(zeros_like(*p));
            v_.push_back(zeros_like(*p));
        }
    } else if (m_.size() != params.size()) {
        throw ShapeError("adam: parameter list changed between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i)
        if (m_[i].shape() != params[i]->shape())
            throw ShapeError("adam: moment shape does not match parameter");

    const auto t = static_cast<double>(t_ + 1);
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    std::vector<Tensor> m = m_, v = v_, updated;
    updated.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = *params[i];
        for (std::size_t e = 0; e < p.size(); ++e) {
            const double g = grads[i][e];
            m[i][e] = beta1 * m[i][e] + (1.0 - beta1) * g;
            v[i][e] = beta2 * v[i][e] + (1.0 - beta2) * g * g;
            p[e] -= lr_ * (m[i][e] / c1) / (std::sqrt(v[i][e] / c2) + epsilon);
        }
        p.require_finite("adam update");
        updated.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = std::move(updated[i]);
    m_ = std::move(m);
    v_ = std::move(v);
    ++t_;
}

}  // namespace tenrep
