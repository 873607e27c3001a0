#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "tenrep/tensor.hpp"

namespace tenrep {

using Rng = std::mt19937_64;

enum class Activation { linear, tanh, relu, sigmoid };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

/// Fully connected layer, y = act(W x + b). Inputs of rank > 1 per sample are flattened.
struct DenseLayer {
    Tensor weight;  // fan_out x fan_in
    Tensor bias;    // fan_out, empty for a bias-free layer
    Activation activation = Activation::linear;

    std::size_t fan_in() const { return weight.dim(1); }
    std::size_t fan_out() const { return weight.dim(0); }
    bool has_bias() const { return !bias.empty(); }

    static DenseLayer zeros(std::size_t fan_in, std::size_t fan_out, Activation act, bool with_bias = true);
    /// Glorot-uniform weights, zero bias.
    static DenseLayer glorot(std::size_t fan_in, std::size_t fan_out, Activation act, Rng& rng,
                             bool with_bias = true);
};

/// 2-D cross-correlation with valid padding.
struct Conv2dLayer {
    Tensor kernels;  // out_ch x in_ch x kh x kw
    Tensor bias;     // out_ch
    std::size_t stride = 1;
    Activation activation = Activation::relu;

    std::size_t in_channels() const { return kernels.dim(1); }
    std::size_t out_channels() const { return kernels.dim(0); }
    std::size_t kernel_h() const { return kernels.dim(2); }
    std::size_t kernel_w() const { return kernels.dim(3); }

    /// (in_ch, H, W) -> (out_ch, H', W'); throws ShapeError if the kernel does not fit.
    Shape output_shape(const Shape& input) const;

    static Conv2dLayer glorot(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw,
                              Activation act, Rng& rng);
};

/// Cross-correlation plus bias for one (in_ch, H, W) image; no activation.
Tensor conv2d_forward(const Conv2dLayer& layer, const Tensor& img);

using Layer = std::variant<DenseLayer, Conv2dLayer>;

/// Gradients in the same order as Network::parameters().
using ParamGrads = std::vector<Tensor>;

/**
 * Ordered stack of layers with hand-written backprop.
 *
 * forward() accepts a single sample (rank of the first layer's input) or a
 * batch with a leading batch axis. An empty network is the identity map.
 * The cache written by forward() is consumed by the next backward().
 */
class Network {
public:
    struct Backward {
        ParamGrads grads;
        Tensor input_grad;
    };

    Network() = default;
    explicit Network(std::vector<Layer> layers);

    void add(Layer layer);
    bool empty() const noexcept { return layers_.empty(); }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::vector<Layer>& layers() noexcept { return layers_; }

    Tensor forward(const Tensor& x);
    /// forward() without touching the cache.
    Tensor evaluate(const Tensor& x) const;
    Backward backward(const Tensor& upstream);
    bool has_cache() const noexcept { return cached_; }

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    ParamGrads zero_grads() const;
    std::size_t param_count() const;

private:
    struct Cache {
        Tensor input;
        Tensor output;
    };

    Tensor run(const Tensor& x, std::vector<Cache>* cache) const;

    std::vector<Layer> layers_;
    std::vector<Cache> cache_;
    bool cached_ = false;
    bool batched_ = false;
};

std::size_t param_count(const Network& net);

/// into += g elementwise, tensor by tensor.
void accumulate(ParamGrads& into, const ParamGrads& g);

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view name);

class Optimizer {
public:
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double epsilon = 1e-8;

    Optimizer(OptimizerKind kind, double learning_rate);

    /// Applies one update. Throws ShapeError on mismatch and NumericError, leaving
    /// params untouched, if the update would be non-finite.
    void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

    OptimizerKind kind() const noexcept { return kind_; }
    double learning_rate() const noexcept { return lr_; }
    std::int64_t steps() const noexcept { return t_; }

private:
    OptimizerKind kind_;
    double lr_;
    std::int64_t t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

}  // namespace tenrep
