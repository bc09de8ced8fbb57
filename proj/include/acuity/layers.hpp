#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "acuity/random.hpp"
#include "acuity/tensor.hpp"

namespace acuity::nn {

/// Convolution with ReLU. Cross-correlation, no kernel flip.
struct ConvSpec {
    std::size_t out_channels = 1;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t pad = 0;

    bool operator==(const ConvSpec&) const = default;
};

struct MaxPoolSpec {
    std::size_t window = 2;
    std::size_t stride = 2;

    bool operator==(const MaxPoolSpec&) const = default;
};

/// Cross-channel local response normalization:
///   out[c] = in[c] / (k + alpha * sum_{|c'-c| <= size/2} in[c']^2)^beta
struct LrnSpec {
    std::size_t size = 5;
    double k = 2.0;
    double alpha = 1e-4;
    double beta = 0.75;

    bool operator==(const LrnSpec&) const = default;
};

enum class Activation { none, tanh, softmax };

struct DenseSpec {
    std::size_t units = 1;
    Activation activation = Activation::none;
    double dropout_rate = 0.0;

    bool operator==(const DenseSpec&) const = default;
};

struct FlattenSpec {
    bool operator==(const FlattenSpec&) const = default;
};

using LayerSpec = std::variant<ConvSpec, MaxPoolSpec, LrnSpec, DenseSpec, FlattenSpec>;

std::string layer_kind(const LayerSpec& spec);
std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

/// Per-sample output shape ([C,H,W] or [D]) of one layer. Throws ShapeError
/// when the layer cannot consume `input`.
Shape layer_output_shape(const LayerSpec& spec, const Shape& input);

/// Throws ParameterError for out-of-range hyperparameters.
void validate(const LayerSpec& spec);

// ---------------------------------------------------------------------------
// Convolution

/// input [N,C,H,W], weights [F,C,kh,kw], bias [F] -> relu(conv + bias).
Tensor conv_forward(const Tensor& input, const ConvSpec& spec, const Tensor& weights, const Tensor& bias);

struct ConvGrads {
    Tensor d_input; // left scalar when not requested
    Tensor d_weights;
    Tensor d_bias;
};

/// `output` is the post-ReLU result of conv_forward on `input`.
ConvGrads conv_backward(const Tensor& input, const Tensor& output, const Tensor& d_output,
                        const ConvSpec& spec, const Tensor& weights, bool need_input_grad = true);

// ---------------------------------------------------------------------------
// Max pooling

struct PoolResult {
    Tensor output;
    /// Flat index into the input buffer of each output element's source.
    std::vector<std::size_t> argmax;
};

PoolResult maxpool_forward(const Tensor& input, const MaxPoolSpec& spec);
Tensor maxpool_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                        const Tensor& d_output);

// ---------------------------------------------------------------------------
// Local response normalization

struct LrnResult {
    Tensor output;
    /// k + alpha * windowed sum of squares, same shape as the input.
    Tensor denominator;
};

LrnResult lrn_forward(const Tensor& input, const LrnSpec& spec);
Tensor lrn_backward(const Tensor& input, const Tensor& denominator, const Tensor& d_output,
                    const LrnSpec& spec);

// ---------------------------------------------------------------------------
// Dense

enum class Mode { train, eval };

struct DenseResult {
    Tensor pre_activation;
    Tensor output;
    /// Inverted-dropout multipliers (0 or 1/(1-rate)); empty when no mask applied.
    std::vector<double> mask;
};

/// Softmax-activated layers return probabilities here; the network's
/// training path stops at the logits instead.
DenseResult dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                          const DenseSpec& spec, Mode mode, RandomSource* rng);

struct DenseGrads {
    Tensor d_input;
    Tensor d_weights;
    Tensor d_bias;
};

/// Gradient through the mask and the activation. For softmax layers
/// `d_output` is taken to be the gradient w.r.t. the pre-activation (logits).
DenseGrads dense_backward(const Tensor& input, const Tensor& pre_activation, const std::vector<double>& mask,
                          const Tensor& d_output, const DenseSpec& spec, const Tensor& weights);

// ---------------------------------------------------------------------------
// Loss

/// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

struct LossResult {
    double loss = 0.0;
    Tensor d_logits;
};

/// Mean cross-entropy over the batch; d_logits = (softmax - onehot) / N.
LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

} // namespace acuity::nn
