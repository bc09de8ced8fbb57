#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "acuity/layers.hpp"
#include "acuity/random.hpp"
#include "acuity/tensor.hpp"

namespace acuity::nn {

struct HyperParams {
    double learning_rate = 0.001;
    double momentum = 0.9;
    std::size_t batch_size = 128;

    void validate() const;
    bool operator==(const HyperParams&) const = default;
};

/// Layer stack plus trainable state. Param-free layers hold empty
/// parameter lists; conv and dense layers hold {weights, bias}.
struct NetworkState {
    Shape input_shape; // [C,H,W]
    std::vector<LayerSpec> specs;
    std::vector<std::vector<Tensor>> params;
    std::vector<std::vector<Tensor>> velocities;
    std::uint64_t epoch_counter = 0;

    std::size_t layer_count() const noexcept { return specs.size(); }
    std::size_t class_count() const;
    std::size_t parameter_count() const noexcept;

    bool operator==(const NetworkState&) const = default;
};

using Gradients = std::vector<std::vector<Tensor>>;

/// Per-sample shapes: element 0 is the input, element i+1 the output of layer i.
std::vector<Shape> infer_shapes(const Shape& input_shape, const std::vector<LayerSpec>& specs);

/// Parameter tensor shapes per layer, in declaration order.
std::vector<std::vector<Shape>> parameter_shapes(const Shape& input_shape, const std::vector<LayerSpec>& specs);

/// Checks the structural invariants: shape closure, a single final softmax
/// layer, and params/velocities matching the inferred shapes.
void validate(const NetworkState& net);

/// He-normal weights for conv layers, Xavier-uniform for dense layers, zero
/// biases, zero velocities. Layer i draws from init_rng.split(i).
NetworkState build_network(Shape input_shape, std::vector<LayerSpec> specs, const RandomSource& init_rng);

enum class Scale { full, desk };

/// Channel counts and geometry of the AlexNet-style stack:
/// (conv+pool+lrn) x2, conv x3, pool+lrn, flatten, (dense tanh + dropout) x2,
/// dense softmax.
struct Architecture {
    std::size_t input_size = 100;
    std::array<std::size_t, 5> conv_channels{96, 256, 384, 384, 256};
    std::array<std::size_t, 5> conv_kernels{22, 5, 3, 3, 3};
    std::size_t conv1_stride = 2;
    MaxPoolSpec pool{3, 2};
    LrnSpec lrn{};
    std::size_t dense_units = 4096;
    double dropout_rate = 0.5;

    static Architecture full();
    static Architecture desk();
    static Architecture for_scale(Scale scale);
};

std::vector<LayerSpec> standard_layers(const Architecture& arch, std::size_t n_classes);

NetworkState build_standard_network(Scale scale, std::size_t n_classes, std::uint64_t seed);
NetworkState build_standard_network(const Architecture& arch, std::size_t n_classes, std::uint64_t seed);

/// Everything backward() needs from a training-mode forward pass.
struct ForwardTrace {
    /// activations[0] is the batch; activations[i+1] is layer i's output. The
    /// final softmax layer stores its logits.
    std::vector<Tensor> activations;
    std::vector<Tensor> pre_activations; // dense layers only
    std::vector<std::vector<double>> dropout_masks;
    std::vector<std::vector<std::size_t>> pool_argmax;
    std::vector<Tensor> lrn_denominators;

    std::size_t layer_count() const noexcept { return activations.empty() ? 0 : activations.size() - 1; }
    const Tensor& logits() const { return activations.back(); }
};

/// Eval-mode forward through layer `through_layer` inclusive (default: the
/// whole network, returning class probabilities). No dropout is applied.
Tensor forward(const NetworkState& net, const Tensor& batch, std::optional<std::size_t> through_layer = {});

/// Eval-mode forward returning pre-softmax scores.
Tensor forward_logits(const NetworkState& net, const Tensor& batch);

/// Training-mode forward; dropout masks come from `rng`.
ForwardTrace forward_train(const NetworkState& net, const Tensor& batch, RandomSource& rng);

/// Reverse-mode gradients of the loss for every parameter, given dL/dlogits.
/// Throws StateError when the trace does not belong to this network.
Gradients backward(const NetworkState& net, const ForwardTrace& trace, const Tensor& d_logits);

/// Classical momentum: v <- momentum*v - lr*g; p <- p + v.
void sgd_momentum_step(NetworkState& net, const Gradients& grads, const HyperParams& hyper);

struct StepResult {
    double loss = 0.0;
    std::size_t correct = 0;
};

/// forward_train + loss + backward + SGD update on one batch.
StepResult train_step(NetworkState& net, const Tensor& batch, const std::vector<std::size_t>& labels,
                      const HyperParams& hyper, RandomSource& rng);

} // namespace acuity::nn
