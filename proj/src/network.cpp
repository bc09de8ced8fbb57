#include "acuity/network.hpp"

#include <cmath>

#include "acuity/errors.hpp"

namespace acuity::nn {

void HyperParams::validate() const {
    if (!(learning_rate > 0.0)) throw ParameterError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must lie in [0, 1)");
    if (batch_size == 0) throw ParameterError("batch size must be >= 1");
}

std::size_t NetworkState::class_count() const {
    if (specs.empty()) throw StateError("empty network");
    const auto* last = std::get_if<DenseSpec>(&specs.back());
    if (!last) throw StateError("network does not end in a dense layer");
    return last->units;
}

std::size_t NetworkState::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& layer : params)
        for (const auto& t : layer) n += t.size();
    return n;
}

std::vector<Shape> infer_shapes(const Shape& input_shape, const std::vector<LayerSpec>& specs) {
    std::vector<Shape> shapes{input_shape};
    for (const auto& spec : specs) shapes.push_back(layer_output_shape(spec, shapes.back()));
    return shapes;
}

std::vector<std::vector<Shape>> parameter_shapes(const Shape& input_shape, const std::vector<LayerSpec>& specs) {
    const auto shapes = infer_shapes(input_shape, specs);
    std::vector<std::vector<Shape>> out(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (const auto* c = std::get_if<ConvSpec>(&specs[i]))
            out[i] = {{c->out_channels, shapes[i][0], c->kernel_h, c->kernel_w}, {c->out_channels}};
        else if (const auto* d = std::get_if<DenseSpec>(&specs[i]))
            out[i] = {{shapes[i][0], d->units}, {d->units}};
    }
    return out;
}

void validate(const NetworkState& net) {
    if (net.specs.empty()) throw StateError("network has no layers");
    for (std::size_t i = 0; i < net.specs.size(); ++i) {
        const auto* d = std::get_if<DenseSpec>(&net.specs[i]);
        const bool is_softmax = d && d->activation == Activation::softmax;
        if (is_softmax != (i + 1 == net.specs.size()))
            throw StateError("exactly the final layer must be a softmax dense layer");
    }
    const auto expected = parameter_shapes(net.input_shape, net.specs);
    if (net.params.size() != expected.size() || net.velocities.size() != expected.size())
        throw StateError("parameter list does not match layer count");
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (net.params[i].size() != expected[i].size() || net.velocities[i].size() != expected[i].size())
            throw StateError("layer " + std::to_string(i) + " has the wrong number of parameter tensors");
        for (std::size_t j = 0; j < expected[i].size(); ++j)
            if (net.params[i][j].shape() != expected[i][j] || net.velocities[i][j].shape() != expected[i][j])
                throw StateError("layer " + std::to_string(i) + " parameter " + std::to_string(j) + " has shape " +
                                 shape_string(net.params[i][j].shape()) + ", expected " +
                                 shape_string(expected[i][j]));
    }
}

NetworkState build_network(Shape input_shape, std::vector<LayerSpec> specs, const RandomSource& init_rng) {
    NetworkState net;
    net.input_shape = std::move(input_shape);
    net.specs = std::move(specs);
    const auto shapes = parameter_shapes(net.input_shape, net.specs);
    net.params.resize(shapes.size());
    net.velocities.resize(shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (shapes[i].empty()) continue;
        RandomSource rng = init_rng.split(i);
        const Shape& ws = shapes[i][0];
        Fill fill;
        if (std::holds_alternative<ConvSpec>(net.specs[i])) {
            const double fan_in = static_cast<double>(ws[1] * ws[2] * ws[3]);
            fill = NormalFill{0.0, std::sqrt(2.0 / fan_in)};
        } else {
            const double limit = std::sqrt(6.0 / static_cast<double>(ws[0] + ws[1]));
            fill = UniformFill{-limit, limit};
        }
        net.params[i] = {make_tensor(ws, fill, rng), Tensor(shapes[i][1])};
        net.velocities[i] = {Tensor(ws), Tensor(shapes[i][1])};
    }
    validate(net);
    return net;
}

Architecture Architecture::full() {
    return Architecture{};
}

Architecture Architecture::desk() {
    Architecture a;
    a.input_size = 32;
    a.conv_channels = {16, 32, 32, 32, 32};
    a.conv_kernels = {5, 5, 3, 3, 3};
    a.conv1_stride = 1;
    a.dense_units = 128;
    return a;
}

Architecture Architecture::for_scale(Scale scale) {
    return scale == Scale::full ? full() : desk();
}

std::vector<LayerSpec> standard_layers(const Architecture& arch, std::size_t n_classes) {
    if (n_classes < 2) throw ParameterError("a classifier needs at least two classes");
    auto conv = [&](std::size_t i) -> LayerSpec {
        const std::size_t k = arch.conv_kernels[i];
        if (i == 0) return ConvSpec{arch.conv_channels[0], k, k, arch.conv1_stride, 0};
        return ConvSpec{arch.conv_channels[i], k, k, 1, (k - 1) / 2};
    };
    return {
        conv(0), arch.pool, arch.lrn,
        conv(1), arch.pool, arch.lrn,
        conv(2), conv(3), conv(4),
        arch.pool, arch.lrn,
        FlattenSpec{},
        DenseSpec{arch.dense_units, Activation::tanh, arch.dropout_rate},
        DenseSpec{arch.dense_units, Activation::tanh, arch.dropout_rate},
        DenseSpec{n_classes, Activation::softmax, 0.0},
    };
}

NetworkState build_standard_network(const Architecture& arch, std::size_t n_classes, std::uint64_t seed) {
    return build_network({1, arch.input_size, arch.input_size}, standard_layers(arch, n_classes), RandomSource(seed));
}

NetworkState build_standard_network(Scale scale, std::size_t n_classes, std::uint64_t seed) {
    return build_standard_network(Architecture::for_scale(scale), n_classes, seed);
}

namespace {

void check_batch(const NetworkState& net, const Tensor& batch) {
    if (batch.rank() != net.input_shape.size() + 1)
        throw ShapeError("batch " + shape_string(batch.shape()) + " does not match network input " +
                         shape_string(net.input_shape));
    for (std::size_t i = 0; i < net.input_shape.size(); ++i)
        if (batch.dim(i + 1) != net.input_shape[i])
            throw ShapeError("batch " + shape_string(batch.shape()) + " does not match network input " +
                             shape_string(net.input_shape));
}

Tensor flatten(const Tensor& x) {
    return x.reshaped({x.dim(0), x.size() / x.dim(0)});
}

// Shared by the eval and train paths; `trace` is null in eval mode.
Tensor run(const NetworkState& net, const Tensor& batch, std::size_t last, bool logits_only,
           ForwardTrace* trace, RandomSource* rng) {
    check_batch(net, batch);
    if (last >= net.layer_count()) throw ParameterError("layer index " + std::to_string(last) + " out of range");
    const Mode mode = trace ? Mode::train : Mode::eval;
    if (trace) {
        trace->activations.assign(1, batch);
        trace->pre_activations.assign(net.layer_count(), Tensor());
        trace->dropout_masks.assign(net.layer_count(), {});
        trace->pool_argmax.assign(net.layer_count(), {});
        trace->lrn_denominators.assign(net.layer_count(), Tensor());
    }

    Tensor x = batch;
    for (std::size_t i = 0; i <= last; ++i) {
        const auto& spec = net.specs[i];
        const auto& p = net.params[i];
        if (const auto* c = std::get_if<ConvSpec>(&spec)) {
            x = conv_forward(x, *c, p[0], p[1]);
        } else if (const auto* m = std::get_if<MaxPoolSpec>(&spec)) {
            auto r = maxpool_forward(x, *m);
            x = std::move(r.output);
            if (trace) trace->pool_argmax[i] = std::move(r.argmax);
        } else if (const auto* l = std::get_if<LrnSpec>(&spec)) {
            auto r = lrn_forward(x, *l);
            x = std::move(r.output);
            if (trace) trace->lrn_denominators[i] = std::move(r.denominator);
        } else if (const auto* d = std::get_if<DenseSpec>(&spec)) {
            DenseSpec effective = *d;
            const bool stop_at_logits = d->activation == Activation::softmax && logits_only;
            if (stop_at_logits) effective.activation = Activation::none;
            auto r = dense_forward(x, p[0], p[1], effective, mode, rng);
            x = std::move(r.output);
            if (trace) {
                trace->pre_activations[i] = std::move(r.pre_activation);
                trace->dropout_masks[i] = std::move(r.mask);
            }
        } else {
            x = flatten(x);
        }
        if (trace) trace->activations.push_back(x);
    }
    return x;
}

} // namespace

Tensor forward(const NetworkState& net, const Tensor& batch, std::optional<std::size_t> through_layer) {
    return run(net, batch, through_layer.value_or(net.layer_count() - 1), false, nullptr, nullptr);
}

Tensor forward_logits(const NetworkState& net, const Tensor& batch) {
    return run(net, batch, net.layer_count() - 1, true, nullptr, nullptr);
}

ForwardTrace forward_train(const NetworkState& net, const Tensor& batch, RandomSource& rng) {
    ForwardTrace trace;
    run(net, batch, net.layer_count() - 1, true, &trace, &rng);
    return trace;
}

Gradients backward(const NetworkState& net, const ForwardTrace& trace, const Tensor& d_logits) {
    const std::size_t layers = net.layer_count();
    if (trace.layer_count() != layers || trace.pre_activations.size() != layers)
        throw StateError("backward requires a complete training-mode trace of this network");
    if (d_logits.shape() != trace.logits().shape())
        throw ShapeError("logit gradient " + shape_string(d_logits.shape()) + " does not match logits " +
                         shape_string(trace.logits().shape()));

    Gradients grads(layers);
    Tensor g = d_logits;
    for (std::size_t i = layers; i-- > 0;) {
        const auto& spec = net.specs[i];
        const auto& p = net.params[i];
        const Tensor& in = trace.activations[i];
        const Tensor& out = trace.activations[i + 1];
        if (const auto* c = std::get_if<ConvSpec>(&spec)) {
            auto r = conv_backward(in, out, g, *c, p[0], i > 0);
            grads[i] = {std::move(r.d_weights), std::move(r.d_bias)};
            g = std::move(r.d_input);
        } else if (std::holds_alternative<MaxPoolSpec>(spec)) {
            if (trace.pool_argmax[i].size() != out.size()) throw StateError("trace lacks pooling indices");
            g = maxpool_backward(in.shape(), trace.pool_argmax[i], g);
        } else if (const auto* l = std::get_if<LrnSpec>(&spec)) {
            g = lrn_backward(in, trace.lrn_denominators[i], g, *l);
        } else if (const auto* d = std::get_if<DenseSpec>(&spec)) {
            DenseSpec effective = *d;
            if (effective.activation == Activation::softmax) effective.activation = Activation::none;
            auto r = dense_backward(in, trace.pre_activations[i], trace.dropout_masks[i], g, effective, p[0]);
            grads[i] = {std::move(r.d_weights), std::move(r.d_bias)};
            g = std::move(r.d_input);
        } else {
            g = g.reshaped(in.shape());
        }
    }
    return grads;
}

void sgd_momentum_step(NetworkState& net, const Gradients& grads, const HyperParams& hyper) {
    hyper.validate();
    if (grads.size() != net.params.size()) throw ShapeError("gradient list does not match layer count");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].size() != net.params[i].size())
            throw ShapeError("layer " + std::to_string(i) + " gradient count mismatch");
        for (std::size_t j = 0; j < grads[i].size(); ++j)
            if (grads[i][j].shape() != net.params[i][j].shape())
                throw ShapeError("layer " + std::to_string(i) + " gradient shape mismatch");
    }
    for (std::size_t i = 0; i < grads.size(); ++i)
        for (std::size_t j = 0; j < grads[i].size(); ++j) {
            auto p = net.params[i][j].data();
            auto v = net.velocities[i][j].data();
            auto g = grads[i][j].data();
            for (std::size_t k = 0; k < p.size(); ++k) {
                v[k] = hyper.momentum * v[k] - hyper.learning_rate * g[k];
                p[k] += v[k];
            }
        }
}

StepResult train_step(NetworkState& net, const Tensor& batch, const std::vector<std::size_t>& labels,
                      const HyperParams& hyper, RandomSource& rng) {
    auto trace = forward_train(net, batch, rng);
    auto loss = softmax_cross_entropy(trace.logits(), labels);
    StepResult result{loss.loss, 0};
    const auto predicted = argmax(trace.logits(), 1);
    for (std::size_t i = 0; i < labels.size(); ++i) result.correct += predicted[i] == labels[i];
    sgd_momentum_step(net, backward(net, trace, loss.d_logits), hyper);
    return result;
}

} // namespace acuity::nn
