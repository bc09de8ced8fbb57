#include "acuity/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "acuity/errors.hpp"
#include "acuity/linalg.hpp"

namespace acuity::nn {

std::string layer_kind(const LayerSpec& spec) {
    struct {
        std::string operator()(const ConvSpec&) const { return "conv"; }
        std::string operator()(const MaxPoolSpec&) const { return "maxpool"; }
        std::string operator()(const LrnSpec&) const { return "lrn"; }
        std::string operator()(const DenseSpec&) const { return "dense"; }
        std::string operator()(const FlattenSpec&) const { return "flatten"; }
    } visitor;
    return std::visit(visitor, spec);
}

std::string activation_name(Activation a) {
    switch (a) {
    case Activation::none: return "none";
    case Activation::tanh: return "tanh";
    case Activation::softmax: return "softmax";
    }
    return "none";
}

Activation parse_activation(const std::string& name) {
    if (name == "none") return Activation::none;
    if (name == "tanh") return Activation::tanh;
    if (name == "softmax") return Activation::softmax;
    throw ParameterError("unknown activation '" + name + "'");
}

void validate(const LayerSpec& spec) {
    std::visit(
        [](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, ConvSpec>) {
                if (s.out_channels == 0 || s.kernel_h == 0 || s.kernel_w == 0 || s.stride == 0)
                    throw ParameterError("conv channels, kernel and stride must be >= 1");
            } else if constexpr (std::is_same_v<S, MaxPoolSpec>) {
                if (s.window == 0 || s.stride == 0) throw ParameterError("pool window and stride must be >= 1");
            } else if constexpr (std::is_same_v<S, LrnSpec>) {
                if (s.size == 0 || s.size % 2 == 0) throw ParameterError("lrn size must be odd and positive");
                if (!(s.k > 0.0) || s.alpha < 0.0 || s.beta < 0.0)
                    throw ParameterError("lrn requires k > 0, alpha >= 0, beta >= 0");
            } else if constexpr (std::is_same_v<S, DenseSpec>) {
                if (s.units == 0) throw ParameterError("dense units must be >= 1");
                if (!(s.dropout_rate >= 0.0 && s.dropout_rate < 1.0))
                    throw ParameterError("dropout rate must lie in [0, 1)");
            }
        },
        spec);
}

namespace {

std::size_t conv_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (in + 2 * pad < kernel)
        throw ShapeError("kernel " + std::to_string(kernel) + " exceeds padded extent " +
                         std::to_string(in + 2 * pad));
    return (in + 2 * pad - kernel) / stride + 1;
}

void require_rank4(const Tensor& t, const char* what) {
    if (t.rank() != 4) throw ShapeError(std::string(what) + " expects [N,C,H,W], got " + shape_string(t.shape()));
}

struct ConvGeometry {
    std::size_t n, c, h, w, f, kh, kw, oh, ow;
    std::size_t patch() const { return c * kh * kw; }
    std::size_t positions() const { return oh * ow; }
};

ConvGeometry conv_geometry(const Tensor& input, const ConvSpec& spec, const Tensor& weights) {
    require_rank4(input, "conv");
    if (weights.rank() != 4 || weights.dim(0) != spec.out_channels || weights.dim(2) != spec.kernel_h ||
        weights.dim(3) != spec.kernel_w)
        throw ShapeError("conv weights " + shape_string(weights.shape()) + " do not match the layer spec");
    if (weights.dim(1) != input.dim(1))
        throw ShapeError("conv input has " + std::to_string(input.dim(1)) + " channels, weights expect " +
                         std::to_string(weights.dim(1)));
    ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), spec.out_channels,
                   spec.kernel_h, spec.kernel_w, 0, 0};
    g.oh = conv_extent(g.h, g.kh, spec.stride, spec.pad);
    g.ow = conv_extent(g.w, g.kw, spec.stride, spec.pad);
    return g;
}

// col[(c*kh + i)*kw + j][offset + oy*ow + ox] = x[c][oy*s - p + i][ox*s - p + j],
// zero outside the image. `ld` is the row stride of col.
void im2col(const double* x, const ConvGeometry& g, const ConvSpec& spec, double* col, std::size_t ld,
            std::size_t offset) {
    const auto s = static_cast<std::ptrdiff_t>(spec.stride);
    const auto p = static_cast<std::ptrdiff_t>(spec.pad);
    const auto h = static_cast<std::ptrdiff_t>(g.h);
    const auto w = static_cast<std::ptrdiff_t>(g.w);
    for (std::size_t c = 0; c < g.c; ++c)
        for (std::size_t i = 0; i < g.kh; ++i)
            for (std::size_t j = 0; j < g.kw; ++j) {
                double* row = col + ((c * g.kh + i) * g.kw + j) * ld + offset;
                for (std::size_t oy = 0; oy < g.oh; ++oy) {
                    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy) * s - p + static_cast<std::ptrdiff_t>(i);
                    double* out = row + oy * g.ow;
                    if (y < 0 || y >= h) {
                        std::fill(out, out + g.ow, 0.0);
                        continue;
                    }
                    const double* src = x + (c * g.h + static_cast<std::size_t>(y)) * g.w;
                    for (std::size_t ox = 0; ox < g.ow; ++ox) {
                        const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox) * s - p + static_cast<std::ptrdiff_t>(j);
                        out[ox] = (xx < 0 || xx >= w) ? 0.0 : src[xx];
                    }
                }
            }
}

void col2im(const double* col, std::size_t ld, std::size_t offset, const ConvGeometry& g, const ConvSpec& spec,
            double* dx) {
    const auto s = static_cast<std::ptrdiff_t>(spec.stride);
    const auto p = static_cast<std::ptrdiff_t>(spec.pad);
    const auto h = static_cast<std::ptrdiff_t>(g.h);
    const auto w = static_cast<std::ptrdiff_t>(g.w);
    for (std::size_t c = 0; c < g.c; ++c)
        for (std::size_t i = 0; i < g.kh; ++i)
            for (std::size_t j = 0; j < g.kw; ++j) {
                const double* row = col + ((c * g.kh + i) * g.kw + j) * ld + offset;
                for (std::size_t oy = 0; oy < g.oh; ++oy) {
                    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy) * s - p + static_cast<std::ptrdiff_t>(i);
                    if (y < 0 || y >= h) continue;
                    double* dst = dx + (c * g.h + static_cast<std::size_t>(y)) * g.w;
                    for (std::size_t ox = 0; ox < g.ow; ++ox) {
                        const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox) * s - p + static_cast<std::ptrdiff_t>(j);
                        if (xx >= 0 && xx < w) dst[xx] += row[oy * g.ow + ox];
                    }
                }
            }
}

// Samples per im2col chunk: bounds the column buffer to ~4M doubles so the
// full-scale network fits in memory. Chunk boundaries depend only on shapes.
std::size_t chunk_samples(const ConvGeometry& g) {
    constexpr std::size_t kColumnBudget = std::size_t{1} << 22;
    const std::size_t per_sample = g.patch() * g.positions();
    return std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_sample, 1), 1, g.n);
}

} // namespace

Shape layer_output_shape(const LayerSpec& spec, const Shape& input) {
    validate(spec);
    return std::visit(
        [&](const auto& s) -> Shape {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, ConvSpec>) {
                if (input.size() != 3) throw ShapeError("conv expects a [C,H,W] input");
                return {s.out_channels, conv_extent(input[1], s.kernel_h, s.stride, s.pad),
                        conv_extent(input[2], s.kernel_w, s.stride, s.pad)};
            } else if constexpr (std::is_same_v<S, MaxPoolSpec>) {
                if (input.size() != 3) throw ShapeError("maxpool expects a [C,H,W] input");
                if (s.window > input[1] || s.window > input[2])
                    throw ShapeError("pool window " + std::to_string(s.window) + " exceeds spatial extent " +
                                     shape_string(input));
                return {input[0], (input[1] - s.window) / s.stride + 1, (input[2] - s.window) / s.stride + 1};
            } else if constexpr (std::is_same_v<S, LrnSpec>) {
                if (input.size() != 3) throw ShapeError("lrn expects a [C,H,W] input");
                return input;
            } else if constexpr (std::is_same_v<S, DenseSpec>) {
                if (input.size() != 1) throw ShapeError("dense expects a flat input; insert a flatten layer");
                return {s.units};
            } else {
                return {shape_size(input)};
            }
        },
        spec);
}

// ---------------------------------------------------------------------------
// Convolution

Tensor conv_forward(const Tensor& input, const ConvSpec& spec, const Tensor& weights, const Tensor& bias) {
    validate(spec);
    const auto g = conv_geometry(input, spec, weights);
    if (bias.size() != g.f) throw ShapeError("conv bias length does not match output channels");

    Tensor out({g.n, g.f, g.oh, g.ow});
    const std::size_t in_stride = g.c * g.h * g.w;
    const std::size_t pos = g.positions();
    const std::size_t chunk = chunk_samples(g);
    std::vector<double> col, z;
    for (std::size_t first = 0; first < g.n; first += chunk) {
        const std::size_t count = std::min(chunk, g.n - first);
        const std::size_t ld = count * pos;
        col.resize(g.patch() * ld);
        z.resize(g.f * ld);
        for (std::size_t s = 0; s < count; ++s)
            im2col(input.data().data() + (first + s) * in_stride, g, spec, col.data(), ld, s * pos);
        linalg::gemm_nn(g.f, ld, g.patch(), weights.data().data(), col.data(), z.data(), 0.0);
        for (std::size_t s = 0; s < count; ++s)
            for (std::size_t f = 0; f < g.f; ++f) {
                const double* zr = z.data() + f * ld + s * pos;
                double* o = out.data().data() + ((first + s) * g.f + f) * pos;
                for (std::size_t p = 0; p < pos; ++p) {
                    const double v = zr[p] + bias[f];
                    o[p] = v > 0.0 ? v : 0.0;
                }
            }
    }
    return out;
}

ConvGrads conv_backward(const Tensor& input, const Tensor& output, const Tensor& d_output,
                        const ConvSpec& spec, const Tensor& weights, bool need_input_grad) {
    const auto g = conv_geometry(input, spec, weights);
    if (output.shape() != Shape{g.n, g.f, g.oh, g.ow} || d_output.shape() != output.shape())
        throw ShapeError("conv backward: output gradient shape mismatch");

    const std::size_t in_stride = g.c * g.h * g.w;
    const std::size_t pos = g.positions();
    const std::size_t chunk = chunk_samples(g);

    ConvGrads grads{need_input_grad ? Tensor(input.shape()) : Tensor(), Tensor(weights.shape()), Tensor({g.f})};
    auto db = grads.d_bias.data();
    std::vector<double> col, dz;
    for (std::size_t first = 0; first < g.n; first += chunk) {
        const std::size_t count = std::min(chunk, g.n - first);
        const std::size_t ld = count * pos;
        dz.resize(g.f * ld);
        for (std::size_t s = 0; s < count; ++s)
            for (std::size_t f = 0; f < g.f; ++f) {
                const std::size_t src = ((first + s) * g.f + f) * pos;
                const double* o = output.data().data() + src;
                const double* go = d_output.data().data() + src;
                double* d = dz.data() + f * ld + s * pos;
                for (std::size_t p = 0; p < pos; ++p) d[p] = o[p] > 0.0 ? go[p] : 0.0;
            }
        for (std::size_t f = 0; f < g.f; ++f) {
            double acc = 0.0;
            for (std::size_t p = 0; p < ld; ++p) acc += dz[f * ld + p];
            db[f] += acc;
        }

        col.resize(g.patch() * ld);
        for (std::size_t s = 0; s < count; ++s)
            im2col(input.data().data() + (first + s) * in_stride, g, spec, col.data(), ld, s * pos);
        linalg::gemm_nt(g.f, g.patch(), ld, dz.data(), col.data(), grads.d_weights.data().data());

        if (need_input_grad) {
            linalg::gemm_tn(g.patch(), ld, g.f, weights.data().data(), dz.data(), col.data(), 0.0);
            for (std::size_t s = 0; s < count; ++s)
                col2im(col.data(), ld, s * pos, g, spec, grads.d_input.data().data() + (first + s) * in_stride);
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Max pooling

PoolResult maxpool_forward(const Tensor& input, const MaxPoolSpec& spec) {
    require_rank4(input, "maxpool");
    const Shape per = layer_output_shape(spec, {input.dim(1), input.dim(2), input.dim(3)});
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t oh = per[1], ow = per[2];

    PoolResult r{Tensor({n, c, oh, ow}), std::vector<std::size_t>(n * c * oh * ow)};
    auto in = input.data();
    auto out = r.output.data();
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
                std::size_t best = base + oy * spec.stride * w + ox * spec.stride;
                // Row-major scan with strict '>' keeps the lowest flat index on ties.
                for (std::size_t i = 0; i < spec.window; ++i)
                    for (std::size_t j = 0; j < spec.window; ++j) {
                        const std::size_t idx = base + (oy * spec.stride + i) * w + ox * spec.stride + j;
                        if (in[idx] > in[best]) best = idx;
                    }
                out[o] = in[best];
                r.argmax[o] = best;
            }
    }
    return r;
}

Tensor maxpool_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                        const Tensor& d_output) {
    if (argmax.size() != d_output.size()) throw ShapeError("maxpool backward: index count mismatch");
    Tensor dx(input_shape);
    auto g = d_output.data();
    auto d = dx.data();
    for (std::size_t i = 0; i < argmax.size(); ++i) d[argmax[i]] += g[i];
    return dx;
}

// ---------------------------------------------------------------------------
// LRN

LrnResult lrn_forward(const Tensor& input, const LrnSpec& spec) {
    validate(spec);
    require_rank4(input, "lrn");
    const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    const std::size_t half = spec.size / 2;

    LrnResult r{Tensor(input.shape()), Tensor(input.shape())};
    auto x = input.data();
    auto y = r.output.data();
    auto d = r.denominator.data();
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t lo = ch >= half ? ch - half : 0;
            const std::size_t hi = std::min(c - 1, ch + half);
            const std::size_t base = (s * c + ch) * hw;
            for (std::size_t p = 0; p < hw; ++p) {
                double sq = 0.0;
                for (std::size_t cc = lo; cc <= hi; ++cc) {
                    const double v = x[(s * c + cc) * hw + p];
                    sq += v * v;
                }
                const double denom = spec.k + spec.alpha * sq;
                d[base + p] = denom;
                y[base + p] = x[base + p] * std::pow(denom, -spec.beta);
            }
        }
    return r;
}

Tensor lrn_backward(const Tensor& input, const Tensor& denominator, const Tensor& d_output,
                    const LrnSpec& spec) {
    if (input.shape() != denominator.shape() || input.shape() != d_output.shape())
        throw ShapeError("lrn backward: shape mismatch");
    const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    const std::size_t half = spec.size / 2;

    // dx_j = g_j d_j^-b - 2ab x_j sum_{c in win(j)} g_c x_c d_c^(-b-1); windows are symmetric.
    Tensor scaled(input.shape());
    auto x = input.data();
    auto d = denominator.data();
    auto g = d_output.data();
    auto t = scaled.data();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = g[i] * x[i] * std::pow(d[i], -spec.beta - 1.0);

    Tensor dx(input.shape());
    auto out = dx.data();
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t lo = ch >= half ? ch - half : 0;
            const std::size_t hi = std::min(c - 1, ch + half);
            const std::size_t base = (s * c + ch) * hw;
            for (std::size_t p = 0; p < hw; ++p) {
                double acc = 0.0;
                for (std::size_t cc = lo; cc <= hi; ++cc) acc += t[(s * c + cc) * hw + p];
                const std::size_t j = base + p;
                out[j] = g[j] * std::pow(d[j], -spec.beta) - 2.0 * spec.alpha * spec.beta * x[j] * acc;
            }
        }
    return dx;
}

// ---------------------------------------------------------------------------
// Dense

DenseResult dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                          const DenseSpec& spec, Mode mode, RandomSource* rng) {
    validate(spec);
    if (input.rank() != 2 || weights.rank() != 2 || input.dim(1) != weights.dim(0) ||
        weights.dim(1) != spec.units || bias.size() != spec.units)
        throw ShapeError("dense: input " + shape_string(input.shape()) + ", weights " +
                         shape_string(weights.shape()) + ", bias " + shape_string(bias.shape()) +
                         " do not agree");
    const std::size_t n = input.dim(0), u = spec.units;

    DenseResult r;
    r.pre_activation = Tensor({n, u});
    auto z = r.pre_activation.data();
    for (std::size_t i = 0; i < n; ++i) std::copy(bias.data().begin(), bias.data().end(), z.begin() + i * u);
    linalg::gemm_nn(n, u, input.dim(1), input.data().data(), weights.data().data(), z.data());

    switch (spec.activation) {
    case Activation::none: r.output = r.pre_activation; break;
    case Activation::tanh: r.output = tanh(r.pre_activation); break;
    case Activation::softmax: r.output = softmax(r.pre_activation); break;
    }

    if (mode == Mode::train && spec.dropout_rate > 0.0) {
        if (!rng) throw StateError("train-mode dropout requires a random source");
        const double keep_scale = 1.0 / (1.0 - spec.dropout_rate);
        r.mask.resize(n * u);
        auto y = r.output.data();
        for (std::size_t i = 0; i < r.mask.size(); ++i) {
            r.mask[i] = rng->uniform() < spec.dropout_rate ? 0.0 : keep_scale;
            y[i] *= r.mask[i];
        }
    }
    return r;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& pre_activation, const std::vector<double>& mask,
                          const Tensor& d_output, const DenseSpec& spec, const Tensor& weights) {
    const std::size_t n = input.dim(0), d = input.dim(1), u = spec.units;
    if (d_output.shape() != Shape{n, u}) throw ShapeError("dense backward: output gradient shape mismatch");

    Tensor dz = d_output;
    auto g = dz.data();
    if (!mask.empty())
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
    if (spec.activation == Activation::tanh) {
        auto z = pre_activation.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double t = std::tanh(z[i]);
            g[i] *= 1.0 - t * t;
        }
    }

    DenseGrads grads{Tensor({n, d}), Tensor({d, u}), Tensor({u})};
    linalg::gemm_tn(d, u, n, input.data().data(), g.data(), grads.d_weights.data().data());
    auto db = grads.d_bias.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < u; ++j) db[j] += g[i * u + j];
    linalg::gemm_nt(n, d, u, g.data(), weights.data().data(), grads.d_input.data().data());
    return grads;
}

// ---------------------------------------------------------------------------
// Loss

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax expects [N,K] logits");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    Tensor p(logits.shape());
    auto in = logits.data();
    auto out = p.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double m = *std::max_element(in.begin() + i * k, in.begin() + (i + 1) * k);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += out[i * k + j] = std::exp(in[i * k + j] - m);
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= z;
    }
    return p;
}

LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
    if (logits.rank() != 2) throw ShapeError("cross entropy expects [N,K] logits");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (labels.size() != n) throw ShapeError("label count does not match batch size");
    for (auto y : labels)
        if (y >= k) throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");

    LossResult r{0.0, Tensor(logits.shape())};
    auto in = logits.data();
    auto dl = r.d_logits.data();
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double m = *std::max_element(in.begin() + i * k, in.begin() + (i + 1) * k);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(in[i * k + j] - m);
        const double log_z = std::log(z);
        r.loss += -(in[i * k + labels[i]] - m - log_z);
        for (std::size_t j = 0; j < k; ++j) {
            const double p = std::exp(in[i * k + j] - m - log_z);
            dl[i * k + j] = (p - (j == labels[i] ? 1.0 : 0.0)) * inv_n;
        }
    }
    r.loss *= inv_n;
    return r;
}

} // namespace acuity::nn
