#pragma once

// Brute-force reference implementations and finite-difference helpers shared
// by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "acuity/curriculum.hpp"
#include "acuity/image.hpp"
#include "acuity/layers.hpp"
#include "acuity/network.hpp"
#include "acuity/random.hpp"
#include "acuity/tensor.hpp"

namespace testing {

using acuity::RandomSource;
using acuity::Shape;
using acuity::Tensor;

inline Tensor random_tensor(Shape shape, RandomSource& rng, double lo = -1.0, double hi = 1.0) {
    return acuity::make_tensor(std::move(shape), acuity::UniformFill{lo, hi}, rng);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    Tensor c({a.dim(0), b.dim(1)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < b.dim(1); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.dim(1); ++k) s += a.at(i, k) * b.at(k, j);
            c.at(i, j) = s;
        }
    return c;
}

inline Tensor naive_conv(const Tensor& x, const acuity::nn::ConvSpec& s, const Tensor& w, const Tensor& b) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t oh = (h + 2 * s.pad - s.kernel_h) / s.stride + 1;
    const std::size_t ow = (wd + 2 * s.pad - s.kernel_w) / s.stride + 1;
    Tensor y({n, s.out_channels, oh, ow});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t f = 0; f < s.out_channels; ++f)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = b[f];
                    for (std::size_t ch = 0; ch < c; ++ch)
                        for (std::size_t ky = 0; ky < s.kernel_h; ++ky)
                            for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
                                const auto iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.pad);
                                const auto ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd))
                                    continue;
                                acc += w.at(f, ch, ky, kx) *
                                       x.at(i, ch, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                            }
                    y.at(i, f, oy, ox) = std::max(0.0, acc);
                }
    return y;
}

inline Tensor naive_maxpool(const Tensor& x, std::size_t window, std::size_t stride) {
    const std::size_t oh = (x.dim(2) - window) / stride + 1, ow = (x.dim(3) - window) / stride + 1;
    Tensor y({x.dim(0), x.dim(1), oh, ow});
    for (std::size_t n = 0; n < x.dim(0); ++n)
        for (std::size_t c = 0; c < x.dim(1); ++c)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double m = -INFINITY;
                    for (std::size_t ky = 0; ky < window; ++ky)
                        for (std::size_t kx = 0; kx < window; ++kx)
                            m = std::max(m, x.at(n, c, oy * stride + ky, ox * stride + kx));
                    y.at(n, c, oy, ox) = m;
                }
    return y;
}

inline Tensor naive_lrn(const Tensor& x, const acuity::nn::LrnSpec& s) {
    Tensor y(x.shape());
    const long channels = static_cast<long>(x.dim(1)), half = static_cast<long>(s.size / 2);
    for (std::size_t n = 0; n < x.dim(0); ++n)
        for (long c = 0; c < channels; ++c)
            for (std::size_t h = 0; h < x.dim(2); ++h)
                for (std::size_t w = 0; w < x.dim(3); ++w) {
                    double sq = 0.0;
                    for (long q = std::max(0L, c - half); q <= std::min(channels - 1, c + half); ++q) {
                        const double v = x.at(n, static_cast<std::size_t>(q), h, w);
                        sq += v * v;
                    }
                    y.at(n, static_cast<std::size_t>(c), h, w) =
                        x.at(n, static_cast<std::size_t>(c), h, w) / std::pow(s.k + s.alpha * sq, s.beta);
                }
    return y;
}

/// Direct 2-D Gaussian convolution with edge replication (no separability).
inline acuity::GrayImage naive_blur(const acuity::GrayImage& img, double sigma) {
    const auto k = acuity::gaussian_kernel(sigma);
    const long r = static_cast<long>(k.radius), h = static_cast<long>(img.height), w = static_cast<long>(img.width);
    acuity::GrayImage out(img.height, img.width);
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long dy = -r; dy <= r; ++dy)
                for (long dx = -r; dx <= r; ++dx) {
                    const long sy = std::clamp(y + dy, 0L, h - 1), sx = std::clamp(x + dx, 0L, w - 1);
                    acc += k.weights[static_cast<std::size_t>(dy + r)] * k.weights[static_cast<std::size_t>(dx + r)] *
                           img.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                }
            out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
        }
    return out;
}

/// Analytic vs central-difference agreement: |a - n| <= abs_floor, or
/// |a - n| / max(|a|, |n|) <= rel_tol.
inline bool grad_close(double analytic, double numeric, double rel_tol = 1e-4, double abs_floor = 1e-7) {
    const double diff = std::abs(analytic - numeric);
    if (diff <= abs_floor) return true;
    return diff / std::max(std::abs(analytic), std::abs(numeric)) <= rel_tol;
}

struct GradCheck {
    std::size_t checked = 0;
    std::size_t failed = 0;
    double worst_rel = 0.0;
    std::string first_failure;

    void record(double analytic, double numeric, const std::string& where) {
        ++checked;
        const double diff = std::abs(analytic - numeric);
        const double rel = diff / std::max({std::abs(analytic), std::abs(numeric), 1e-300});
        if (diff > 1e-7) worst_rel = std::max(worst_rel, rel);
        if (!grad_close(analytic, numeric)) {
            if (failed == 0)
                first_failure = where + ": analytic " + std::to_string(analytic) + " numeric " + std::to_string(numeric);
            ++failed;
        }
    }
    bool ok() const { return failed == 0 && checked > 0; }
};

/// Central difference of `loss` with respect to element i of `t`.
inline double central_difference(Tensor& t, std::size_t i, const std::function<double()>& loss, double h = 1e-5) {
    const double saved = t[i];
    t[i] = saved + h;
    const double up = loss();
    t[i] = saved - h;
    const double down = loss();
    t[i] = saved;
    return (up - down) / (2.0 * h);
}

/// Indices to probe: every index when the tensor is small, else `samples`
/// random ones.
inline std::vector<std::size_t> probe_indices(std::size_t size, std::size_t samples, RandomSource& rng) {
    std::vector<std::size_t> out;
    if (size <= samples) {
        for (std::size_t i = 0; i < size; ++i) out.push_back(i);
        return out;
    }
    for (std::size_t i = 0; i < samples; ++i) out.push_back(rng.below(size));
    return out;
}

/// Desk stack with dropout switched off, for gradient checks.
inline acuity::nn::NetworkState desk_network_without_dropout(std::size_t classes, std::uint64_t seed) {
    auto arch = acuity::nn::Architecture::desk();
    arch.dropout_rate = 0.0;
    return acuity::nn::build_standard_network(arch, classes, seed);
}

/// Network-level check: loss = softmax-CE of forward_train logits.
inline GradCheck check_network_gradients(acuity::nn::NetworkState net, const Tensor& batch,
                                         const std::vector<std::size_t>& labels, std::size_t samples_per_tensor,
                                         RandomSource& probe_rng) {
    using namespace acuity::nn;
    auto loss_of = [&]() {
        RandomSource r(0);
        const auto trace = forward_train(net, batch, r);
        return softmax_cross_entropy(trace.logits(), labels).loss;
    };
    RandomSource r(0);
    const auto trace = forward_train(net, batch, r);
    const auto loss = softmax_cross_entropy(trace.logits(), labels);
    const auto grads = backward(net, trace, loss.d_logits);

    GradCheck check;
    for (std::size_t l = 0; l < net.params.size(); ++l)
        for (std::size_t p = 0; p < net.params[l].size(); ++p)
            for (auto i : probe_indices(net.params[l][p].size(), samples_per_tensor, probe_rng)) {
                const double numeric = central_difference(net.params[l][p], i, loss_of);
                check.record(grads[l][p][i], numeric,
                             "layer " + std::to_string(l) + " param " + std::to_string(p) + "[" + std::to_string(i) + "]");
            }
    return check;
}

/// Layer-level checks: loss = sum(r * layer(x)) for a fixed random r, so
/// dL/d(output) = r. Every input and parameter element is probed.
inline double weighted_sum(const Tensor& y, const Tensor& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
}

inline GradCheck check_conv_gradients(std::uint64_t seed) {
    using namespace acuity::nn;
    RandomSource rng(seed);
    const ConvSpec spec{4, 3, 3, 2, 1};
    Tensor x = random_tensor({2, 3, 7, 7}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng, -0.5, 0.5);
    Tensor b = random_tensor({4}, rng, -0.1, 0.1);
    const Tensor y = conv_forward(x, spec, w, b);
    const Tensor r = random_tensor(y.shape(), rng);
    const auto g = conv_backward(x, y, r, spec, w);
    auto loss = [&] { return weighted_sum(conv_forward(x, spec, w, b), r); };
    GradCheck check;
    for (std::size_t i = 0; i < x.size(); ++i) check.record(g.d_input[i], central_difference(x, i, loss), "conv input");
    for (std::size_t i = 0; i < w.size(); ++i) check.record(g.d_weights[i], central_difference(w, i, loss), "conv weight");
    for (std::size_t i = 0; i < b.size(); ++i) check.record(g.d_bias[i], central_difference(b, i, loss), "conv bias");
    return check;
}

inline GradCheck check_maxpool_gradients(std::uint64_t seed) {
    using namespace acuity::nn;
    RandomSource rng(seed);
    const MaxPoolSpec spec{3, 2};
    Tensor x = random_tensor({2, 3, 7, 7}, rng);
    const auto fwd = maxpool_forward(x, spec);
    const Tensor r = random_tensor(fwd.output.shape(), rng);
    const Tensor dx = maxpool_backward(x.shape(), fwd.argmax, r);
    auto loss = [&] { return weighted_sum(maxpool_forward(x, spec).output, r); };
    GradCheck check;
    for (std::size_t i = 0; i < x.size(); ++i) check.record(dx[i], central_difference(x, i, loss), "maxpool input");
    return check;
}

inline GradCheck check_lrn_gradients(std::uint64_t seed, const acuity::nn::LrnSpec& spec) {
    using namespace acuity::nn;
    RandomSource rng(seed);
    Tensor x = random_tensor({2, 7, 3, 3}, rng, -2.0, 2.0);
    const auto fwd = lrn_forward(x, spec);
    const Tensor r = random_tensor(fwd.output.shape(), rng);
    const Tensor dx = lrn_backward(x, fwd.denominator, r, spec);
    auto loss = [&] { return weighted_sum(lrn_forward(x, spec).output, r); };
    GradCheck check;
    for (std::size_t i = 0; i < x.size(); ++i) check.record(dx[i], central_difference(x, i, loss), "lrn input");
    return check;
}

inline GradCheck check_dense_tanh_gradients(std::uint64_t seed) {
    using namespace acuity::nn;
    RandomSource rng(seed);
    const DenseSpec spec{4, Activation::tanh, 0.0};
    Tensor x = random_tensor({3, 5}, rng);
    Tensor w = random_tensor({5, 4}, rng);
    Tensor b = random_tensor({4}, rng, -0.2, 0.2);
    const auto fwd = dense_forward(x, w, b, spec, Mode::eval, nullptr);
    const Tensor r = random_tensor(fwd.output.shape(), rng);
    const auto g = dense_backward(x, fwd.pre_activation, fwd.mask, r, spec, w);
    auto loss = [&] { return weighted_sum(dense_forward(x, w, b, spec, Mode::eval, nullptr).output, r); };
    GradCheck check;
    for (std::size_t i = 0; i < x.size(); ++i) check.record(g.d_input[i], central_difference(x, i, loss), "dense input");
    for (std::size_t i = 0; i < w.size(); ++i) check.record(g.d_weights[i], central_difference(w, i, loss), "dense weight");
    for (std::size_t i = 0; i < b.size(); ++i) check.record(g.d_bias[i], central_difference(b, i, loss), "dense bias");
    return check;
}

inline GradCheck check_softmax_ce_gradients(std::uint64_t seed) {
    using namespace acuity::nn;
    RandomSource rng(seed);
    Tensor logits = random_tensor({8, 5}, rng, -3.0, 3.0);
    std::vector<std::size_t> labels(8);
    for (auto& l : labels) l = rng.below(5);
    const auto res = softmax_cross_entropy(logits, labels);
    auto loss = [&] { return softmax_cross_entropy(logits, labels).loss; };
    GradCheck check;
    for (std::size_t i = 0; i < logits.size(); ++i)
        check.record(res.d_logits[i], central_difference(logits, i, loss), "logit");
    return check;
}

struct ReferencePhase {
    acuity::DegradationMode mode;
    double sigma;
};

/// Hand-written phase tables at scale 1.
inline ReferencePhase reference_phase(acuity::ProtocolId p, std::size_t e) {
    const ReferencePhase clear{acuity::DegradationMode::clear, 0.0}, blurred{acuity::DegradationMode::blur, 4.0},
        mixed{acuity::DegradationMode::mixed_blur, 4.0}, coin{acuity::DegradationMode::coin_shrink, 0.0};
    switch (p) {
    case acuity::ProtocolId::LH: return e < 250 ? blurred : clear;
    case acuity::ProtocolId::HH: return clear;
    case acuity::ProtocolId::HL: return e < 250 ? clear : blurred;
    case acuity::ProtocolId::LL: return blurred;
    case acuity::ProtocolId::MIXED: return mixed;
    case acuity::ProtocolId::PRETRAIN_MIXED: return e < 250 ? blurred : mixed;
    case acuity::ProtocolId::MIXED_ONLY: return mixed;
    case acuity::ProtocolId::SHRINK_LIA: return e < 250 ? blurred : coin;
    case acuity::ProtocolId::SHRINK_HIA: return coin;
    }
    return clear;
}

inline std::size_t reference_total(acuity::ProtocolId p) {
    return p == acuity::ProtocolId::PRETRAIN_MIXED ? 750 : 500;
}

// Binary hinge objective for class c on already-standardized 2-D features.
inline double binary_hinge_objective(const Tensor& x, const std::vector<std::size_t>& y, std::size_t c,
                                     const double* p, double lambda) {
    double hinge = 0.0;
    const std::size_t n = x.dim(0);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = y[i] == c ? 1.0 : -1.0;
        hinge += std::max(0.0, 1.0 - t * (p[0] * x.at(i, 0) + p[1] * x.at(i, 1) + p[2]));
    }
    return 0.5 * lambda * (p[0] * p[0] + p[1] * p[1]) + hinge / static_cast<double>(n);
}

// Coarse grid over (w0, w1, b) followed by compass-search refinement.
inline double svm_oracle_objective(const Tensor& xs, const std::vector<std::size_t>& y, std::size_t classes,
                                   double lambda) {
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        double best = 1e300, p[3] = {0, 0, 0};
        for (int i = -40; i <= 40; ++i)
            for (int j = -40; j <= 40; ++j)
                for (int k = -30; k <= 30; ++k) {
                    const double q[3] = {0.1 * i, 0.1 * j, 0.1 * k};
                    const double o = binary_hinge_objective(xs, y, c, q, lambda);
                    if (o < best) {
                        best = o;
                        std::copy(q, q + 3, p);
                    }
                }
        for (double step = 0.05; step > 1e-7; step /= 2) {
            bool improved = true;
            while (improved) {
                improved = false;
                for (int d = 0; d < 3; ++d)
                    for (int s = -1; s <= 1; s += 2) {
                        double q[3] = {p[0], p[1], p[2]};
                        q[d] += s * step;
                        const double o = binary_hinge_objective(xs, y, c, q, lambda);
                        if (o < best - 1e-15) {
                            best = o;
                            std::copy(q, q + 3, p);
                            improved = true;
                        }
                    }
            }
        }
        total += best;
    }
    return total;
}

/// Scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& name) {
        static std::size_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("acuity_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace testing
