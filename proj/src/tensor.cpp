#include "acuity/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "acuity/errors.hpp"
#include "acuity/linalg.hpp"

namespace acuity {

std::size_t shape_size(const Shape& shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
    out << ']';
    return out.str();
}

namespace {

void check_dims(const Shape& shape) {
    for (auto d : shape)
        if (d == 0) throw ShapeError("zero dimension in shape " + shape_string(shape));
}

void check_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

template <typename F>
Tensor map(const Tensor& a, F f) {
    Tensor out = a;
    for (auto& x : out.data()) x = f(x);
    return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
    check_same(a, b, op);
    Tensor out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(o[i], bd[i]);
    return out;
}

struct AxisSplit {
    std::size_t outer, n, inner;
    Shape reduced;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size())
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape));
    AxisSplit s{1, shape[axis], 1, {}};
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    for (std::size_t i = 0; i < shape.size(); ++i)
        if (i != axis) s.reduced.push_back(shape[i]);
    if (s.reduced.empty()) s.reduced.push_back(1);
    return s;
}

} // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_dims(shape_);
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims(shape_);
    if (data_.size() != shape_size(shape_))
        throw ShapeError("buffer of " + std::to_string(data_.size()) + " values does not fit shape " +
                         shape_string(shape_));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) throw ShapeError("axis out of range");
    return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
}

Tensor make_tensor(Shape shape, const Fill& fill, RandomSource& rng) {
    Tensor out(std::move(shape));
    std::visit(
        [&](const auto& f) {
            using F = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<F, ConstantFill>) {
                std::ranges::fill(out.data(), f.value);
            } else if constexpr (std::is_same_v<F, UniformFill>) {
                if (!(f.lo < f.hi)) throw ParameterError("uniform fill requires lo < hi");
                for (auto& x : out.data()) x = rng.uniform(f.lo, f.hi);
            } else {
                if (!(f.sigma >= 0.0)) throw ParameterError("normal fill requires sigma >= 0");
                for (auto& x : out.data()) x = rng.normal(f.mu, f.sigma);
            }
        },
        fill);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return zip(a, b, "add", [](double x, double y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
    return zip(a, b, "sub", [](double x, double y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
    return zip(a, b, "mul", [](double x, double y) { return x * y; });
}
Tensor add(const Tensor& a, double b) {
    return map(a, [b](double x) { return x + b; });
}
Tensor scale(const Tensor& a, double factor) {
    return map(a, [factor](double x) { return x * factor; });
}
Tensor relu(const Tensor& a) {
    return map(a, [](double x) { return x > 0.0 ? x : 0.0; });
}
Tensor tanh(const Tensor& a) {
    return map(a, [](double x) { return std::tanh(x); });
}

double sum(const Tensor& a) noexcept {
    double s = 0.0;
    for (double x : a.data()) s += x;
    return s;
}

double mean(const Tensor& a) noexcept {
    return sum(a) / static_cast<double>(a.size());
}

Tensor sum(const Tensor& a, std::size_t axis) {
    const auto s = split_axis(a.shape(), axis);
    Tensor out(s.reduced);
    auto in = a.data();
    auto o = out.data();
    for (std::size_t i = 0; i < s.outer; ++i)
        for (std::size_t j = 0; j < s.n; ++j)
            for (std::size_t k = 0; k < s.inner; ++k) o[i * s.inner + k] += in[(i * s.n + j) * s.inner + k];
    return out;
}

Tensor mean(const Tensor& a, std::size_t axis) {
    const auto n = a.dim(axis);
    return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

std::size_t argmax(std::span<const double> values) noexcept {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

std::size_t argmax(const Tensor& a) noexcept {
    return argmax(a.data());
}

std::vector<std::size_t> argmax(const Tensor& a, std::size_t axis) {
    const auto s = split_axis(a.shape(), axis);
    std::vector<std::size_t> out(s.outer * s.inner, 0);
    auto in = a.data();
    for (std::size_t i = 0; i < s.outer; ++i)
        for (std::size_t k = 0; k < s.inner; ++k) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < s.n; ++j)
                if (in[(i * s.n + j) * s.inner + k] > in[(i * s.n + best) * s.inner + k]) best = j;
            out[i * s.inner + k] = best;
        }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul expects rank-2 operands");
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul inner dimensions disagree: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
    Tensor out({a.dim(0), b.dim(1)});
    linalg::gemm_nn(a.dim(0), b.dim(1), a.dim(1), a.data().data(), b.data().data(), out.data().data());
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose expects a rank-2 tensor");
    Tensor out({a.dim(1), a.dim(0)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

bool all_finite(const Tensor& a) noexcept {
    return std::ranges::all_of(a.data(), [](double x) { return std::isfinite(x); });
}

} // namespace acuity
