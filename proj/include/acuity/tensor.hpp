#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "acuity/random.hpp"

namespace acuity {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of doubles. Image batches use [N, C, H, W].
///
/// A default-constructed tensor is a rank-0 scalar holding 0.
class Tensor {
public:
    Tensor() : data_(1, 0.0) {}

    /// Throws ShapeError if any dimension is zero.
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& operator[](std::size_t i) noexcept { return data_[i]; }

    double at(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }
    double& at(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }

    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    /// Same data, new shape of equal size.
    [[nodiscard]] Tensor reshaped(Shape shape) const;

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

struct ConstantFill {
    double value = 0.0;
};
struct UniformFill {
    double lo = 0.0;
    double hi = 1.0;
};
struct NormalFill {
    double mu = 0.0;
    double sigma = 1.0;
};
using Fill = std::variant<ConstantFill, UniformFill, NormalFill>;

/// Stochastic fills draw one value per element in row-major order.
Tensor make_tensor(Shape shape, const Fill& fill, RandomSource& rng);

// Elementwise arithmetic. Binary forms require identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);

// Reductions.
double sum(const Tensor& a) noexcept;
double mean(const Tensor& a) noexcept;
/// Reduces one axis away. Reducing a rank-1 tensor yields shape [1].
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);
/// Flat index of the maximum; ties go to the lowest index.
std::size_t argmax(const Tensor& a) noexcept;
std::size_t argmax(std::span<const double> values) noexcept;
/// Argmax along `axis`, returned in row-major order of the remaining axes.
std::vector<std::size_t> argmax(const Tensor& a, std::size_t axis);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

bool all_finite(const Tensor& a) noexcept;

} // namespace acuity
