#include "acuity/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "acuity/errors.hpp"

namespace acuity {

GrayImage::GrayImage(std::size_t h, std::size_t w, double fill) : height(h), width(w), pixels(h * w, fill) {
    if (h == 0 || w == 0) throw ShapeError("image dimensions must be positive");
}

GrayImage::GrayImage(std::size_t h, std::size_t w, std::vector<double> data)
    : height(h), width(w), pixels(std::move(data)) {
    if (h == 0 || w == 0) throw ShapeError("image dimensions must be positive");
    if (pixels.size() != h * w) throw ShapeError("pixel buffer does not match image dimensions");
}

GrayImage NormalizationStats::apply(const GrayImage& image) const {
    GrayImage out = image;
    for (auto& p : out.pixels) p = (p - mean) / std;
    return out;
}

GaussianKernel gaussian_kernel(double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ParameterError("sigma must be a finite value >= 0");
    GaussianKernel k;
    k.sigma = sigma;
    if (sigma == 0.0) return k;
    k.radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
    k.weights.assign(2 * k.radius + 1, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i <= k.radius; ++i) {
        const double x = static_cast<double>(i);
        const double w = std::exp(-x * x / (2.0 * sigma * sigma));
        k.weights[k.radius + i] = w;
        k.weights[k.radius - i] = w;
    }
    for (double w : k.weights) total += w;
    for (double& w : k.weights) w /= total;
    return k;
}

GrayImage blur(const GrayImage& image, double sigma) {
    const auto k = gaussian_kernel(sigma);
    if (k.radius == 0) return image;
    const auto r = static_cast<std::ptrdiff_t>(k.radius);
    const auto h = static_cast<std::ptrdiff_t>(image.height);
    const auto w = static_cast<std::ptrdiff_t>(image.width);

    GrayImage tmp(image.height, image.width);
    for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t t = -r; t <= r; ++t) {
                const auto sx = std::clamp<std::ptrdiff_t>(x + t, 0, w - 1);
                acc += k.weights[static_cast<std::size_t>(t + r)] * image.pixels[static_cast<std::size_t>(y * w + sx)];
            }
            tmp.pixels[static_cast<std::size_t>(y * w + x)] = acc;
        }

    GrayImage out(image.height, image.width);
    for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t t = -r; t <= r; ++t) {
                const auto sy = std::clamp<std::ptrdiff_t>(y + t, 0, h - 1);
                acc += k.weights[static_cast<std::size_t>(t + r)] * tmp.pixels[static_cast<std::size_t>(sy * w + x)];
            }
            out.pixels[static_cast<std::size_t>(y * w + x)] = acc;
        }
    return out;
}

GrayImage resize_bilinear(const GrayImage& image, std::size_t height, std::size_t width) {
    GrayImage out(height, width);
    const double sy = static_cast<double>(image.height) / static_cast<double>(height);
    const double sx = static_cast<double>(image.width) / static_cast<double>(width);
    const double max_y = static_cast<double>(image.height - 1);
    const double max_x = static_cast<double>(image.width - 1);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, image.height - 1);
        const double ty = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, image.width - 1);
            const double tx = fx - static_cast<double>(x0);
            const double top = image.at(y0, x0) * (1.0 - tx) + image.at(y0, x1) * tx;
            const double bottom = image.at(y1, x0) * (1.0 - tx) + image.at(y1, x1) * tx;
            out.at(y, x) = top * (1.0 - ty) + bottom * ty;
        }
    }
    return out;
}

GrayImage shrink_and_center(const GrayImage& image, double factor) {
    if (!(factor > 0.0 && factor <= 1.0)) throw ParameterError("shrink factor must lie in (0, 1]");
    if (factor == 1.0) return image;
    auto scaled = [factor](std::size_t n) {
        return std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(factor * static_cast<double>(n))), 1, n);
    };
    const std::size_t ih = scaled(image.height);
    const std::size_t iw = scaled(image.width);
    const GrayImage inner = resize_bilinear(image, ih, iw);
    const std::size_t top = (image.height - ih) / 2;
    const std::size_t left = (image.width - iw) / 2;
    GrayImage out(image.height, image.width, 0.0);
    for (std::size_t y = 0; y < ih; ++y)
        for (std::size_t x = 0; x < iw; ++x) out.at(top + y, left + x) = inner.at(y, x);
    return out;
}

GrayImage flip_horizontal(const GrayImage& image) {
    GrayImage out = image;
    for (std::size_t y = 0; y < image.height; ++y)
        std::reverse(out.pixels.begin() + static_cast<std::ptrdiff_t>(y * image.width),
                     out.pixels.begin() + static_cast<std::ptrdiff_t>((y + 1) * image.width));
    return out;
}

GrayImage rotate(const GrayImage& image, double angle_deg) {
    if (angle_deg == 0.0) return image;
    const double theta = angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
    const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
    const auto h = static_cast<std::ptrdiff_t>(image.height);
    const auto w = static_cast<std::ptrdiff_t>(image.width);
    auto read = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
        return (y < 0 || y >= h || x < 0 || x >= w) ? 0.0 : image.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    };

    GrayImage out(image.height, image.width);
    for (std::size_t y = 0; y < image.height; ++y)
        for (std::size_t x = 0; x < image.width; ++x) {
            // Inverse map: rotate the output offset by -theta.
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            const double fx = cx + dx * c - dy * s;
            const double fy = cy + dx * s + dy * c;
            const double x0f = std::floor(fx), y0f = std::floor(fy);
            const double tx = fx - x0f, ty = fy - y0f;
            const auto x0 = static_cast<std::ptrdiff_t>(x0f);
            const auto y0 = static_cast<std::ptrdiff_t>(y0f);
            const double top = read(y0, x0) * (1.0 - tx) + read(y0, x0 + 1) * tx;
            const double bottom = read(y0 + 1, x0) * (1.0 - tx) + read(y0 + 1, x0 + 1) * tx;
            out.at(y, x) = top * (1.0 - ty) + bottom * ty;
        }
    return out;
}

GrayImage random_flip_rotate(const GrayImage& image, RandomSource& rng, double max_angle_deg) {
    if (!(max_angle_deg >= 0.0)) throw ParameterError("max rotation angle must be >= 0");
    const bool flip = rng.bernoulli(0.5);
    const double angle = rng.uniform(-max_angle_deg, max_angle_deg);
    GrayImage out = flip ? flip_horizontal(image) : image;
    return max_angle_deg > 0.0 ? rotate(out, angle) : out;
}

NormalizationStats compute_stats(std::span<const GrayImage> images) {
    if (images.empty()) throw DataError("cannot normalize an empty corpus");
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& img : images) {
        for (double p : img.pixels) total += p;
        count += img.size();
    }
    if (count == 0) throw DataError("cannot normalize an empty corpus");
    const double mean = total / static_cast<double>(count);
    double sq = 0.0;
    for (const auto& img : images)
        for (double p : img.pixels) sq += (p - mean) * (p - mean);
    const double std = std::sqrt(sq / static_cast<double>(count));
    if (!(std > 0.0)) throw DataError("corpus is constant (standard deviation 0)");
    return {mean, std};
}

std::pair<std::vector<GrayImage>, NormalizationStats> normalize_corpus(std::span<const GrayImage> images) {
    const auto stats = compute_stats(images);
    std::vector<GrayImage> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(stats.apply(img));
    return {std::move(out), stats};
}

double pixel_variance(const GrayImage& image) noexcept {
    double m = 0.0;
    for (double p : image.pixels) m += p;
    m /= static_cast<double>(image.size());
    double v = 0.0;
    for (double p : image.pixels) v += (p - m) * (p - m);
    return v / static_cast<double>(image.size());
}

} // namespace acuity
