#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "acuity/random.hpp"

namespace acuity {

/// Single-channel image, row-major luminance.
struct GrayImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;

    GrayImage() = default;
    /// Throws ShapeError for a zero dimension.
    GrayImage(std::size_t h, std::size_t w, double fill = 0.0);
    GrayImage(std::size_t h, std::size_t w, std::vector<double> data);

    double at(std::size_t y, std::size_t x) const noexcept { return pixels[y * width + x]; }
    double& at(std::size_t y, std::size_t x) noexcept { return pixels[y * width + x]; }
    std::size_t size() const noexcept { return pixels.size(); }

    bool operator==(const GrayImage&) const = default;
};

struct NormalizationStats {
    double mean = 0.0;
    double std = 1.0;

    /// (p - mean) / std for every pixel.
    GrayImage apply(const GrayImage& image) const;
    bool operator==(const NormalizationStats&) const = default;
};

struct GaussianKernel {
    double sigma = 0.0;
    std::size_t radius = 0;
    std::vector<double> weights{1.0};
};

/// radius = ceil(3 sigma); weights proportional to exp(-x^2 / 2 sigma^2),
/// renormalized to sum to 1. sigma = 0 gives the single-tap identity.
GaussianKernel gaussian_kernel(double sigma);

/// Separable Gaussian blur (horizontal pass, then vertical) with edge
/// replication. sigma = 0 returns the input unchanged.
GrayImage blur(const GrayImage& image, double sigma);

/// Bilinear resampling with pixel-center alignment; source coordinates are
/// clamped to the image (edge replication).
GrayImage resize_bilinear(const GrayImage& image, std::size_t height, std::size_t width);

/// Resamples to round(factor*H) x round(factor*W) and centers the result on a
/// zero canvas of the original size. Odd margins put the extra pixel on the
/// bottom/right. factor must lie in (0, 1]; factor 1 returns the input.
GrayImage shrink_and_center(const GrayImage& image, double factor);

GrayImage flip_horizontal(const GrayImage& image);

/// Counter-clockwise rotation (as displayed, rows growing downward) about the
/// image center, bilinear sampling, out-of-bounds source pixels read as 0.
GrayImage rotate(const GrayImage& image, double angle_deg);

/// Flip with probability 0.5, then rotate by an angle uniform in
/// [-max_angle_deg, +max_angle_deg]. Always consumes exactly two draws.
GrayImage random_flip_rotate(const GrayImage& image, RandomSource& rng, double max_angle_deg);

/// Joint mean and population standard deviation over every pixel of every
/// image. Throws DataError for an empty or constant corpus.
NormalizationStats compute_stats(std::span<const GrayImage> images);

/// Computes joint stats and returns the normalized corpus together with them.
std::pair<std::vector<GrayImage>, NormalizationStats> normalize_corpus(std::span<const GrayImage> images);

double pixel_variance(const GrayImage& image) noexcept;

} // namespace acuity
