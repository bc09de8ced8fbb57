#include <doctest.h>

#include <cmath>
#include <numeric>

#include "acuity/errors.hpp"
#include "acuity/image.hpp"
#include "support.hpp"

using namespace acuity;

namespace {

GrayImage random_image(std::size_t h, std::size_t w, RandomSource& rng) {
    GrayImage img(h, w);
    for (auto& p : img.pixels) p = rng.uniform();
    return img;
}

double image_sum(const GrayImage& img) {
    return std::accumulate(img.pixels.begin(), img.pixels.end(), 0.0);
}

} // namespace

TEST_CASE("gaussian kernel") {
    for (double sigma : {0.5, 1.0, 2.0, 3.0, 4.0}) {
        CAPTURE(sigma);
        const auto k = gaussian_kernel(sigma);
        CHECK(k.radius == static_cast<std::size_t>(std::ceil(3.0 * sigma)));
        CHECK(k.weights.size() == 2 * k.radius + 1);
        CHECK(std::abs(std::accumulate(k.weights.begin(), k.weights.end(), 0.0) - 1.0) <= 1e-12);
        for (std::size_t i = 0; i < k.radius; ++i) {
            CHECK(k.weights[i] == k.weights[k.weights.size() - 1 - i]);
            CHECK(k.weights[i] < k.weights[i + 1]);
        }
    }
    const auto id = gaussian_kernel(0.0);
    CHECK(id.radius == 0);
    CHECK(id.weights == std::vector<double>{1.0});
    CHECK_THROWS_AS(gaussian_kernel(-1.0), ParameterError);
}

TEST_CASE("blur") {
    RandomSource rng(1);
    const auto img = random_image(9, 7, rng);
    CHECK(blur(img, 0.0) == img);
    const GrayImage flat(8, 8, 0.37);
    for (double v : blur(flat, 2.0).pixels) CHECK(std::abs(v - 0.37) <= 1e-12);
    CHECK_THROWS_AS(blur(img, -0.1), ParameterError);

    SUBCASE("separable pass equals direct 2-D convolution") {
        RandomSource r(2);
        for (int t = 0; t < 100; ++t) {
            const auto x = random_image(1 + r.below(12), 1 + r.below(12), r);
            const double sigma = r.uniform(0.3, 3.0);
            const auto a = blur(x, sigma), b = testing::naive_blur(x, sigma);
            double worst = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.pixels[i] - b.pixels[i]));
            CHECK(worst <= 1e-12);
        }
    }
    SUBCASE("blur reduces pixel variance") {
        const auto x = random_image(16, 16, rng);
        CHECK(pixel_variance(blur(x, 1.5)) < pixel_variance(x));
    }
}

TEST_CASE("resize_bilinear") {
    RandomSource rng(3);
    const auto img = random_image(6, 5, rng);
    CHECK(resize_bilinear(img, 6, 5) == img);
    const GrayImage flat(5, 9, 0.8);
    const auto up = resize_bilinear(flat, 11, 3);
    CHECK(up.height == 11);
    CHECK(up.width == 3);
    for (double v : up.pixels) CHECK(std::abs(v - 0.8) <= 1e-12);
    // A 2x downsample of a 2x2-blocked image averages each block.
    const GrayImage blocks(2, 2, std::vector<double>{0, 1, 2, 3});
    const auto big = resize_bilinear(blocks, 4, 4);
    CHECK(resize_bilinear(big, 2, 2).pixels.size() == 4);
    CHECK_THROWS_AS(resize_bilinear(img, 0, 3), ShapeError);
}

TEST_CASE("shrink_and_center") {
    RandomSource rng(4);
    const auto img = random_image(32, 32, rng);
    CHECK(shrink_and_center(img, 1.0) == img);
    for (double f : {0.9, 0.8, 0.5, 0.4, 0.2, 0.14, 0.12, 0.03}) {
        CAPTURE(f);
        const auto s = shrink_and_center(img, f);
        CHECK(s.height == 32);
        CHECK(s.width == 32);
    }
    RandomSource r(5);
    for (int t = 0; t < 100; ++t) {
        const auto x = random_image(1 + r.below(40), 1 + r.below(40), r);
        const auto s = shrink_and_center(x, r.uniform(0.01, 1.0));
        CHECK(s.height == x.height);
        CHECK(s.width == x.width);
    }

    SUBCASE("content sits centered with zero margins") {
        const GrayImage white(10, 10, 1.0);
        const auto s = shrink_and_center(white, 0.5);
        double inner = 0.0;
        for (std::size_t y = 0; y < 10; ++y)
            for (std::size_t x = 0; x < 10; ++x) {
                const bool in_box = y >= 2 && y < 7 && x >= 2 && x < 7;
                if (in_box)
                    inner += s.at(y, x);
                else
                    CHECK(s.at(y, x) == 0.0);
            }
        CHECK(inner == doctest::Approx(25.0));
    }
    SUBCASE("odd margin goes bottom-right") {
        const GrayImage white(5, 5, 1.0);
        const auto s = shrink_and_center(white, 0.4);
        CHECK(s.at(0, 0) == 0.0);
        CHECK(s.at(1, 1) == 1.0);
        CHECK(s.at(2, 2) == 1.0);
        CHECK(s.at(3, 3) == 0.0);
        CHECK(s.at(4, 4) == 0.0);
        CHECK(image_sum(s) == doctest::Approx(4.0));
    }
    CHECK_THROWS_AS(shrink_and_center(img, 0.0), ParameterError);
    CHECK_THROWS_AS(shrink_and_center(img, 1.5), ParameterError);
}

TEST_CASE("flip and rotate") {
    RandomSource rng(6);
    const auto img = random_image(7, 9, rng);
    const auto f = flip_horizontal(img);
    CHECK(f.at(2, 0) == img.at(2, 8));
    CHECK(flip_horizontal(f) == img);
    const auto r0 = rotate(img, 0.0);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(r0.pixels[i] - img.pixels[i]) <= 1e-12);

    GrayImage dot(5, 5);
    dot.at(2, 4) = 1.0;
    const auto ccw = rotate(dot, 90.0);
    CHECK(ccw.at(0, 2) == doctest::Approx(1.0));
    CHECK(image_sum(ccw) == doctest::Approx(1.0));
    const auto half = rotate(dot, 180.0);
    CHECK(half.at(2, 0) == doctest::Approx(1.0));
}

TEST_CASE("random_flip_rotate consumes exactly two draws") {
    RandomSource rng(7);
    const auto img = random_image(8, 8, rng);
    RandomSource a(9), b(9);
    (void)random_flip_rotate(img, a, 25.0);
    (void)b.uniform();
    (void)b.uniform();
    CHECK(a.uniform() == b.uniform());
    RandomSource c(10), d(10);
    CHECK(random_flip_rotate(img, c, 25.0) == random_flip_rotate(img, d, 25.0));
    RandomSource e(11);
    const auto none = random_flip_rotate(img, e, 0.0);
    CHECK((none == img || none == flip_horizontal(img)));
}

TEST_CASE("normalization statistics") {
    const std::vector<GrayImage> imgs = {GrayImage(1, 2, std::vector<double>{0, 2}),
                                         GrayImage(1, 2, std::vector<double>{4, 6})};
    const auto stats = compute_stats(imgs);
    CHECK(stats.mean == doctest::Approx(3.0));
    CHECK(stats.std == doctest::Approx(std::sqrt(5.0)));
    const auto [normed, same] = normalize_corpus(imgs);
    CHECK(same == stats);
    double total = 0.0, sq = 0.0;
    for (const auto& im : normed)
        for (double p : im.pixels) {
            total += p;
            sq += p * p;
        }
    CHECK(std::abs(total / 4.0) <= 1e-12);
    CHECK(std::abs(sq / 4.0 - 1.0) <= 1e-12);
    CHECK_THROWS_AS(compute_stats(std::vector<GrayImage>{}), DataError);
    CHECK_THROWS_AS(compute_stats(std::vector<GrayImage>{GrayImage(2, 2, 1.0)}), DataError);
}

TEST_CASE("image construction errors") {
    CHECK_THROWS_AS(GrayImage(0, 3), ShapeError);
    CHECK_THROWS_AS(GrayImage(2, 2, std::vector<double>(3)), ShapeError);
}
