#include <doctest.h>

#include <stdexcept>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "lcl/imageops.hpp"

using namespace lcl;

namespace {

ImageF random_image(int h, int w, Rng& rng) {
    ImageF img(h, w);
    for (auto& v : img.data) v = rng.next_double();
    return img;
}

double mean_abs_diff(const ImageF& a, const ImageF& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
    return acc / static_cast<double>(a.data.size());
}

PatchSpec centered_patch(double cx, double cy, double half = 5.0) {
    PatchSpec p;
    p.image_id = "test";
    p.lesion = BBox{cx - half, cy - half, cx + half, cy + half, "exudate", 0.9};
    const double x0 = std::clamp(cx - 64.0, 0.0, 384.0);
    const double y0 = std::clamp(cy - 64.0, 0.0, 384.0);
    p.window = BBox{x0, y0, x0 + 128, y0 + 128, "exudate", 0.9};
    return p;
}

}  // namespace

TEST_SUITE_BEGIN("imageops");

TEST_CASE("resize keeps constant images constant") {
    ImageF img(4, 6);
    for (auto& v : img.data) v = 0.37;
    const ImageF out = resize_bilinear(img, 9, 5);
    CHECK(out.height == 9);
    CHECK(out.width == 5);
    for (double v : out.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("resize to identical size is the identity") {
    Rng rng(1);
    const ImageF img = random_image(7, 9, rng);
    const ImageF out = resize_bilinear(img, 7, 9);
    CHECK(mean_abs_diff(img, out) < 1e-12);
}

TEST_CASE("2x2 checkerboard to 3x3 has 0.5 center") {
    ImageF img(2, 2);
    for (int c = 0; c < 3; ++c) {
        img.at(0, 1, c) = 1.0;
        img.at(1, 0, c) = 1.0;
    }
    const ImageF out = resize_bilinear(img, 3, 3);
    for (int c = 0; c < 3; ++c) CHECK(out.at(1, 1, c) == doctest::Approx(0.5));
}

TEST_CASE("rotate by 0 and by 360 are identities") {
    Rng rng(2);
    const ImageF img = random_image(16, 16, rng);
    const ImageF r0 = rotate(img, 0.0);
    CHECK(mean_abs_diff(img, r0) == 0.0);
    const ImageF r360 = rotate(img, 360.0);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(std::abs(img.data[i] - r360.data[i]) < 1e-9);
}

TEST_CASE("radially symmetric image is rotation invariant") {
    ImageF img(64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const double d = std::hypot(x + 0.5 - 32.0, y + 0.5 - 32.0);
            // soft-edged disc: bilinear resampling keeps smooth profiles
            const double v = 0.1 + 0.7 * std::clamp(20.0 - d, 0.0, 4.0) / 4.0;
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
        }
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const ImageF r = rotate(img, rng.uniform(0.0, 360.0));
        CHECK(mean_abs_diff(img, r) < 0.02);
    }
}

TEST_CASE("rotate forward then back recovers the center region") {
    // smooth low-frequency image: resampling round trips lose little
    ImageF img(128, 128);
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = 0.5 + 0.4 * std::sin(2.0 * std::numbers::pi * x / 32.0 + c) *
                                            std::cos(2.0 * std::numbers::pi * y / 32.0);
    Rng rng(17);
    const double angle = rng.uniform(10.0, 80.0);
    const ImageF back = rotate(rotate(img, angle), -angle);
    double acc = 0.0;
    int count = 0;
    for (int y = 32; y < 96; ++y)
        for (int x = 32; x < 96; ++x)
            for (int c = 0; c < 3; ++c) {
                acc += std::abs(img.at(y, x, c) - back.at(y, x, c));
                ++count;
            }
    CHECK(acc / count < 0.05);
}

TEST_CASE("grayscale formula and idempotence") {
    ImageF white(2, 2);
    for (auto& v : white.data) v = 1.0;
    const ImageF gw = grayscale(white);
    for (double v : gw.data) CHECK(v == doctest::Approx(1.0));

    ImageF red(1, 1);
    red.at(0, 0, 0) = 1.0;
    const ImageF gr = grayscale(red);
    for (int c = 0; c < 3; ++c) CHECK(gr.at(0, 0, c) == doctest::Approx(0.299));

    Rng rng(4);
    const ImageF img = random_image(8, 8, rng);
    const ImageF g1 = grayscale(img);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            CHECK(g1.at(y, x, 0) == g1.at(y, x, 1));
            CHECK(g1.at(y, x, 1) == g1.at(y, x, 2));
        }
    const ImageF g2 = grayscale(g1);
    CHECK(mean_abs_diff(g1, g2) < 1e-12);
}

TEST_CASE("color distortion identity and gray fixed point") {
    Rng rng(5);
    const ImageF img = random_image(8, 8, rng);
    const ImageF same = color_distort_fixed(img, 0.0, 0.0, 0.0, 0.0);
    CHECK(mean_abs_diff(img, same) < 1e-12);

    const ImageF gray = grayscale(img);
    const ImageF sat = color_distort_fixed(gray, 0.0, 0.0, 0.35, 0.0);
    CHECK(mean_abs_diff(gray, sat) < 1e-12);
}

TEST_CASE("hue rotation by a third of a turn maps red to green") {
    ImageF red(1, 1);
    red.at(0, 0, 0) = 1.0;
    const ImageF out = color_distort_fixed(red, 0.0, 0.0, 0.0, 1.0 / 3.0);
    CHECK(out.at(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(out.at(0, 0, 1) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(out.at(0, 0, 2) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("crop windows contain the lesion center and stay in bounds") {
    Rng img_rng(6);
    const ImageF src = random_image(512, 512, img_rng);
    AugmentConfig cfg;
    Rng rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        const double cx = rng.uniform(20.0, 492.0);
        const double cy = rng.uniform(20.0, 492.0);
        const PatchSpec p = centered_patch(cx, cy);
        const ImageF view = crop_resize(src, p, cfg, rng);
        CHECK(view.height == 128);
        CHECK(view.width == 128);
        for (double v : view.data) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
        }
    }
}

TEST_CASE("disabled operators reduce make_view to plain extraction") {
    Rng img_rng(8);
    const ImageF src = random_image(512, 512, img_rng);
    const PatchSpec p = centered_patch(200.0, 180.0);
    AugmentConfig cfg;
    cfg.crop = cfg.rotation = cfg.color_distortion = cfg.gray_scaling = false;
    Rng rng(9);
    const ImageF view = make_view(src, p, cfg, rng);
    const ImageF plain = extract_window(src, p);
    CHECK(mean_abs_diff(view, plain) == 0.0);
}

TEST_CASE("same seed gives bit-identical views, distinct streams differ") {
    Rng img_rng(10);
    const ImageF src = random_image(512, 512, img_rng);
    const PatchSpec p = centered_patch(256.0, 256.0);
    AugmentConfig cfg;

    Rng a(42), b(42);
    const ImageF va = make_view(src, p, cfg, a);
    const ImageF vb = make_view(src, p, cfg, b);
    CHECK(va.data == vb.data);

    bool any_difference = false;
    for (int trial = 0; trial < 100 && !any_difference; ++trial) {
        Rng c(derive_seed(42, trial, 1));
        const ImageF vc = make_view(src, p, cfg, c);
        if (vc.data != va.data) any_difference = true;
    }
    CHECK(any_difference);
}

TEST_CASE("all operator outputs stay inside the unit interval") {
    Rng rng(11);
    AugmentConfig cfg;
    for (int trial = 0; trial < 1000; ++trial) {
        ImageF img = random_image(16, 16, rng);
        ImageF out;
        switch (trial % 4) {
            case 0: out = rotate(img, rng.uniform(0.0, 360.0)); break;
            case 1: out = color_distort(img, cfg, rng); break;
            case 2: out = grayscale(img); break;
            default: out = resize_bilinear(img, 9, 21); break;
        }
        for (double v : out.data) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
        }
    }
}

TEST_CASE("augment config validation") {
    AugmentConfig cfg;
    cfg.crop_scale_lo = 1.3;  // above hi
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = AugmentConfig{};
    cfg.gray_prob = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("png and ppm round trips preserve bytes") {
    Rng rng(12);
    ImageF img = random_image(9, 13, rng);
    // snap to the 8-bit grid so the round trip is exact
    for (auto& v : img.data) v = std::round(v * 255.0) / 255.0;

    const auto dir = std::filesystem::temp_directory_path() / "lcl_imageio_test";
    std::filesystem::create_directories(dir);
    for (const char* name : {"img.png", "img.ppm"}) {
        const std::string path = (dir / name).string();
        write_image(path, img);
        const ImageF back = read_image(path);
        REQUIRE(back.height == img.height);
        REQUIRE(back.width == img.width);
        CHECK(mean_abs_diff(img, back) < 1e-12);
    }
    std::filesystem::remove_all(dir);
}

TEST_SUITE_END();
