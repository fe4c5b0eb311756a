#include "lcl/imageops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lcl {

void AugmentConfig::validate() const {
    if (crop_scale_lo > crop_scale_hi || color_lo > color_hi || hue_lo > hue_hi)
        throw std::invalid_argument("augment config: range bounds out of order");
    if (gray_prob < 0.0 || gray_prob > 1.0)
        throw std::invalid_argument("augment config: gray probability outside [0,1]");
    if (crop_scale_lo <= 0.0)
        throw std::invalid_argument("augment config: crop scale must be positive");
}

namespace {

double luma(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

// Clamped-edge bilinear sample at pixel-center coordinates.
void sample_clamped(const ImageF& img, double sy, double sx, double out[3]) {
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const double fx = sx - x0, fy = sy - y0;
    const int xa = std::clamp(x0, 0, img.width - 1);
    const int xb = std::clamp(x0 + 1, 0, img.width - 1);
    const int ya = std::clamp(y0, 0, img.height - 1);
    const int yb = std::clamp(y0 + 1, 0, img.height - 1);
    for (int c = 0; c < 3; ++c) {
        const double top = img.at(ya, xa, c) * (1 - fx) + img.at(ya, xb, c) * fx;
        const double bot = img.at(yb, xa, c) * (1 - fx) + img.at(yb, xb, c) * fx;
        out[c] = top * (1 - fy) + bot * fy;
    }
}

// Zero-fill bilinear sample: pixels outside the raster contribute 0.
void sample_zero_fill(const ImageF& img, double sy, double sx, double out[3]) {
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const double fx = sx - x0, fy = sy - y0;
    out[0] = out[1] = out[2] = 0.0;
    const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    for (int i = 0; i < 4; ++i) {
        if (xs[i] < 0 || xs[i] >= img.width || ys[i] < 0 || ys[i] >= img.height) continue;
        for (int c = 0; c < 3; ++c) out[c] += wts[i] * img.at(ys[i], xs[i], c);
    }
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    v = mx;
    s = mx > 0.0 ? d / mx : 0.0;
    if (d == 0.0) {
        h = 0.0;
    } else if (mx == r) {
        h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
    } else if (mx == g) {
        h = 60.0 * ((b - r) / d + 2.0);
    } else {
        h = 60.0 * ((r - g) / d + 4.0);
    }
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r1 = 0, g1 = 0, b1 = 0;
    if (hp < 1)      { r1 = c; g1 = x; }
    else if (hp < 2) { r1 = x; g1 = c; }
    else if (hp < 3) { g1 = c; b1 = x; }
    else if (hp < 4) { g1 = x; b1 = c; }
    else if (hp < 5) { r1 = x; b1 = c; }
    else             { r1 = c; b1 = x; }
    const double m = v - c;
    r = r1 + m;
    g = g1 + m;
    b = b1 + m;
}

}  // namespace

ImageF resize_bilinear(const ImageF& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: bad output size");
    ImageF out(out_h, out_w);
    const double sy_scale = static_cast<double>(img.height) / out_h;
    const double sx_scale = static_cast<double>(img.width) / out_w;
    double px[3];
    for (int y = 0; y < out_h; ++y) {
        const double sy = (y + 0.5) * sy_scale - 0.5;
        for (int x = 0; x < out_w; ++x) {
            const double sx = (x + 0.5) * sx_scale - 0.5;
            sample_clamped(img, sy, sx, px);
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = std::clamp(px[c], 0.0, 1.0);
        }
    }
    return out;
}

ImageF rotate(const ImageF& img, double angle_deg) {
    const double a = angle_deg * std::numbers::pi / 180.0;
    const double ca = std::cos(a), sa = std::sin(a);
    const double cx = 0.5 * img.width, cy = 0.5 * img.height;
    ImageF out(img.height, img.width);
    double px[3];
    for (int y = 0; y < img.height; ++y) {
        const double dy = (y + 0.5) - cy;
        for (int x = 0; x < img.width; ++x) {
            const double dx = (x + 0.5) - cx;
            // inverse rotation into the source frame
            const double sx = cx + ca * dx + sa * dy - 0.5;
            const double sy = cy - sa * dx + ca * dy - 0.5;
            sample_zero_fill(img, sy, sx, px);
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = std::clamp(px[c], 0.0, 1.0);
        }
    }
    return out;
}

ImageF grayscale(const ImageF& img) {
    ImageF out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double l = luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
            out.at(y, x, 0) = out.at(y, x, 1) = out.at(y, x, 2) = std::clamp(l, 0.0, 1.0);
        }
    return out;
}

ImageF color_distort_fixed(const ImageF& img, double brightness, double contrast,
                           double saturation, double hue) {
    ImageF out = img;
    // brightness
    for (auto& v : out.data) v = std::clamp(v * (1.0 + brightness), 0.0, 1.0);
    // contrast, pivoted on the mean grayscale of the current image
    double mean = 0.0;
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            mean += luma(out.at(y, x, 0), out.at(y, x, 1), out.at(y, x, 2));
    mean /= static_cast<double>(out.height) * out.width;
    for (auto& v : out.data) v = std::clamp(mean + (v - mean) * (1.0 + contrast), 0.0, 1.0);
    // saturation, per-pixel gray pivot
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const double g = luma(out.at(y, x, 0), out.at(y, x, 1), out.at(y, x, 2));
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = std::clamp(g + (out.at(y, x, c) - g) * (1.0 + saturation), 0.0, 1.0);
        }
    // hue rotation, fraction of a full circle
    if (hue != 0.0) {
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                double h, s, v;
                rgb_to_hsv(out.at(y, x, 0), out.at(y, x, 1), out.at(y, x, 2), h, s, v);
                h = std::fmod(h + hue * 360.0 + 360.0, 360.0);
                double r, g, b;
                hsv_to_rgb(h, s, v, r, g, b);
                out.at(y, x, 0) = std::clamp(r, 0.0, 1.0);
                out.at(y, x, 1) = std::clamp(g, 0.0, 1.0);
                out.at(y, x, 2) = std::clamp(b, 0.0, 1.0);
            }
    }
    return out;
}

ImageF color_distort(const ImageF& img, const AugmentConfig& cfg, Rng& rng) {
    const double b = rng.uniform(cfg.color_lo, cfg.color_hi);
    const double c = rng.uniform(cfg.color_lo, cfg.color_hi);
    const double s = rng.uniform(cfg.color_lo, cfg.color_hi);
    const double h = rng.uniform(cfg.hue_lo, cfg.hue_hi);
    return color_distort_fixed(img, b, c, s, h);
}

ImageF extract_window(const ImageF& src, const PatchSpec& patch) {
    const int x0 = static_cast<int>(std::lround(patch.window.x_min));
    const int y0 = static_cast<int>(std::lround(patch.window.y_min));
    ImageF out(kPatchSize, kPatchSize);
    for (int y = 0; y < kPatchSize; ++y)
        for (int x = 0; x < kPatchSize; ++x) {
            const int sy = std::clamp(y0 + y, 0, src.height - 1);
            const int sx = std::clamp(x0 + x, 0, src.width - 1);
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = src.at(sy, sx, c);
        }
    return out;
}

ImageF crop_resize(const ImageF& src, const PatchSpec& patch, const AugmentConfig& cfg, Rng& rng) {
    const double scale = rng.uniform(cfg.crop_scale_lo, cfg.crop_scale_hi);
    int side = static_cast<int>(std::lround(kPatchSize * scale));
    side = std::min({side, src.width, src.height});  // clamp when it exceeds the image

    const double lcx = patch.lesion.center_x();
    const double lcy = patch.lesion.center_y();

    // positions whose window contains the lesion-box center and stays in bounds
    auto pick = [&](double center, int extent, double base_center) {
        int lo = std::max(0, static_cast<int>(std::ceil(center - side)));
        int hi = std::min(extent - side, static_cast<int>(std::floor(center)));
        if (lo > hi) {
            const int base = static_cast<int>(std::lround(base_center - side * 0.5));
            return std::clamp(base, 0, extent - side);
        }
        return static_cast<int>(rng.uniform_int(lo, hi));
    };
    const int x0 = pick(lcx, src.width, patch.window.center_x());
    const int y0 = pick(lcy, src.height, patch.window.center_y());

    ImageF window(side, side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            for (int c = 0; c < 3; ++c) window.at(y, x, c) = src.at(y0 + y, x0 + x, c);
    if (side == kPatchSize) return window;
    return resize_bilinear(window, kPatchSize, kPatchSize);
}

ImageF make_view(const ImageF& src, const PatchSpec& patch, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    ImageF view = cfg.crop ? crop_resize(src, patch, cfg, rng) : extract_window(src, patch);
    if (cfg.rotation) view = rotate(view, rng.uniform(0.0, 360.0));
    if (cfg.color_distortion) view = color_distort(view, cfg, rng);
    if (cfg.gray_scaling && rng.bernoulli(cfg.gray_prob)) view = grayscale(view);
    return view;
}

}  // namespace lcl
