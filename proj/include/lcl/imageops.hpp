#pragma once

#include "lcl/boxes.hpp"
#include "lcl/image.hpp"
#include "lcl/rng.hpp"

namespace lcl {

constexpr int kPatchSize = 128;

struct AugmentConfig {
    bool crop = true;
    bool rotation = true;
    bool color_distortion = true;
    bool gray_scaling = true;

    double crop_scale_lo = 0.8;
    double crop_scale_hi = 1.2;
    double gray_prob = 0.2;
    double color_lo = -0.4;  // brightness / contrast / saturation factor range
    double color_hi = 0.4;
    double hue_lo = -0.1;    // fraction of a full hue circle
    double hue_hi = 0.1;

    void validate() const;
};

// Bilinear resampling with half-pixel-center alignment.
ImageF resize_bilinear(const ImageF& img, int out_h, int out_w);

// Rotation about the image center, bilinear, zero fill outside support.
ImageF rotate(const ImageF& img, double angle_deg);

// BT.601 luma replicated into all channels.
ImageF grayscale(const ImageF& img);

// brightness -> contrast -> saturation -> hue, factors drawn from cfg ranges.
ImageF color_distort(const ImageF& img, const AugmentConfig& cfg, Rng& rng);
// Deterministic variant with explicit factors; hue is a fraction of 360 deg.
ImageF color_distort_fixed(const ImageF& img, double brightness, double contrast,
                           double saturation, double hue);

// Random scaled crop around a 128x128 patch window, resized back to 128x128.
// The crop window always contains the lesion-box center and stays in bounds.
ImageF crop_resize(const ImageF& src, const PatchSpec& patch, const AugmentConfig& cfg, Rng& rng);

// Plain extraction of the 128x128 patch window (no randomness).
ImageF extract_window(const ImageF& src, const PatchSpec& patch);

// One augmented view: crop -> rotate -> color -> grayscale(p), per enable flags.
ImageF make_view(const ImageF& src, const PatchSpec& patch, const AugmentConfig& cfg, Rng& rng);

}  // namespace lcl
