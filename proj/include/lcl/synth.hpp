#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lcl/boxes.hpp"
#include "lcl/image.hpp"

namespace lcl {

// Fundus-like test substrate: a dark retina disc with a handful of small
// colored blobs. The two default lesion classes share similar luminance and
// differ mainly in hue. Grades are a deterministic function of lesion count.
struct SynthConfig {
    int image_size = 256;
    int count = 100;
    double disc_radius_frac = 0.45;
    double noise_level = 0.02;
    double color_cast = 0.0;  // per-image multiplicative channel cast, +-fraction
    int num_grades = 3;
    std::vector<std::pair<int, int>> lesions_per_grade = {{0, 0}, {1, 3}, {4, 8}};
    double lesion_radius_lo = 3.0;
    double lesion_radius_hi = 12.0;
    double max_lesion_area_frac = 0.045;  // of the disc area, hard cap
    double tp_conf_lo = 0.6, tp_conf_hi = 1.0;
    double fp_conf_lo = 0.3, fp_conf_hi = 0.7;
    double fp_rate = 1.0;  // Poisson mean of false-positive boxes per image
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthSample {
    std::string image_id;
    ImageF image;
    int grade = 0;
    std::vector<BBox> true_boxes;   // ground truth, confidence 1
    DetectionRecord detections;     // true boxes with sampled confidences + false positives
};

std::vector<SynthSample> generate(const SynthConfig& cfg);

struct ExportPaths {
    std::string image_dir;
    std::string labels_csv;
    std::string detections_jsonl;
};

// PNG images + labeled CSV + detection JSONL, the formats the rest of the
// pipeline consumes.
ExportPaths export_dataset(const std::vector<SynthSample>& samples, const std::string& dir);

// Lesion count at a confidence threshold, straight from generator state.
std::size_t count_confident_boxes(const std::vector<SynthSample>& samples, double threshold);

}  // namespace lcl
