#pragma once

#include <string>
#include <vector>

#include "lcl/rng.hpp"

namespace lcl {

constexpr int kWorkingSize = 512;  // detection frame after rescaling

struct BBox {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
    std::string class_label;
    double confidence = 1.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double center_x() const { return 0.5 * (x_min + x_max); }
    double center_y() const { return 0.5 * (y_min + y_max); }

    void validate() const;
};

struct DetectionRecord {
    std::string image_id;
    std::string image_path;
    int original_width = 0;
    int original_height = 0;
    std::vector<BBox> boxes;
};

// A 128x128 extraction window in the 512x512 frame, bound to its lesion box.
struct PatchSpec {
    std::string image_id;
    BBox window;  // side lengths exactly 128, inside [0,512]^2
    BBox lesion;  // in the 512x512 frame
};

struct FilterStats {
    std::size_t num_images = 0;
    std::size_t num_lesions = 0;
};

std::vector<DetectionRecord> filter_by_confidence(const std::vector<DetectionRecord>& recs,
                                                  double threshold,
                                                  FilterStats* stats = nullptr);

DetectionRecord rescale_boxes(const DetectionRecord& rec, int target = kWorkingSize);

// Center a 128 window on the lesion, then shift uniformly over the feasible
// offset rectangle: the lesion box stays inside the window when it fits,
// otherwise the lesion center does. Window clamped into the image frame.
PatchSpec expand_and_shift(const BBox& box, const std::string& image_id, Rng& rng);

struct PatchDatasetOptions {
    double threshold = 0.8;
    std::vector<std::string> class_filter;  // empty = keep all classes
    bool check_files = true;
};

std::vector<PatchSpec> build_patch_dataset(const std::vector<DetectionRecord>& recs,
                                           const PatchDatasetOptions& opts, Rng& rng);

// Detection JSONL: one record per line.
std::vector<DetectionRecord> read_detections_jsonl(const std::string& path);
void write_detections_jsonl(const std::string& path, const std::vector<DetectionRecord>& recs);

// Patch manifest JSONL.
std::vector<PatchSpec> read_patches_jsonl(const std::string& path);
void write_patches_jsonl(const std::string& path, const std::vector<PatchSpec>& patches);

}  // namespace lcl
