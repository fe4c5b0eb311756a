#include "lcl/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace lcl {

using nlohmann::json;

void BBox::validate() const {
    if (!(x_min < x_max) || !(y_min < y_max))
        throw std::invalid_argument("bbox: degenerate extents");
    if (confidence < 0.0 || confidence > 1.0)
        throw std::invalid_argument("bbox: confidence outside [0,1]");
}

std::vector<DetectionRecord> filter_by_confidence(const std::vector<DetectionRecord>& recs,
                                                  double threshold, FilterStats* stats) {
    if (threshold < 0.0 || threshold > 1.0)
        throw std::invalid_argument("filter_by_confidence: threshold outside [0,1]");
    std::vector<DetectionRecord> out;
    FilterStats st;
    for (const auto& rec : recs) {
        DetectionRecord kept = rec;
        kept.boxes.clear();
        for (const auto& b : rec.boxes)
            if (b.confidence >= threshold) kept.boxes.push_back(b);
        if (kept.boxes.empty()) continue;
        st.num_images += 1;
        st.num_lesions += kept.boxes.size();
        out.push_back(std::move(kept));
    }
    if (stats) *stats = st;
    return out;
}

DetectionRecord rescale_boxes(const DetectionRecord& rec, int target) {
    if (rec.original_width <= 0 || rec.original_height <= 0)
        throw std::invalid_argument("rescale_boxes: original extents must be positive");
    const double fx = static_cast<double>(target) / rec.original_width;
    const double fy = static_cast<double>(target) / rec.original_height;
    DetectionRecord out = rec;
    out.original_width = target;
    out.original_height = target;
    for (auto& b : out.boxes) {
        b.x_min *= fx;
        b.x_max *= fx;
        b.y_min *= fy;
        b.y_max *= fy;
    }
    return out;
}

PatchSpec expand_and_shift(const BBox& box, const std::string& image_id, Rng& rng) {
    const int side = 128;
    const int limit = kWorkingSize - side;
    auto pick = [&](double lo_edge, double hi_edge, double center, bool fits) {
        if (fits) {
            const int lo = std::max(0, static_cast<int>(std::ceil(hi_edge - side)));
            const int hi = std::min(limit, static_cast<int>(std::floor(lo_edge)));
            if (lo <= hi) return static_cast<int>(rng.uniform_int(lo, hi));
        }
        // oversized lesion (or no feasible integer position): centered, zero shift
        return std::clamp(static_cast<int>(std::lround(center - side * 0.5)), 0, limit);
    };
    const bool fits_x = box.width() <= side;
    const bool fits_y = box.height() <= side;
    const int x0 = pick(box.x_min, box.x_max, box.center_x(), fits_x);
    const int y0 = pick(box.y_min, box.y_max, box.center_y(), fits_y);

    PatchSpec spec;
    spec.image_id = image_id;
    spec.lesion = box;
    spec.window.x_min = x0;
    spec.window.y_min = y0;
    spec.window.x_max = x0 + side;
    spec.window.y_max = y0 + side;
    spec.window.class_label = box.class_label;
    spec.window.confidence = box.confidence;
    return spec;
}

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace

std::vector<PatchSpec> build_patch_dataset(const std::vector<DetectionRecord>& recs,
                                           const PatchDatasetOptions& opts, Rng& rng) {
    auto filtered = filter_by_confidence(recs, opts.threshold);
    std::sort(filtered.begin(), filtered.end(),
              [](const DetectionRecord& a, const DetectionRecord& b) {
                  return a.image_id < b.image_id;
              });
    const std::uint64_t base = rng.next_u64();
    std::vector<PatchSpec> out;
    for (const auto& rec : filtered) {
        if (opts.check_files && !rec.image_path.empty() &&
            !std::filesystem::exists(rec.image_path))
            throw std::runtime_error("missing image file: " + rec.image_path);
        const DetectionRecord scaled = rescale_boxes(rec);
        for (std::size_t i = 0; i < scaled.boxes.size(); ++i) {
            const BBox& b = scaled.boxes[i];
            if (!opts.class_filter.empty() &&
                std::find(opts.class_filter.begin(), opts.class_filter.end(), b.class_label) ==
                    opts.class_filter.end())
                continue;
            Rng child(derive_seed(base, fnv1a64(rec.image_id), i));
            out.push_back(expand_and_shift(b, rec.image_id, child));
        }
    }
    return out;
}

namespace {

json box_to_json(const BBox& b) {
    return json{{"x1", b.x_min}, {"y1", b.y_min}, {"x2", b.x_max}, {"y2", b.y_max},
                {"class", b.class_label}, {"conf", b.confidence}};
}

BBox box_from_json(const json& j) {
    BBox b;
    b.x_min = j.at("x1").get<double>();
    b.y_min = j.at("y1").get<double>();
    b.x_max = j.at("x2").get<double>();
    b.y_max = j.at("y2").get<double>();
    b.class_label = j.at("class").get<std::string>();
    b.confidence = j.at("conf").get<double>();
    return b;
}

}  // namespace

std::vector<DetectionRecord> read_detections_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open detections: " + path);
    std::vector<DetectionRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        DetectionRecord rec;
        rec.image_id = j.at("image_id").get<std::string>();
        rec.image_path = j.at("path").get<std::string>();
        rec.original_width = j.at("width").get<int>();
        rec.original_height = j.at("height").get<int>();
        for (const auto& jb : j.at("boxes")) rec.boxes.push_back(box_from_json(jb));
        out.push_back(std::move(rec));
    }
    return out;
}

void write_detections_jsonl(const std::string& path, const std::vector<DetectionRecord>& recs) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& rec : recs) {
        json boxes = json::array();
        for (const auto& b : rec.boxes) boxes.push_back(box_to_json(b));
        json j{{"image_id", rec.image_id}, {"path", rec.image_path},
               {"width", rec.original_width}, {"height", rec.original_height},
               {"boxes", boxes}};
        f << j.dump() << '\n';
    }
}

std::vector<PatchSpec> read_patches_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open patch manifest: " + path);
    std::vector<PatchSpec> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        PatchSpec p;
        p.image_id = j.at("image_id").get<std::string>();
        p.window = box_from_json(j.at("window"));
        p.lesion = box_from_json(j.at("lesion"));
        out.push_back(std::move(p));
    }
    return out;
}

void write_patches_jsonl(const std::string& path, const std::vector<PatchSpec>& patches) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& p : patches) {
        json j{{"image_id", p.image_id}, {"window", box_to_json(p.window)},
               {"lesion", box_to_json(p.lesion)}};
        f << j.dump() << '\n';
    }
}

}  // namespace lcl
