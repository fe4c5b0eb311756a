#include <doctest.h>

#include <stdexcept>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "lcl/boxes.hpp"
#include "lcl/synth.hpp"

using namespace lcl;

TEST_SUITE_BEGIN("synth");

TEST_CASE("grade-0 images carry no lesion boxes") {
    SynthConfig cfg;
    cfg.count = 60;
    cfg.seed = 1;
    const auto samples = generate(cfg);
    for (const auto& s : samples)
        if (s.grade == 0) CHECK(s.true_boxes.empty());
}

TEST_CASE("same seed reproduces the dataset byte for byte") {
    SynthConfig cfg;
    cfg.count = 10;
    cfg.seed = 2;
    const auto a = generate(cfg);
    const auto b = generate(cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image.data == b[i].image.data);
        CHECK(a[i].grade == b[i].grade);
        REQUIRE(a[i].detections.boxes.size() == b[i].detections.boxes.size());
        for (std::size_t j = 0; j < a[i].detections.boxes.size(); ++j)
            CHECK(a[i].detections.boxes[j].confidence == b[i].detections.boxes[j].confidence);
    }
}

TEST_CASE("mean lesion count increases with grade") {
    SynthConfig cfg;
    cfg.count = 500;
    cfg.seed = 3;
    const auto samples = generate(cfg);
    std::vector<double> count_sum(cfg.num_grades, 0.0), n(cfg.num_grades, 0.0);
    for (const auto& s : samples) {
        count_sum[s.grade] += static_cast<double>(s.true_boxes.size());
        n[s.grade] += 1.0;
    }
    for (int g = 1; g < cfg.num_grades; ++g) {
        REQUIRE(n[g] > 0);
        CHECK(count_sum[g] / n[g] > count_sum[g - 1] / n[g - 1]);
    }
}

TEST_CASE("lesion area stays below the configured disc fraction") {
    SynthConfig cfg;
    cfg.count = 100;
    cfg.seed = 4;
    const auto samples = generate(cfg);
    const double disc_r = cfg.disc_radius_frac * cfg.image_size;
    const double disc_area = std::numbers::pi * disc_r * disc_r;
    for (const auto& s : samples) {
        double area = 0.0;
        for (const auto& b : s.true_boxes)
            area += std::numbers::pi * (b.width() / 2) * (b.height() / 2);
        CHECK(area / disc_area < 0.05);
    }
}

TEST_CASE("false positives stay below the confidence ceiling") {
    SynthConfig cfg;
    cfg.count = 200;
    cfg.seed = 5;
    cfg.fp_rate = 2.0;
    const auto samples = generate(cfg);
    std::size_t n_fp = 0;
    for (const auto& s : samples) {
        REQUIRE(s.detections.boxes.size() >= s.true_boxes.size());
        for (std::size_t j = s.true_boxes.size(); j < s.detections.boxes.size(); ++j) {
            CHECK(s.detections.boxes[j].confidence < 0.7);
            ++n_fp;
        }
    }
    CHECK(n_fp > 0);
    // a 0.9 threshold excludes every false positive
    for (const auto& s : samples)
        for (std::size_t j = s.true_boxes.size(); j < s.detections.boxes.size(); ++j)
            CHECK(s.detections.boxes[j].confidence < 0.9);
}

TEST_CASE("export round trip preserves boxes and file counts") {
    SynthConfig cfg;
    cfg.count = 8;
    cfg.seed = 6;
    const auto samples = generate(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "lcl_synth_test";
    std::filesystem::remove_all(dir);
    const ExportPaths paths = export_dataset(samples, dir.string());

    std::size_t n_images = 0;
    for (const auto& entry : std::filesystem::directory_iterator(paths.image_dir)) {
        (void)entry;
        ++n_images;
    }
    CHECK(n_images == samples.size());
    CHECK(std::filesystem::exists(paths.labels_csv));
    CHECK(std::filesystem::exists(paths.detections_jsonl));

    const auto recs = read_detections_jsonl(paths.detections_jsonl);
    REQUIRE(recs.size() == samples.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        REQUIRE(recs[i].boxes.size() == samples[i].detections.boxes.size());
        for (std::size_t j = 0; j < recs[i].boxes.size(); ++j) {
            CHECK(std::abs(recs[i].boxes[j].x_min - samples[i].detections.boxes[j].x_min) < 1e-9);
            CHECK(std::abs(recs[i].boxes[j].y_max - samples[i].detections.boxes[j].y_max) < 1e-9);
        }
    }

    // threshold filter on the exported file matches the generator's own count
    FilterStats st;
    filter_by_confidence(recs, 0.8, &st);
    CHECK(st.num_lesions == count_confident_boxes(samples, 0.8));
    std::filesystem::remove_all(dir);
}

TEST_CASE("config validation rejects malformed grade ranges") {
    SynthConfig cfg;
    cfg.lesions_per_grade = {{0, 0}, {3, 1}, {4, 8}};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SynthConfig{};
    cfg.num_grades = 4;  // mismatched range list
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_SUITE_END();
