// lclctl: command-line driver for the lesion-patch contrastive pipeline.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 verification
// failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "lcl/experiment.hpp"
#include "lcl/ops.hpp"
#include "lcl/tape.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// thrown for malformed configs (exit 1), as opposed to bad data files (exit 2)
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VerificationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    double threshold = 0.8;
    double fraction = 1.0;

    lcl::SynthConfig synth;
    lcl::TrainConfig train;     // holds augment + arch
    lcl::EvalConfig eval;
    bool train_section = false;  // config supplied an explicit "train" block
    bool eval_section = false;   // config supplied an explicit "eval" block

    // file inputs consumed by individual commands
    std::string detections_path;
    std::string patches_path;
    std::string checkpoint_path;
    std::string train_labels_path;
    std::string test_labels_path;
    bool check_files = true;

    // experiment harness settings
    int compare_train_count = 500;
    int compare_test_count = 200;
    std::vector<double> linear_fractions = {0.01, 0.05, 0.10, 0.25, 1.0};
    std::vector<double> transfer_fractions = {0.01, 0.05, 0.10, 0.25, 1.0};
    std::vector<std::uint64_t> compare_seeds = {1, 2, 3};
    int ablate_train_count = 200;
    int ablate_test_count = 100;
    double ablate_fraction = 0.25;
};

void check_keys(const json& j, const std::string& ctx, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError("config: \"" + ctx + "\" must be an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (allowed.find(key) == allowed.end())
            throw ConfigError("config: unknown key \"" + key + "\" in " + ctx);
    }
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            j.at(key).get_to(out);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config: bad value for \"") + key + "\": " + e.what());
        }
    }
}

void parse_synth(const json& j, lcl::SynthConfig& c) {
    check_keys(j, "synth",
               {"image_size", "count", "disc_radius_frac", "noise_level", "color_cast",
                "num_grades",
                "lesions_per_grade", "lesion_radius_lo", "lesion_radius_hi",
                "max_lesion_area_frac", "tp_conf_lo", "tp_conf_hi", "fp_conf_lo", "fp_conf_hi",
                "fp_rate"});
    get_to(j, "image_size", c.image_size);
    get_to(j, "count", c.count);
    get_to(j, "disc_radius_frac", c.disc_radius_frac);
    get_to(j, "noise_level", c.noise_level);
    get_to(j, "color_cast", c.color_cast);
    get_to(j, "num_grades", c.num_grades);
    get_to(j, "lesions_per_grade", c.lesions_per_grade);
    get_to(j, "lesion_radius_lo", c.lesion_radius_lo);
    get_to(j, "lesion_radius_hi", c.lesion_radius_hi);
    get_to(j, "max_lesion_area_frac", c.max_lesion_area_frac);
    get_to(j, "tp_conf_lo", c.tp_conf_lo);
    get_to(j, "tp_conf_hi", c.tp_conf_hi);
    get_to(j, "fp_conf_lo", c.fp_conf_lo);
    get_to(j, "fp_conf_hi", c.fp_conf_hi);
    get_to(j, "fp_rate", c.fp_rate);
}

void parse_augment(const json& j, lcl::AugmentConfig& c) {
    check_keys(j, "augment",
               {"crop", "rotation", "color_distortion", "gray_scaling", "crop_scale_lo",
                "crop_scale_hi", "gray_prob", "color_lo", "color_hi", "hue_lo", "hue_hi"});
    get_to(j, "crop", c.crop);
    get_to(j, "rotation", c.rotation);
    get_to(j, "color_distortion", c.color_distortion);
    get_to(j, "gray_scaling", c.gray_scaling);
    get_to(j, "crop_scale_lo", c.crop_scale_lo);
    get_to(j, "crop_scale_hi", c.crop_scale_hi);
    get_to(j, "gray_prob", c.gray_prob);
    get_to(j, "color_lo", c.color_lo);
    get_to(j, "color_hi", c.color_hi);
    get_to(j, "hue_lo", c.hue_lo);
    get_to(j, "hue_hi", c.hue_hi);
}

void parse_arch(const json& j, lcl::ArchDescriptor& c) {
    check_keys(j, "arch", {"conv_channels", "embed_dim"});
    get_to(j, "conv_channels", c.conv_channels);
    get_to(j, "embed_dim", c.embed_dim);
}

void parse_train(const json& j, lcl::TrainConfig& c) {
    check_keys(j, "train",
               {"batch_size", "epochs", "initial_lr", "temperature", "checkpoint_interval"});
    get_to(j, "batch_size", c.batch_size);
    get_to(j, "epochs", c.epochs);
    get_to(j, "initial_lr", c.initial_lr);
    get_to(j, "temperature", c.temperature);
    get_to(j, "checkpoint_interval", c.checkpoint_interval);
}

void parse_eval(const json& j, lcl::EvalConfig& c) {
    check_keys(j, "eval",
               {"probe_lr", "probe_epochs", "finetune_lr", "finetune_epochs", "finetune_batch",
                "input_size"});
    get_to(j, "probe_lr", c.probe_lr);
    get_to(j, "probe_epochs", c.probe_epochs);
    get_to(j, "finetune_lr", c.finetune_lr);
    get_to(j, "finetune_epochs", c.finetune_epochs);
    get_to(j, "finetune_batch", c.finetune_batch);
    get_to(j, "input_size", c.input_size);
}

void parse_paths(const json& j, RunConfig& c) {
    check_keys(j, "paths",
               {"detections", "patches", "checkpoint", "train_labels", "test_labels"});
    get_to(j, "detections", c.detections_path);
    get_to(j, "patches", c.patches_path);
    get_to(j, "checkpoint", c.checkpoint_path);
    get_to(j, "train_labels", c.train_labels_path);
    get_to(j, "test_labels", c.test_labels_path);
}

void parse_compare(const json& j, RunConfig& c) {
    check_keys(j, "compare",
               {"train_count", "test_count", "linear_fractions", "transfer_fractions", "seeds"});
    get_to(j, "train_count", c.compare_train_count);
    get_to(j, "test_count", c.compare_test_count);
    get_to(j, "linear_fractions", c.linear_fractions);
    get_to(j, "transfer_fractions", c.transfer_fractions);
    get_to(j, "seeds", c.compare_seeds);
}

void parse_ablate(const json& j, RunConfig& c) {
    check_keys(j, "ablate", {"train_count", "test_count", "fraction"});
    get_to(j, "train_count", c.ablate_train_count);
    get_to(j, "test_count", c.ablate_test_count);
    get_to(j, "fraction", c.ablate_fraction);
}

RunConfig parse_config(const json& j) {
    RunConfig c;
    check_keys(j, "config root",
               {"seed", "out_dir", "threshold", "fraction", "check_files", "synth", "augment",
                "arch", "train", "eval", "paths", "compare", "ablate"});
    get_to(j, "seed", c.seed);
    get_to(j, "out_dir", c.out_dir);
    get_to(j, "threshold", c.threshold);
    get_to(j, "fraction", c.fraction);
    get_to(j, "check_files", c.check_files);
    if (j.contains("synth")) parse_synth(j.at("synth"), c.synth);
    if (j.contains("augment")) parse_augment(j.at("augment"), c.train.augment);
    if (j.contains("arch")) parse_arch(j.at("arch"), c.train.arch);
    if (j.contains("train")) {
        parse_train(j.at("train"), c.train);
        c.train_section = true;
    }
    if (j.contains("eval")) {
        parse_eval(j.at("eval"), c.eval);
        c.eval_section = true;
    }
    if (j.contains("paths")) parse_paths(j.at("paths"), c);
    if (j.contains("compare")) parse_compare(j.at("compare"), c);
    if (j.contains("ablate")) parse_ablate(j.at("ablate"), c);
    return c;
}

json config_to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["threshold"] = c.threshold;
    j["fraction"] = c.fraction;
    j["check_files"] = c.check_files;
    j["synth"] = {{"image_size", c.synth.image_size},
                  {"count", c.synth.count},
                  {"disc_radius_frac", c.synth.disc_radius_frac},
                  {"noise_level", c.synth.noise_level},
                  {"color_cast", c.synth.color_cast},
                  {"num_grades", c.synth.num_grades},
                  {"lesions_per_grade", c.synth.lesions_per_grade},
                  {"lesion_radius_lo", c.synth.lesion_radius_lo},
                  {"lesion_radius_hi", c.synth.lesion_radius_hi},
                  {"max_lesion_area_frac", c.synth.max_lesion_area_frac},
                  {"tp_conf_lo", c.synth.tp_conf_lo},
                  {"tp_conf_hi", c.synth.tp_conf_hi},
                  {"fp_conf_lo", c.synth.fp_conf_lo},
                  {"fp_conf_hi", c.synth.fp_conf_hi},
                  {"fp_rate", c.synth.fp_rate}};
    const lcl::AugmentConfig& a = c.train.augment;
    j["augment"] = {{"crop", a.crop},
                    {"rotation", a.rotation},
                    {"color_distortion", a.color_distortion},
                    {"gray_scaling", a.gray_scaling},
                    {"crop_scale_lo", a.crop_scale_lo},
                    {"crop_scale_hi", a.crop_scale_hi},
                    {"gray_prob", a.gray_prob},
                    {"color_lo", a.color_lo},
                    {"color_hi", a.color_hi},
                    {"hue_lo", a.hue_lo},
                    {"hue_hi", a.hue_hi}};
    j["arch"] = {{"conv_channels", c.train.arch.conv_channels},
                 {"embed_dim", c.train.arch.embed_dim}};
    j["train"] = {{"batch_size", c.train.batch_size},
                  {"epochs", c.train.epochs},
                  {"initial_lr", c.train.initial_lr},
                  {"temperature", c.train.temperature},
                  {"checkpoint_interval", c.train.checkpoint_interval}};
    j["eval"] = {{"probe_lr", c.eval.probe_lr},
                 {"probe_epochs", c.eval.probe_epochs},
                 {"finetune_lr", c.eval.finetune_lr},
                 {"finetune_epochs", c.eval.finetune_epochs},
                 {"finetune_batch", c.eval.finetune_batch},
                 {"input_size", c.eval.input_size}};
    j["paths"] = {{"detections", c.detections_path},
                  {"patches", c.patches_path},
                  {"checkpoint", c.checkpoint_path},
                  {"train_labels", c.train_labels_path},
                  {"test_labels", c.test_labels_path}};
    j["compare"] = {{"train_count", c.compare_train_count},
                    {"test_count", c.compare_test_count},
                    {"linear_fractions", c.linear_fractions},
                    {"transfer_fractions", c.transfer_fractions},
                    {"seeds", c.compare_seeds}};
    j["ablate"] = {{"train_count", c.ablate_train_count},
                   {"test_count", c.ablate_test_count},
                   {"fraction", c.ablate_fraction}};
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
}

void echo_config(const RunConfig& c) {
    fs::create_directories(c.out_dir);
    write_text((fs::path(c.out_dir) / "config.json").string(), config_to_json(c).dump(2) + "\n");
}

std::string hash_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    char buf[4096];
    while (f.read(buf, sizeof buf) || f.gcount() > 0)
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

lcl::SynthConfig seeded_synth(const RunConfig& c) {
    lcl::SynthConfig s = c.synth;
    s.seed = c.seed;
    return s;
}

// ---- commands ----

int cmd_synth(const RunConfig& cfg) {
    lcl::SynthConfig sc = seeded_synth(cfg);
    sc.validate();
    const auto samples = lcl::generate(sc);
    const lcl::ExportPaths paths = lcl::export_dataset(samples, cfg.out_dir);
    echo_config(cfg);

    std::vector<int> per_grade(sc.num_grades, 0);
    std::size_t boxes = 0;
    for (const auto& s : samples) {
        ++per_grade[s.grade];
        boxes += s.detections.boxes.size();
    }
    json report{{"count", samples.size()},
                {"per_grade", per_grade},
                {"detection_boxes", boxes},
                {"image_dir", paths.image_dir},
                {"labels_csv", paths.labels_csv},
                {"detections_jsonl", paths.detections_jsonl}};
    write_text((fs::path(cfg.out_dir) / "synth_report.json").string(), report.dump(2) + "\n");
    std::cout << "generated " << samples.size() << " images, " << boxes << " detection boxes -> "
              << cfg.out_dir << "\n";
    return 0;
}

int cmd_extract(const RunConfig& cfg) {
    if (cfg.detections_path.empty())
        throw ConfigError("extract: paths.detections (or --detections) is required");
    const auto recs = lcl::read_detections_jsonl(cfg.detections_path);
    lcl::PatchDatasetOptions opts;
    opts.threshold = cfg.threshold;
    opts.check_files = cfg.check_files;
    lcl::FilterStats stats;
    lcl::filter_by_confidence(recs, cfg.threshold, &stats);
    lcl::Rng rng(cfg.seed);
    const auto patches = lcl::build_patch_dataset(recs, opts, rng);

    echo_config(cfg);
    const std::string manifest = (fs::path(cfg.out_dir) / "patches.jsonl").string();
    lcl::write_patches_jsonl(manifest, patches);
    json report{{"threshold", cfg.threshold},
                {"num_images", stats.num_images},
                {"num_lesions", stats.num_lesions},
                {"num_patches", patches.size()},
                {"manifest", manifest}};
    write_text((fs::path(cfg.out_dir) / "extract_report.json").string(), report.dump(2) + "\n");
    std::printf("threshold %.2f  images %zu  lesions %zu\n", cfg.threshold, stats.num_images,
                stats.num_lesions);
    return 0;
}

lcl::ImageProvider file_provider(const std::vector<lcl::DetectionRecord>& recs) {
    auto paths = std::make_shared<std::map<std::string, std::string>>();
    for (const auto& r : recs) (*paths)[r.image_id] = r.image_path;
    return [paths](const std::string& id) {
        auto it = paths->find(id);
        if (it == paths->end()) throw std::runtime_error("no detection record for image " + id);
        return lcl::resize_bilinear(lcl::read_image(it->second), lcl::kWorkingSize,
                                    lcl::kWorkingSize);
    };
}

int cmd_pretrain(const RunConfig& cfg) {
    if (cfg.detections_path.empty() || cfg.patches_path.empty())
        throw ConfigError("pretrain: paths.detections and paths.patches are required");
    const auto recs = lcl::read_detections_jsonl(cfg.detections_path);
    const auto patches = lcl::read_patches_jsonl(cfg.patches_path);

    lcl::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    fs::create_directories(cfg.out_dir);
    tc.checkpoint_path = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
    const lcl::PretrainResult r = lcl::pretrain(tc, patches, file_provider(recs));

    echo_config(cfg);
    lcl::write_train_log_csv((fs::path(cfg.out_dir) / "train_log.csv").string(), r.log);
    json report{{"steps", r.log.entries.size()},
                {"final_mean_loss", r.log.entries.empty() ? 0.0 : r.log.entries.back().mean_loss},
                {"final_contrastive_acc",
                 r.log.entries.empty() ? 0.0 : r.log.entries.back().contrastive_acc},
                {"checkpoint", tc.checkpoint_path},
                {"checkpoint_hash", hash_file(tc.checkpoint_path)}};
    write_text((fs::path(cfg.out_dir) / "pretrain_report.json").string(), report.dump(2) + "\n");
    std::cout << "pretrained " << r.log.entries.size() << " steps -> " << tc.checkpoint_path
              << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& protocol) {
    if (cfg.checkpoint_path.empty())
        throw ConfigError(protocol + "-eval: paths.checkpoint is required");
    if (cfg.train_labels_path.empty() || cfg.test_labels_path.empty())
        throw ConfigError(protocol + "-eval: paths.train_labels and paths.test_labels are required");
    const lcl::Checkpoint ckpt = lcl::load_checkpoint(cfg.checkpoint_path, /*drop_head=*/true);
    const int k = cfg.synth.num_grades;
    const lcl::LabeledDataset train =
        lcl::load_labeled_csv(cfg.train_labels_path, k, cfg.eval.input_size);
    const lcl::LabeledDataset test =
        lcl::load_labeled_csv(cfg.test_labels_path, k, cfg.eval.input_size);
    const lcl::LabeledDataset sub = lcl::sample_partial(train, cfg.fraction, cfg.seed);

    lcl::EvalConfig ec = cfg.eval;
    ec.seed = cfg.seed;
    lcl::EvalReport r = protocol == "linear" ? lcl::linear_eval(ckpt, sub, test, ec)
                                             : lcl::transfer_eval(ckpt, sub, test, ec);
    r.fraction = cfg.fraction;

    echo_config(cfg);
    const std::string report_path =
        (fs::path(cfg.out_dir) / (protocol + "_eval_report.json")).string();
    lcl::write_eval_report_json(report_path, r, config_to_json(cfg).dump(),
                                hash_file(cfg.checkpoint_path));
    std::printf("%s eval: fraction %.4f  kappa %.4f  accuracy %.4f\n", protocol.c_str(),
                cfg.fraction, r.kappa, r.accuracy);
    return 0;
}

// The comparison/ablation harness defaults to the tuned experiment recipe
// rather than the plain pretraining defaults; an explicit train/eval config
// block still overrides it.
RunConfig with_experiment_recipe(const RunConfig& cfg) {
    RunConfig local = cfg;
    if (!cfg.train_section) {
        lcl::TrainConfig rt = lcl::compare_train_recipe();
        rt.augment = cfg.train.augment;
        rt.arch = cfg.train.arch;
        local.train = rt;
    }
    if (!cfg.eval_section) local.eval = lcl::compare_eval_recipe();
    return local;
}

int cmd_ablate(const RunConfig& raw_cfg) {
    const RunConfig cfg = with_experiment_recipe(raw_cfg);
    lcl::AblateOptions opts;
    opts.synth = seeded_synth(cfg);
    opts.train_count = cfg.ablate_train_count;
    opts.test_count = cfg.ablate_test_count;
    opts.threshold = cfg.threshold;
    opts.train = cfg.train;
    opts.eval = cfg.eval;
    opts.fraction = cfg.ablate_fraction;
    opts.seed = cfg.seed;
    const auto rows = lcl::run_ablate(opts);

    echo_config(cfg);
    std::ostringstream table;
    table << "crop rotation color gray   kappa\n";
    json jrows = json::array();
    for (const auto& r : rows) {
        char line[96];
        std::snprintf(line, sizeof line, "%4s %8s %5s %4s  %+.4f\n", r.crop ? "x" : "-",
                      r.rotation ? "x" : "-", r.color ? "x" : "-", r.gray ? "x" : "-", r.kappa);
        table << line;
        jrows.push_back({{"crop", r.crop},
                         {"rotation", r.rotation},
                         {"color", r.color},
                         {"gray", r.gray},
                         {"kappa", r.kappa}});
    }
    write_text((fs::path(cfg.out_dir) / "ablate_report.json").string(),
               json{{"rows", jrows}}.dump(2) + "\n");
    write_text((fs::path(cfg.out_dir) / "ablate_table.txt").string(), table.str());
    std::cout << table.str();
    return 0;
}

int cmd_compare(const RunConfig& raw_cfg) {
    const RunConfig cfg = with_experiment_recipe(raw_cfg);
    lcl::CompareOptions opts;
    opts.synth = seeded_synth(cfg);
    opts.train_count = cfg.compare_train_count;
    opts.test_count = cfg.compare_test_count;
    opts.threshold = cfg.threshold;
    opts.train = cfg.train;
    opts.eval = cfg.eval;
    opts.linear_fractions = cfg.linear_fractions;
    opts.transfer_fractions = cfg.transfer_fractions;
    opts.seeds = cfg.compare_seeds;
    const lcl::CompareReport report = lcl::run_compare(opts);

    echo_config(cfg);
    auto grid_json = [](const lcl::KappaGrid& g) {
        json j;
        for (const auto& [method, protos] : g)
            for (const auto& [protocol, cells] : protos)
                for (const auto& [fraction, kappa] : cells)
                    j[method][protocol][std::to_string(fraction)] = kappa;
        return j;
    };
    json out;
    out["median"] = grid_json(report.median);
    for (const auto& g : report.per_seed) out["per_seed"].push_back(grid_json(g));
    write_text((fs::path(cfg.out_dir) / "compare_report.json").string(), out.dump(2) + "\n");

    std::ostringstream table;
    for (const auto& [method, protos] : report.median)
        for (const auto& [protocol, cells] : protos) {
            char head[96];
            std::snprintf(head, sizeof head, "%-16s %-8s", method.c_str(), protocol.c_str());
            table << head;
            for (const auto& [fraction, kappa] : cells) {
                char cell[48];
                std::snprintf(cell, sizeof cell, "  %5.1f%%: %+.4f", fraction * 100.0, kappa);
                table << cell;
            }
            table << "\n";
        }
    write_text((fs::path(cfg.out_dir) / "compare_table.txt").string(), table.str());
    std::cout << table.str();
    return 0;
}

int cmd_gradcheck(const RunConfig& cfg) {
    using namespace lcl;
    double worst = 0.0;

    // (a) loss gradient w.r.t. the embedding matrix
    {
        Rng rng(cfg.seed);
        for (int trial = 0; trial < 3; ++trial) {
            EmbeddingBatch b;
            b.z = Tensor({6, 4});
            for (auto& v : b.z.data) v = rng.uniform(-1.0, 1.0);
            b.partner = {1, 0, 3, 2, 5, 4};
            b.temperature = 0.2;
            Tensor gz;
            ntxent_loss(b, &gz);
            const Tensor fd = finite_diff_grad(
                [&](const Tensor& probe) {
                    EmbeddingBatch p = b;
                    p.z = probe;
                    return ntxent_loss(p).total;
                },
                b.z, 1e-5);
            worst = std::max(worst, max_rel_error(gz, fd, 1e-4));
        }
    }

    // (b) encoder + head + loss w.r.t. every parameter, tiny descriptor, N=2
    {
        ArchDescriptor desc;
        desc.conv_channels = {4, 8};
        desc.embed_dim = 4;
        ParamSet params = init_params(desc, cfg.seed);
        Rng rng(derive_seed(cfg.seed, 0x6C, 0));
        // nudge biases off the ReLU kinks
        for (auto& [name, t] : params.tensors)
            if (name.ends_with(".b"))
                for (auto& v : t.data) v += rng.uniform(0.01, 0.05);

        std::vector<Tensor> views;
        for (int i = 0; i < 4; ++i) {
            Tensor v({3, 8, 8});
            for (auto& x : v.data) x = rng.uniform(0.0, 1.0);
            views.push_back(std::move(v));
        }
        const std::vector<int> partner = {1, 0, 3, 2};

        auto loss_at = [&](const ParamSet& p) {
            EmbeddingBatch b;
            b.z = Tensor({4, desc.embed_dim});
            b.partner = partner;
            b.temperature = 0.2;
            for (int i = 0; i < 4; ++i) {
                const Tensor z = forward_projection(p, forward_features(p, desc, views[i]));
                for (int k = 0; k < desc.embed_dim; ++k)
                    b.z[static_cast<std::int64_t>(i) * desc.embed_dim + k] = z[k];
            }
            return ntxent_loss(b).total;
        };

        Tape tape;
        const TapedParams tp = put_params(tape, params);
        EmbeddingBatch b;
        b.z = Tensor({4, desc.embed_dim});
        b.partner = partner;
        b.temperature = 0.2;
        std::vector<int> z_ids(4);
        for (int i = 0; i < 4; ++i) {
            const int view = tape.leaf(standardize_view(views[i]));
            z_ids[i] = forward_projection(tape, tp, forward_features(tape, tp, desc, view));
            const Tensor& z = tape.value(z_ids[i]);
            for (int k = 0; k < desc.embed_dim; ++k)
                b.z[static_cast<std::int64_t>(i) * desc.embed_dim + k] = z[k];
        }
        Tensor gz;
        ntxent_loss(b, &gz);
        std::vector<std::pair<int, Tensor>> seeds;
        for (int i = 0; i < 4; ++i) {
            Tensor g({desc.embed_dim});
            for (int k = 0; k < desc.embed_dim; ++k)
                g[k] = gz[static_cast<std::int64_t>(i) * desc.embed_dim + k];
            seeds.emplace_back(z_ids[i], std::move(g));
        }
        tape.backward_seeded(seeds);

        for (std::size_t pi = 0; pi < tp.names.size(); ++pi) {
            const std::string& name = tp.names[pi];
            const Tensor fd = finite_diff_grad(
                [&](const Tensor& probe) {
                    ParamSet p = params;
                    p.at(name) = probe;
                    return loss_at(p);
                },
                params.at(name), 1e-5);
            worst = std::max(worst, max_rel_error(tape.grad(tp.ids[pi]), fd, 1e-4));
        }
    }

    std::printf("gradcheck max relative error: %.3e\n", worst);
    if (!(worst < 1e-4)) throw VerificationError("gradient check failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lesion-patch contrastive learning pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir, detections, patches_path, checkpoint;
    std::uint64_t seed = 0;
    double threshold = -1.0, fraction = -1.0;
    bool single_thread = false;
    bool seed_set = false, out_set = false;

    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--seed", seed, "override config seed")->each([&](const std::string&) {
        seed_set = true;
    });
    app.add_option("--out", out_dir, "override output directory")->each([&](const std::string&) {
        out_set = true;
    });
    app.add_option("--threshold", threshold, "detection confidence threshold");
    app.add_option("--fraction", fraction, "labeled-data fraction for evaluation");
    app.add_option("--detections", detections, "detection JSONL path");
    app.add_option("--patches", patches_path, "patch manifest JSONL path");
    app.add_option("--checkpoint", checkpoint, "checkpoint path");
    app.add_flag("--single-thread", single_thread, "force the single-threaded path");

    app.add_subcommand("synth", "generate a synthetic dataset");
    app.add_subcommand("extract", "filter detections and build the patch manifest");
    app.add_subcommand("pretrain", "contrastive pretraining from a patch manifest");
    app.add_subcommand("linear-eval", "linear probe on a frozen encoder");
    app.add_subcommand("transfer-eval", "fine-tune encoder plus classifier");
    app.add_subcommand("ablate", "augmentation-composition study");
    app.add_subcommand("compare", "lesion-patch vs whole-image vs random baselines");
    app.add_subcommand("gradcheck", "finite-difference gradient verification");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    if (single_thread) {
#ifdef _OPENMP
        omp_set_num_threads(1);
#endif
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) {
            std::ifstream f(config_path);
            if (!f) throw std::runtime_error("cannot open config: " + config_path);
            json j;
            try {
                j = json::parse(f);
            } catch (const json::exception& e) {
                throw ConfigError(std::string("config: ") + e.what());
            }
            cfg = parse_config(j);
        }
        if (seed_set) cfg.seed = seed;
        if (out_set) cfg.out_dir = out_dir;
        if (threshold >= 0.0) cfg.threshold = threshold;
        if (fraction >= 0.0) cfg.fraction = fraction;
        if (!detections.empty()) cfg.detections_path = detections;
        if (!patches_path.empty()) cfg.patches_path = patches_path;
        if (!checkpoint.empty()) cfg.checkpoint_path = checkpoint;

        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "synth") return cmd_synth(cfg);
        if (cmd == "extract") return cmd_extract(cfg);
        if (cmd == "pretrain") return cmd_pretrain(cfg);
        if (cmd == "linear-eval") return cmd_eval(cfg, "linear");
        if (cmd == "transfer-eval") return cmd_eval(cfg, "transfer");
        if (cmd == "ablate") return cmd_ablate(cfg);
        if (cmd == "compare") return cmd_compare(cfg);
        if (cmd == "gradcheck") return cmd_gradcheck(cfg);
        std::cerr << "unknown command\n";
        return 1;
    } catch (const VerificationError& e) {
        std::cerr << "verification failure: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
