#include "lcl/experiment.hpp"

#include <algorithm>
#include <array>
#include <memory>
#include <stdexcept>
#include <unordered_map>

namespace lcl {

namespace {

std::unordered_map<std::string, const ImageF*> index_samples(
    const std::vector<SynthSample>& samples) {
    std::unordered_map<std::string, const ImageF*> idx;
    for (const auto& s : samples) idx.emplace(s.image_id, &s.image);
    return idx;
}

Checkpoint run_pretrain(const TrainConfig& base, std::uint64_t seed,
                        const std::vector<PatchSpec>& patches, const ImageProvider& provider) {
    TrainConfig cfg = base;
    cfg.seed = seed;
    cfg.checkpoint_path.clear();  // the harness keeps checkpoints in memory
    cfg.checkpoint_interval = 0;
    return pretrain(cfg, patches, provider).checkpoint;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TrainConfig compare_train_recipe() {
    TrainConfig tc;
    tc.batch_size = 8;
    tc.epochs = 15;
    tc.initial_lr = 0.05;
    tc.temperature = 0.15;
    tc.arch.conv_channels = {8, 16, 32};
    tc.arch.embed_dim = 16;
    return tc;
}

EvalConfig compare_eval_recipe() {
    EvalConfig ec;
    ec.input_size = 256;
    ec.finetune_lr = 0.5;
    ec.finetune_epochs = 40;
    ec.finetune_batch = 5;
    return ec;
}

ExperimentData make_experiment_data(const SynthConfig& base, int train_count, int test_count,
                                    std::uint64_t seed) {
    ExperimentData data;
    SynthConfig cfg = base;
    cfg.count = train_count;
    cfg.seed = derive_seed(seed, 0xDA7A, 0);
    data.train = generate(cfg);
    cfg.count = test_count;
    cfg.seed = derive_seed(seed, 0xDA7A, 1);
    data.test = generate(cfg);
    return data;
}

std::vector<PatchSpec> lesion_patches(const std::vector<SynthSample>& samples, double threshold,
                                      std::uint64_t seed) {
    std::vector<DetectionRecord> recs;
    recs.reserve(samples.size());
    for (const auto& s : samples) recs.push_back(s.detections);
    PatchDatasetOptions opts;
    opts.threshold = threshold;
    opts.check_files = false;  // images live in memory, not on disk
    Rng rng(derive_seed(seed, 0x9A7C, 0));
    return build_patch_dataset(recs, opts, rng);
}

ImageProvider working_frame_provider(const std::vector<SynthSample>& samples) {
    auto idx = std::make_shared<std::unordered_map<std::string, const ImageF*>>(
        index_samples(samples));
    return [idx](const std::string& id) {
        auto it = idx->find(id);
        if (it == idx->end()) throw std::runtime_error("no such sample image: " + id);
        return resize_bilinear(*it->second, kWorkingSize, kWorkingSize);
    };
}

std::vector<PatchSpec> whole_image_patches(const std::vector<SynthSample>& samples) {
    std::vector<PatchSpec> patches;
    patches.reserve(samples.size());
    for (const auto& s : samples) {
        PatchSpec p;
        p.image_id = s.image_id;
        p.window = BBox{0.0, 0.0, double(kPatchSize), double(kPatchSize), "whole", 1.0};
        // nominal "lesion" at the frame center so random crops pivot there
        const double c = kPatchSize / 2.0;
        p.lesion = BBox{c - 24.0, c - 24.0, c + 24.0, c + 24.0, "whole", 1.0};
        patches.push_back(std::move(p));
    }
    return patches;
}

ImageProvider whole_image_provider(const std::vector<SynthSample>& samples) {
    auto idx = std::make_shared<std::unordered_map<std::string, const ImageF*>>(
        index_samples(samples));
    return [idx](const std::string& id) {
        auto it = idx->find(id);
        if (it == idx->end()) throw std::runtime_error("no such sample image: " + id);
        return resize_bilinear(*it->second, kPatchSize, kPatchSize);
    };
}

LabeledDataset to_labeled(const std::vector<SynthSample>& samples, int num_classes,
                          int input_size) {
    LabeledDataset ds;
    ds.num_classes = num_classes;
    ds.samples.reserve(samples.size());
    for (const auto& s : samples) {
        LabeledSample l;
        l.grade = s.grade;
        l.image = resize_bilinear(s.image, input_size, input_size).to_chw();
        ds.samples.push_back(std::move(l));
    }
    return ds;
}

CompareReport run_compare(const CompareOptions& opts) {
    const ExperimentData data =
        make_experiment_data(opts.synth, opts.train_count, opts.test_count, opts.synth.seed);
    const int k = opts.synth.num_grades;
    const LabeledDataset train_l = to_labeled(data.train, k, opts.eval.input_size);
    const LabeledDataset test_l = to_labeled(data.test, k, opts.eval.input_size);
    const ImageProvider frame = working_frame_provider(data.train);
    const ImageProvider whole = whole_image_provider(data.train);
    const std::vector<PatchSpec> wpatches = whole_image_patches(data.train);

    CompareReport report;
    for (const std::uint64_t seed : opts.seeds) {
        const std::vector<PatchSpec> lpatches = lesion_patches(data.train, opts.threshold, seed);

        // matched step budgets: the whole-image route has fewer source
        // "patches" per epoch, so its epoch count is scaled to give both
        // contrastive methods the same number of SGD steps
        const std::int64_t lsteps_pe =
            static_cast<std::int64_t>(lpatches.size()) / opts.train.batch_size;
        const std::int64_t wsteps_pe =
            static_cast<std::int64_t>(wpatches.size()) / opts.train.batch_size;
        TrainConfig wtrain = opts.train;
        if (lsteps_pe > 0 && wsteps_pe > 0)
            wtrain.epochs = static_cast<int>(std::max<std::int64_t>(
                1, (opts.train.epochs * lsteps_pe + wsteps_pe / 2) / wsteps_pe));

        std::vector<std::pair<std::string, Checkpoint>> methods;
        methods.emplace_back(kMethodLesion, run_pretrain(opts.train, seed, lpatches, frame));
        methods.emplace_back(kMethodWholeImage, run_pretrain(wtrain, seed, wpatches, whole));
        methods.emplace_back(
            kMethodRandom,
            Checkpoint{1, opts.train.arch, init_params(opts.train.arch, seed), seed, 0});

        KappaGrid grid;
        for (const auto& [name, ckpt] : methods)
            for (const std::string protocol : {std::string("linear"), std::string("transfer")}) {
                const auto& fractions =
                    protocol == "linear" ? opts.linear_fractions : opts.transfer_fractions;
                for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
                    const LabeledDataset sub =
                        sample_partial(train_l, fractions[fi], derive_seed(seed, 0xF8AC, fi));
                    EvalConfig ec = opts.eval;
                    ec.seed = seed;
                    const EvalReport r = protocol == "linear"
                                             ? linear_eval(ckpt, sub, test_l, ec)
                                             : transfer_eval(ckpt, sub, test_l, ec);
                    grid[name][protocol][fractions[fi]] = r.kappa;
                }
            }
        report.per_seed.push_back(std::move(grid));
    }

    for (const auto& [method, protos] : report.per_seed.front())
        for (const auto& [protocol, cells] : protos)
            for (const auto& [fraction, unused] : cells) {
                (void)unused;
                std::vector<double> vals;
                for (const auto& g : report.per_seed)
                    vals.push_back(g.at(method).at(protocol).at(fraction));
                report.median[method][protocol][fraction] = median_of(std::move(vals));
            }
    return report;
}

std::vector<AblateRow> run_ablate(const AblateOptions& opts) {
    const ExperimentData data =
        make_experiment_data(opts.synth, opts.train_count, opts.test_count, opts.synth.seed);
    const int k = opts.synth.num_grades;
    const LabeledDataset train_full = to_labeled(data.train, k, opts.eval.input_size);
    const LabeledDataset test_l = to_labeled(data.test, k, opts.eval.input_size);
    const LabeledDataset train_l =
        sample_partial(train_full, opts.fraction, derive_seed(opts.seed, 0xF8AC, 0));
    const std::vector<PatchSpec> patches = lesion_patches(data.train, opts.threshold, opts.seed);
    const ImageProvider frame = working_frame_provider(data.train);

    // each operator alone, each left out, then all four
    const std::vector<std::array<bool, 4>> combos = {
        {true, false, false, false},  {false, true, false, false}, {false, false, true, false},
        {false, false, false, true},  {false, true, true, true},   {true, false, true, true},
        {true, true, false, true},    {true, true, true, false},   {true, true, true, true}};

    std::vector<AblateRow> rows;
    for (const auto& c : combos) {
        TrainConfig tc = opts.train;
        tc.augment.crop = c[0];
        tc.augment.rotation = c[1];
        tc.augment.color_distortion = c[2];
        tc.augment.gray_scaling = c[3];
        const Checkpoint ckpt = run_pretrain(tc, opts.seed, patches, frame);
        EvalConfig ec = opts.eval;
        ec.seed = opts.seed;
        const EvalReport r = linear_eval(ckpt, train_l, test_l, ec);
        rows.push_back(AblateRow{c[0], c[1], c[2], c[3], r.kappa});
    }
    return rows;
}

}  // namespace lcl
