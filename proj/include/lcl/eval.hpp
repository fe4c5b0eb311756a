#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lcl/image.hpp"
#include "lcl/model.hpp"

namespace lcl {

struct LabeledSample {
    Tensor image;  // [3,H,W]
    int grade = 0;
};

struct LabeledDataset {
    std::vector<LabeledSample> samples;
    int num_classes = 5;

    void validate() const;
    std::size_t size() const { return samples.size(); }
};

// CSV manifest of (path, grade); images resized to input_size x input_size.
LabeledDataset load_labeled_csv(const std::string& csv_path, int num_classes, int input_size);
void write_labeled_csv(const std::string& csv_path,
                       const std::vector<std::pair<std::string, int>>& rows);

// Uniform sample without replacement, size round(fraction * |ds|).
LabeledDataset sample_partial(const LabeledDataset& ds, double fraction, std::uint64_t seed);

double quadratic_weighted_kappa(const std::vector<int>& pred, const std::vector<int>& truth,
                                int num_classes);

struct EvalConfig {
    double probe_lr = 0.01;
    int probe_epochs = 100;
    double finetune_lr = 0.01;
    int finetune_epochs = 20;
    int finetune_batch = 16;
    int input_size = 128;  // grading input resolution
    std::uint64_t seed = 0;
};

struct EvalReport {
    std::string protocol;  // "linear" | "transfer"
    double fraction = 1.0;
    double kappa = 0.0;
    double accuracy = 0.0;
    std::vector<std::vector<int>> confusion;  // [true][pred] counts
    int input_size = 0;
};

void write_eval_report_json(const std::string& path, const EvalReport& report,
                            const std::string& config_echo = "",
                            const std::string& checkpoint_hash = "");

// Frozen encoder (projection head discarded), cached features, linear
// softmax probe trained full-batch with SGD + cosine decay.
EvalReport linear_eval(const Checkpoint& ckpt, const LabeledDataset& train,
                       const LabeledDataset& test, const EvalConfig& cfg);

// Encoder initialized from the checkpoint (head dropped) and fine-tuned
// jointly with the classifier.
EvalReport transfer_eval(const Checkpoint& ckpt, const LabeledDataset& train,
                         const LabeledDataset& test, const EvalConfig& cfg);

// Cached feature extraction used by both protocols.
std::vector<Tensor> extract_features(const ParamSet& params, const ArchDescriptor& desc,
                                     const LabeledDataset& ds);

}  // namespace lcl
