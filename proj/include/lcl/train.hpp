#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lcl/contrastive.hpp"
#include "lcl/model.hpp"

namespace lcl {

struct TrainConfig {
    int batch_size = 32;        // N patches per step (2N views)
    int epochs = 30;
    double initial_lr = 0.001;
    double temperature = 0.07;
    std::uint64_t seed = 0;
    int checkpoint_interval = 0;  // steps between periodic saves; 0 = final only
    std::string checkpoint_path;  // required when checkpoint_interval > 0 or for pretrain()
    AugmentConfig augment;
    ArchDescriptor arch;

    void validate() const;
};

struct TrainLogEntry {
    std::int64_t step = 0;
    double lr = 0.0;
    double total_loss = 0.0;
    double mean_loss = 0.0;
    double contrastive_acc = 0.0;
    double wall_ms = 0.0;
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
};

// CSV header: step,lr,total_loss,mean_loss,contrastive_acc,wall_ms
void write_train_log_csv(const std::string& path, const TrainLog& log);

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0);

void sgd_step(ParamSet& params, const ParamSet& grads, double lr);

struct PretrainResult {
    Checkpoint checkpoint;
    TrainLog log;
};

// Full contrastive pretraining loop: shuffle patches per epoch, drop the
// last incomplete batch, cosine lr over global steps.
PretrainResult pretrain(const TrainConfig& cfg, const std::vector<PatchSpec>& patches,
                        const ImageLookup& images);
PretrainResult pretrain(const TrainConfig& cfg, const std::vector<PatchSpec>& patches,
                        const ImageProvider& provider);

// One gradient step shared by pretrain() and the experiment harness:
// forward f,g over the views, mean NT-Xent loss, backward, SGD update.
LossReport contrastive_step(ParamSet& params, const ArchDescriptor& arch,
                            const ViewBatch& batch, double temperature, double lr);

}  // namespace lcl
