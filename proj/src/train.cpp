#include "lcl/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace lcl {

void TrainConfig::validate() const {
    if (batch_size < 2) throw std::invalid_argument("train config: batch size must be >= 2");
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (initial_lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
    if (temperature <= 0.0) throw std::invalid_argument("train config: temperature must be positive");
    augment.validate();
    arch.validate();
}

void write_train_log_csv(const std::string& path, const TrainLog& log) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open train log for writing: " + path);
    f << "step,lr,total_loss,mean_loss,contrastive_acc,wall_ms\n";
    for (const auto& e : log.entries)
        f << e.step << ',' << e.lr << ',' << e.total_loss << ',' << e.mean_loss << ','
          << e.contrastive_acc << ',' << e.wall_ms << '\n';
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0) {
    if (total_steps < 1) throw std::invalid_argument("cosine_lr: total_steps must be >= 1");
    if (step < 0 || step > total_steps) throw std::invalid_argument("cosine_lr: step out of range");
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                       static_cast<double>(total_steps)));
}

void sgd_step(ParamSet& params, const ParamSet& grads, double lr) {
    for (auto& [name, t] : params.tensors) {
        const Tensor& g = grads.at(name);
        if (!g.same_shape(t))
            throw std::invalid_argument("sgd_step: gradient shape mismatch for " + name);
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] -= lr * g[i];
    }
}

LossReport contrastive_step(ParamSet& params, const ArchDescriptor& arch,
                            const ViewBatch& batch, double temperature, double lr) {
    const int n = static_cast<int>(batch.size());
    const int d = arch.embed_dim;

    // pass 1: tape-free forward to collect the embedding matrix
    EmbeddingBatch emb;
    emb.z = Tensor({n, d});
    emb.partner = batch.partner;
    emb.temperature = temperature;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        const Tensor h = forward_features(params, arch, batch.views[i]);
        const Tensor z = forward_projection(params, h);
        for (int k = 0; k < d; ++k) emb.z[static_cast<std::int64_t>(i) * d + k] = z[k];
    }

    Tensor grad_z;
    const LossReport report = ntxent_loss(emb, &grad_z);
    if (!std::isfinite(report.total))
        throw std::runtime_error("contrastive_step: non-finite loss");

    // pass 2: per-view tape, seeded with that view's row of d(mean loss)/dZ.
    // Each view backpropagates independently; per-view gradients are summed
    // in view order afterwards, so the result is thread-count independent.
    std::vector<ParamSet> per_view(n);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        Tape tape;
        const TapedParams tp = put_params(tape, params);
        const int view = tape.leaf(standardize_view(batch.views[i]));
        const int h = forward_features(tape, tp, arch, view);
        const int z = forward_projection(tape, tp, h);
        Tensor g({d});
        for (int k = 0; k < d; ++k)
            g[k] = grad_z[static_cast<std::int64_t>(i) * d + k] / n;
        tape.backward_seeded({{z, std::move(g)}});
        for (std::size_t j = 0; j < tp.names.size(); ++j)
            per_view[i].tensors.emplace(tp.names[j], tape.grad(tp.ids[j]));
    }

    ParamSet grads;
    for (const auto& [name, t] : per_view[0].tensors) grads.tensors.emplace(name, t);
    for (int i = 1; i < n; ++i)
        for (auto& [name, t] : grads.tensors) {
            const Tensor& g = per_view[i].at(name);
            for (std::int64_t j = 0; j < t.size(); ++j) t[j] += g[j];
        }
    sgd_step(params, grads, lr);
    return report;
}

PretrainResult pretrain(const TrainConfig& cfg, const std::vector<PatchSpec>& patches,
                        const ImageLookup& images) {
    return pretrain(cfg, patches, ImageProvider([&images](const std::string& id) {
                        auto it = images.find(id);
                        if (it == images.end())
                            throw std::runtime_error("pretrain: no image for id " + id);
                        return it->second;
                    }));
}

PretrainResult pretrain(const TrainConfig& cfg, const std::vector<PatchSpec>& patches,
                        const ImageProvider& provider) {
    cfg.validate();
    const int n_patches = static_cast<int>(patches.size());
    if (n_patches < cfg.batch_size)
        throw std::invalid_argument("pretrain: fewer patches (" + std::to_string(n_patches) +
                                    ") than batch size (" + std::to_string(cfg.batch_size) + ")");
    const std::int64_t steps_per_epoch = n_patches / cfg.batch_size;
    const std::int64_t total_steps = steps_per_epoch * cfg.epochs;

    ParamSet params = init_params(cfg.arch, cfg.seed);
    TrainLog log;
    std::int64_t step = 0;
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order(patches.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        Rng shuffle_rng(derive_seed(cfg.seed, 0xEF0C, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        for (std::int64_t b = 0; b < steps_per_epoch; ++b) {
            std::vector<PatchSpec> sub;
            sub.reserve(cfg.batch_size);
            for (int i = 0; i < cfg.batch_size; ++i)
                sub.push_back(patches[order[b * cfg.batch_size + i]]);

            const ViewBatch batch = make_view_batch(
                sub, provider, cfg.augment, derive_seed(cfg.seed, 0xBA7C, static_cast<std::uint64_t>(step)));
            const double lr = cosine_lr(step, total_steps, cfg.initial_lr);
            const LossReport report = contrastive_step(params, cfg.arch, batch, cfg.temperature, lr);

            TrainLogEntry e;
            e.step = step;
            e.lr = lr;
            e.total_loss = report.total;
            e.mean_loss = report.mean;
            e.contrastive_acc = report.accuracy;
            e.wall_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0).count();
            log.entries.push_back(e);
            ++step;

            if (cfg.checkpoint_interval > 0 && !cfg.checkpoint_path.empty() &&
                step % cfg.checkpoint_interval == 0) {
                Checkpoint ck{1, cfg.arch, params, cfg.seed, static_cast<std::uint64_t>(step)};
                save_checkpoint(cfg.checkpoint_path, ck);
            }
        }
    }

    PretrainResult result;
    result.checkpoint = Checkpoint{1, cfg.arch, std::move(params), cfg.seed,
                                   static_cast<std::uint64_t>(step)};
    result.log = std::move(log);
    if (!cfg.checkpoint_path.empty())
        save_checkpoint(cfg.checkpoint_path, result.checkpoint);
    return result;
}

}  // namespace lcl
