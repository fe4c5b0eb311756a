#include "lcl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "lcl/imageops.hpp"
#include "lcl/ops.hpp"
#include "lcl/rng.hpp"
#include "lcl/tape.hpp"
#include "lcl/train.hpp"

namespace lcl {

void LabeledDataset::validate() const {
    if (samples.empty()) throw std::invalid_argument("labeled dataset: empty");
    if (num_classes < 2) throw std::invalid_argument("labeled dataset: need >= 2 classes");
    for (const auto& s : samples)
        if (s.grade < 0 || s.grade >= num_classes)
            throw std::invalid_argument("labeled dataset: grade out of range");
}

LabeledDataset load_labeled_csv(const std::string& csv_path, int num_classes, int input_size) {
    std::ifstream f(csv_path);
    if (!f) throw std::runtime_error("cannot open labeled manifest: " + csv_path);
    LabeledDataset ds;
    ds.num_classes = num_classes;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos)
            throw std::runtime_error("malformed labeled manifest line: " + line);
        LabeledSample s;
        const std::string path = line.substr(0, comma);
        s.grade = std::stoi(line.substr(comma + 1));
        ImageF img = read_image(path);
        if (img.height != input_size || img.width != input_size)
            img = resize_bilinear(img, input_size, input_size);
        s.image = img.to_chw();
        ds.samples.push_back(std::move(s));
    }
    ds.validate();
    return ds;
}

void write_labeled_csv(const std::string& csv_path,
                       const std::vector<std::pair<std::string, int>>& rows) {
    std::ofstream f(csv_path);
    if (!f) throw std::runtime_error("cannot open for writing: " + csv_path);
    for (const auto& [path, grade] : rows) f << path << ',' << grade << '\n';
}

LabeledDataset sample_partial(const LabeledDataset& ds, double fraction, std::uint64_t seed) {
    const auto n = static_cast<std::int64_t>(ds.size());
    const auto take = static_cast<std::int64_t>(std::lround(fraction * static_cast<double>(n)));
    if (take < 1) throw std::invalid_argument("sample_partial: fraction yields empty subset");

    // stratified: keep the grade mix representative even at tiny fractions
    std::vector<std::vector<int>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i)
        by_class[ds.samples[i].grade].push_back(static_cast<int>(i));
    Rng rng(seed);
    for (auto& idx : by_class) rng.shuffle(idx);

    // largest-remainder allocation of `take` slots across classes
    std::vector<std::int64_t> alloc(ds.num_classes, 0);
    std::vector<std::pair<double, int>> rem;
    std::int64_t used = 0;
    for (int k = 0; k < ds.num_classes; ++k) {
        const double exact = static_cast<double>(take) *
                             static_cast<double>(by_class[k].size()) / static_cast<double>(n);
        alloc[k] = std::min<std::int64_t>(static_cast<std::int64_t>(exact),
                                          static_cast<std::int64_t>(by_class[k].size()));
        used += alloc[k];
        rem.emplace_back(exact - static_cast<double>(alloc[k]), k);
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t r = 0; used < take && r < rem.size(); ++r) {
        const int k = rem[r].second;
        if (alloc[k] < static_cast<std::int64_t>(by_class[k].size())) {
            ++alloc[k];
            ++used;
        }
    }
    // if some classes ran out of samples, fill from the others
    for (int k = 0; used < take && k < ds.num_classes; ++k)
        while (used < take && alloc[k] < static_cast<std::int64_t>(by_class[k].size())) {
            ++alloc[k];
            ++used;
        }

    LabeledDataset out;
    out.num_classes = ds.num_classes;
    for (int k = 0; k < ds.num_classes; ++k)
        for (std::int64_t i = 0; i < alloc[k]; ++i)
            out.samples.push_back(ds.samples[by_class[k][i]]);
    return out;
}

double quadratic_weighted_kappa(const std::vector<int>& pred, const std::vector<int>& truth,
                                int num_classes) {
    if (pred.size() != truth.size())
        throw std::invalid_argument("quadratic_weighted_kappa: length mismatch");
    if (pred.empty()) throw std::invalid_argument("quadratic_weighted_kappa: empty input");
    const int k = num_classes;
    if (k < 2) throw std::invalid_argument("quadratic_weighted_kappa: need >= 2 classes");
    const double n = static_cast<double>(pred.size());

    std::vector<double> conf(static_cast<std::size_t>(k) * k, 0.0);
    std::vector<double> hist_p(k, 0.0), hist_t(k, 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || pred[i] >= k || truth[i] < 0 || truth[i] >= k)
            throw std::invalid_argument("quadratic_weighted_kappa: grade out of range");
        conf[static_cast<std::size_t>(truth[i]) * k + pred[i]] += 1.0 / n;
        hist_p[pred[i]] += 1.0 / n;
        hist_t[truth[i]] += 1.0 / n;
    }

    // (i,j) and (j,i) are paired so swapping pred/truth transposes every term
    // in place: the statistic is symmetric in exact floating-point arithmetic
    const double wnorm = static_cast<double>(k - 1) * (k - 1);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j) {
            const double w = static_cast<double>(i - j) * (i - j) / wnorm;
            num += w * (conf[static_cast<std::size_t>(i) * k + j] +
                        conf[static_cast<std::size_t>(j) * k + i]);
            den += w * (hist_t[i] * hist_p[j] + hist_t[j] * hist_p[i]);
        }
    if (den == 0.0) return 1.0;  // both vectors constant and equal
    return 1.0 - num / den;
}

std::vector<Tensor> extract_features(const ParamSet& params, const ArchDescriptor& desc,
                                     const LabeledDataset& ds) {
    std::vector<Tensor> feats;
    feats.reserve(ds.size());
    for (const auto& s : ds.samples) feats.push_back(forward_features(params, desc, s.image));
    return feats;
}

namespace {

int argmax_lowest(const Tensor& v) {
    int best = 0;
    for (std::int64_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = static_cast<int>(i);
    return best;
}

// softmax cross-entropy value and d/dlogits for one sample
double softmax_ce_grad(const Tensor& logits, int label, Tensor& grad) {
    double m = logits[0];
    for (std::int64_t i = 1; i < logits.size(); ++i) m = std::max(m, logits[i]);
    double denom = 0.0;
    for (std::int64_t i = 0; i < logits.size(); ++i) denom += std::exp(logits[i] - m);
    grad = Tensor(logits.shape);
    for (std::int64_t i = 0; i < logits.size(); ++i)
        grad[i] = std::exp(logits[i] - m) / denom - (i == label ? 1.0 : 0.0);
    return std::log(denom) + m - logits[label];
}

EvalReport score(const std::vector<int>& pred, const LabeledDataset& test,
                 const std::string& protocol) {
    std::vector<int> truth;
    truth.reserve(test.size());
    for (const auto& s : test.samples) truth.push_back(s.grade);
    EvalReport r;
    r.protocol = protocol;
    r.kappa = quadratic_weighted_kappa(pred, truth, test.num_classes);
    int correct = 0;
    r.confusion.assign(test.num_classes, std::vector<int>(test.num_classes, 0));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        r.confusion[truth[i]][pred[i]] += 1;
        if (pred[i] == truth[i]) ++correct;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
    r.input_size = test.samples.front().image.shape[1];
    return r;
}

// Full-batch softmax probe over cached features. Zero-init head.
void train_probe(const std::vector<Tensor>& feats, const std::vector<int>& labels,
                 int num_classes, const EvalConfig& cfg, Tensor& W, Tensor& b) {
    const int d = static_cast<int>(feats.front().size());
    W = Tensor::zeros({num_classes, d});
    b = Tensor::zeros({num_classes});
    const auto n = static_cast<double>(feats.size());
    for (int epoch = 0; epoch < cfg.probe_epochs; ++epoch) {
        Tensor gW = Tensor::zeros({num_classes, d});
        Tensor gb = Tensor::zeros({num_classes});
        for (std::size_t i = 0; i < feats.size(); ++i) {
            const Tensor logits = affine(feats[i], W, b);
            Tensor glog;
            softmax_ce_grad(logits, labels[i], glog);
            for (int c = 0; c < num_classes; ++c) {
                gb[c] += glog[c] / n;
                for (int j = 0; j < d; ++j)
                    gW[static_cast<std::int64_t>(c) * d + j] += glog[c] * feats[i][j] / n;
            }
        }
        const double lr = cosine_lr(epoch, cfg.probe_epochs, cfg.probe_lr);
        for (std::int64_t i = 0; i < W.size(); ++i) W[i] -= lr * gW[i];
        for (std::int64_t i = 0; i < b.size(); ++i) b[i] -= lr * gb[i];
    }
}

}  // namespace

EvalReport linear_eval(const Checkpoint& ckpt, const LabeledDataset& train,
                       const LabeledDataset& test, const EvalConfig& cfg) {
    train.validate();
    test.validate();
    if (train.num_classes != test.num_classes)
        throw std::invalid_argument("linear_eval: class-count mismatch");
    const ParamSet encoder = ckpt.params.without_head();
    auto train_feats = extract_features(encoder, ckpt.desc, train);
    auto test_feats = extract_features(encoder, ckpt.desc, test);

    // per-dimension standardization fit on the training features: puts all
    // feature channels on one scale so a single probe lr behaves sensibly
    {
        const int d = static_cast<int>(train_feats.front().size());
        Tensor mean = Tensor::zeros({d}), sd = Tensor::zeros({d});
        for (const auto& f : train_feats)
            for (int j = 0; j < d; ++j) mean[j] += f[j];
        for (int j = 0; j < d; ++j) mean[j] /= static_cast<double>(train_feats.size());
        for (const auto& f : train_feats)
            for (int j = 0; j < d; ++j) sd[j] += (f[j] - mean[j]) * (f[j] - mean[j]);
        for (int j = 0; j < d; ++j)
            sd[j] = std::max(std::sqrt(sd[j] / static_cast<double>(train_feats.size())), 1e-8);
        for (auto* feats : {&train_feats, &test_feats})
            for (auto& f : *feats)
                for (int j = 0; j < d; ++j) f[j] = (f[j] - mean[j]) / sd[j];
    }
    std::vector<int> labels;
    for (const auto& s : train.samples) labels.push_back(s.grade);

    Tensor W, b;
    train_probe(train_feats, labels, train.num_classes, cfg, W, b);

    std::vector<int> pred;
    pred.reserve(test.size());
    for (const auto& f : test_feats) pred.push_back(argmax_lowest(affine(f, W, b)));
    EvalReport r = score(pred, test, "linear");
    return r;
}

EvalReport transfer_eval(const Checkpoint& ckpt, const LabeledDataset& train,
                         const LabeledDataset& test, const EvalConfig& cfg) {
    train.validate();
    test.validate();
    const int k = train.num_classes;
    ParamSet params = ckpt.params.without_head();
    const int d = ckpt.desc.feature_dim();
    params.tensors.emplace("cls.w", Tensor::zeros({k, d}));
    params.tensors.emplace("cls.b", Tensor::zeros({k}));

    const auto n = static_cast<int>(train.size());
    const int batch = std::min(cfg.finetune_batch, n);
    const int steps_per_epoch = std::max(1, n / batch);
    const std::int64_t total_steps = static_cast<std::int64_t>(steps_per_epoch) * cfg.finetune_epochs;

    std::int64_t step = 0;
    for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
        std::vector<int> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        Rng rng(derive_seed(cfg.seed, 0xF17E, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);
        for (int s = 0; s < steps_per_epoch; ++s) {
            Tape tape;
            const TapedParams tp = put_params(tape, params);
            int wid = -1, bid = -1;
            for (std::size_t i = 0; i < tp.names.size(); ++i) {
                if (tp.names[i] == "cls.w") wid = tp.ids[i];
                if (tp.names[i] == "cls.b") bid = tp.ids[i];
            }
            std::vector<std::pair<int, Tensor>> seeds;
            for (int i = 0; i < batch; ++i) {
                const auto& sample = train.samples[order[s * batch + i]];
                const int view = tape.leaf(standardize_view(sample.image));
                const int h = forward_features(tape, tp, ckpt.desc, view);
                const int logits = tape.affine(h, wid, bid);
                Tensor glog;
                softmax_ce_grad(tape.value(logits), sample.grade, glog);
                for (auto& v : glog.data) v /= batch;
                seeds.emplace_back(logits, std::move(glog));
            }
            tape.backward_seeded(seeds);
            ParamSet grads;
            for (std::size_t i = 0; i < tp.names.size(); ++i)
                grads.tensors.emplace(tp.names[i], tape.grad(tp.ids[i]));
            sgd_step(params, grads, cosine_lr(step, total_steps, cfg.finetune_lr));
            ++step;
        }
    }

    std::vector<int> pred;
    pred.reserve(test.size());
    const Tensor& W = params.at("cls.w");
    const Tensor& b = params.at("cls.b");
    for (const auto& s : test.samples) {
        const Tensor h = forward_features(params, ckpt.desc, s.image);
        pred.push_back(argmax_lowest(affine(h, W, b)));
    }
    EvalReport r = score(pred, test, "transfer");
    return r;
}

void write_eval_report_json(const std::string& path, const EvalReport& report,
                            const std::string& config_echo, const std::string& checkpoint_hash) {
    nlohmann::json j{{"protocol", report.protocol},
                     {"fraction", report.fraction},
                     {"kappa", report.kappa},
                     {"accuracy", report.accuracy},
                     {"confusion", report.confusion},
                     {"input_size", report.input_size}};
    if (!config_echo.empty()) j["config"] = nlohmann::json::parse(config_echo);
    if (!checkpoint_hash.empty()) j["checkpoint_hash"] = checkpoint_hash;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open report for writing: " + path);
    f << j.dump(2) << '\n';
}

}  // namespace lcl
