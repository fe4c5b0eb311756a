#include "lcl/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lcl {

void ViewBatch::check_pairing() const {
    if (partner.size() != views.size() || patch_ids.size() != views.size())
        throw std::invalid_argument("view batch: inconsistent lengths");
    for (std::size_t i = 0; i < partner.size(); ++i) {
        const int p = partner[i];
        if (p < 0 || p >= static_cast<int>(partner.size()) || p == static_cast<int>(i) ||
            partner[p] != static_cast<int>(i))
            throw std::invalid_argument("view batch: pairing is not a fixed-point-free involution");
    }
}

ViewBatch make_view_batch(const std::vector<PatchSpec>& patches, const ImageProvider& provider,
                          const AugmentConfig& cfg, std::uint64_t seed) {
    // fetch each distinct image once per batch
    ImageLookup local;
    for (const PatchSpec& p : patches)
        if (local.find(p.image_id) == local.end()) local.emplace(p.image_id, provider(p.image_id));
    return make_view_batch(patches, local, cfg, seed);
}

ViewBatch make_view_batch(const std::vector<PatchSpec>& patches, const ImageLookup& images,
                          const AugmentConfig& cfg, std::uint64_t seed) {
    if (patches.empty()) throw std::invalid_argument("make_view_batch: empty patch list");
    ViewBatch batch;
    for (std::size_t k = 0; k < patches.size(); ++k) {
        const PatchSpec& p = patches[k];
        auto it = images.find(p.image_id);
        if (it == images.end())
            throw std::runtime_error("make_view_batch: no image for id " + p.image_id);
        for (int view_idx = 0; view_idx < 2; ++view_idx) {
            Rng rng(derive_seed(seed, k, static_cast<std::uint64_t>(view_idx)));
            batch.views.push_back(make_view(it->second, p, cfg, rng).to_chw());
            batch.partner.push_back(static_cast<int>(2 * k + (1 - view_idx)));
            batch.patch_ids.push_back(p.image_id + "#" + std::to_string(k));
        }
    }
    batch.check_pairing();
    return batch;
}

double cosine_sim(const Tensor& u, const Tensor& v) {
    if (!u.same_shape(v)) throw std::invalid_argument("cosine_sim: shape mismatch");
    double uu = 0.0, vv = 0.0, uv = 0.0;
    for (std::int64_t i = 0; i < u.size(); ++i) {
        uu += u[i] * u[i];
        vv += v[i] * v[i];
        uv += u[i] * v[i];
    }
    if (uu == 0.0 || vv == 0.0)
        throw std::invalid_argument("cosine_sim: zero vector has no direction");
    return std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

LossReport ntxent_loss(const EmbeddingBatch& batch, Tensor* grad_z) {
    if (batch.temperature <= 0.0)
        throw std::invalid_argument("ntxent_loss: temperature must be positive");
    const int n = batch.rows();
    const int d = batch.dim();
    if (n < 2) throw std::invalid_argument("ntxent_loss: need at least 2 rows");
    if (static_cast<int>(batch.partner.size()) != n)
        throw std::invalid_argument("ntxent_loss: pairing length mismatch");
    const double tau = batch.temperature;

    // row norms and unit rows
    std::vector<double> norm(n);
    Tensor unit({n, d});
    for (int i = 0; i < n; ++i) {
        double nsq = 0.0;
        for (int j = 0; j < d; ++j) {
            const double v = batch.z[static_cast<std::int64_t>(i) * d + j];
            nsq += v * v;
        }
        if (nsq == 0.0) throw std::invalid_argument("ntxent_loss: zero embedding row " +
                                                    std::to_string(i));
        norm[i] = std::sqrt(nsq);
        for (int j = 0; j < d; ++j)
            unit[static_cast<std::int64_t>(i) * d + j] =
                batch.z[static_cast<std::int64_t>(i) * d + j] / norm[i];
    }

    Tensor sim({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < d; ++k)
                acc += unit[static_cast<std::int64_t>(i) * d + k] *
                       unit[static_cast<std::int64_t>(j) * d + k];
            sim[static_cast<std::int64_t>(i) * n + j] = acc;
        }

    // per-row stabilized softmax over logits s_ij / tau, j != i
    Tensor prob({n, n});
    LossReport report;
    for (int i = 0; i < n; ++i) {
        double m = -1.0 / 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i) m = std::max(m, sim[static_cast<std::int64_t>(i) * n + j] / tau);
        double denom = 0.0;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            denom += std::exp(sim[static_cast<std::int64_t>(i) * n + j] / tau - m);
        }
        for (int j = 0; j < n; ++j)
            prob[static_cast<std::int64_t>(i) * n + j] =
                (j == i) ? 0.0
                         : std::exp(sim[static_cast<std::int64_t>(i) * n + j] / tau - m) / denom;
        const int p = batch.partner[i];
        // L_i = logsumexp - s_ip / tau
        report.total += (std::log(denom) + m) - sim[static_cast<std::int64_t>(i) * n + p] / tau;
    }
    report.mean = report.total / n;
    report.accuracy = contrastive_accuracy(batch);

    if (grad_z) {
        *grad_z = Tensor::zeros({n, d});
        // a_ij = dL/ds_ij from row i's term; s is symmetric so z_i collects
        // (a_ij + a_ji) through ds_ij/dz_i = (u_j - s_ij u_i)/|z_i|
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                const double a_ij = (prob[static_cast<std::int64_t>(i) * n + j] -
                                     (batch.partner[i] == j ? 1.0 : 0.0)) / tau;
                const double a_ji = (prob[static_cast<std::int64_t>(j) * n + i] -
                                     (batch.partner[j] == i ? 1.0 : 0.0)) / tau;
                const double coeff = a_ij + a_ji;
                if (coeff == 0.0) continue;
                const double s_ij = sim[static_cast<std::int64_t>(i) * n + j];
                for (int k = 0; k < d; ++k) {
                    const double dir = (unit[static_cast<std::int64_t>(j) * d + k] -
                                        s_ij * unit[static_cast<std::int64_t>(i) * d + k]) / norm[i];
                    (*grad_z)[static_cast<std::int64_t>(i) * d + k] += coeff * dir;
                }
            }
        }
    }
    return report;
}

double contrastive_accuracy(const EmbeddingBatch& batch) {
    const int n = batch.rows();
    const int d = batch.dim();
    int correct = 0;
    for (int i = 0; i < n; ++i) {
        int best = -1;
        double best_sim = -2.0;
        Tensor zi({d});
        for (int k = 0; k < d; ++k) zi[k] = batch.z[static_cast<std::int64_t>(i) * d + k];
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            Tensor zj({d});
            for (int k = 0; k < d; ++k) zj[k] = batch.z[static_cast<std::int64_t>(j) * d + k];
            const double s = cosine_sim(zi, zj);
            if (s > best_sim) {  // ties break toward the lowest index
                best_sim = s;
                best = j;
            }
        }
        if (best == batch.partner[i]) ++correct;
    }
    return static_cast<double>(correct) / n;
}

}  // namespace lcl
