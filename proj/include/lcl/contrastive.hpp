#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lcl/imageops.hpp"
#include "lcl/tensor.hpp"

namespace lcl {

// 2N augmented views; views 2k and 2k+1 come from patch k and are each
// other's positives.
struct ViewBatch {
    std::vector<Tensor> views;       // each [3,128,128]
    std::vector<int> partner;        // fixed-point-free involution
    std::vector<std::string> patch_ids;

    std::size_t size() const { return views.size(); }
    void check_pairing() const;
};

struct EmbeddingBatch {
    Tensor z;                 // [2N, d_z]
    std::vector<int> partner;
    double temperature = 0.07;

    int rows() const { return z.shape[0]; }
    int dim() const { return z.shape[1]; }
};

struct LossReport {
    double total = 0.0;  // the summed loss over all 2N rows
    double mean = 0.0;
    double accuracy = 0.0;  // fraction of rows whose nearest other row is their positive
};

using ImageLookup = std::map<std::string, ImageF>;

// On-demand image fetch, so callers need not hold every working-frame raster
// in memory at once.
using ImageProvider = std::function<ImageF(const std::string&)>;

ViewBatch make_view_batch(const std::vector<PatchSpec>& patches, const ImageLookup& images,
                          const AugmentConfig& cfg, std::uint64_t seed);
ViewBatch make_view_batch(const std::vector<PatchSpec>& patches, const ImageProvider& provider,
                          const AugmentConfig& cfg, std::uint64_t seed);

double cosine_sim(const Tensor& u, const Tensor& v);

// Summed loss over 2N rows; each row's denominator holds its positive plus
// all 2N-2 negatives. Log-sum-exp stabilized. Optionally returns dL/dZ
// (of the summed loss) in *grad_z.
LossReport ntxent_loss(const EmbeddingBatch& batch, Tensor* grad_z = nullptr);

double contrastive_accuracy(const EmbeddingBatch& batch);

}  // namespace lcl
