#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lcl/tape.hpp"
#include "lcl/tensor.hpp"

namespace lcl {

// Conv blocks (3x3, stride 1, pad 1, ReLU, 2x2 maxpool) followed by global
// average pooling into a d_h feature vector; the head is one affine map
// d_h -> d_z followed by ReLU.
struct ArchDescriptor {
    std::vector<int> conv_channels = {8, 16, 32};
    int embed_dim = 16;  // d_z

    int feature_dim() const { return conv_channels.back(); }  // d_h
    void validate() const;

    std::string to_string() const;                 // e.g. "conv:8,16,32;dz:16"
    static ArchDescriptor parse(const std::string& text);
};

// Named parameter tensors. Encoder tensors are "enc.*", head tensors "head.*".
struct ParamSet {
    std::map<std::string, Tensor> tensors;

    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    ParamSet without_head() const;
};

ParamSet init_params(const ArchDescriptor& desc, std::uint64_t seed);

// Ids of the parameter leaves on a tape, in ParamSet iteration order.
struct TapedParams {
    std::vector<std::string> names;
    std::vector<int> ids;
};
TapedParams put_params(Tape& tape, const ParamSet& params);

// Global per-view standardization applied at the front of f(.): one mean/sd
// over all channels and pixels, sd floored at 1e-6. Parameter-free and
// idempotent, so taped pipelines standardize before creating the input leaf.
Tensor standardize_view(const Tensor& view);

// f(.): view [3,128,128] -> feature vector h [d_h].
int forward_features(Tape& tape, const TapedParams& tp, const ArchDescriptor& desc, int view);
// g(.): h -> z = ReLU(W h + b), [d_z].
int forward_projection(Tape& tape, const TapedParams& tp, int h);

// Tape-free forwards for frozen-encoder evaluation.
Tensor forward_features(const ParamSet& params, const ArchDescriptor& desc, const Tensor& view);
Tensor forward_projection(const ParamSet& params, const Tensor& h);

struct Checkpoint {
    std::uint32_t version = 1;
    ArchDescriptor desc;
    ParamSet params;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
};

// Binary format: magic "LCLCKPT1", version u32, length-prefixed UTF-8
// descriptor text, then per-tensor records (name, rank, extents, float32 LE).
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path, bool drop_head = false);

// Round parameters to float32 precision (what a save/load round trip yields).
ParamSet round_to_f32(const ParamSet& params);

}  // namespace lcl
