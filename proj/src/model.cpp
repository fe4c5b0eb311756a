#include "lcl/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lcl/ops.hpp"
#include "lcl/rng.hpp"

namespace lcl {

void ArchDescriptor::validate() const {
    if (conv_channels.empty()) throw std::invalid_argument("descriptor: no conv blocks");
    for (int c : conv_channels)
        if (c < 1) throw std::invalid_argument("descriptor: channel count must be >= 1");
    if (embed_dim < 1) throw std::invalid_argument("descriptor: embed dim must be >= 1");
    // each block halves the spatial extent; input is 128x128
    if (conv_channels.size() > 7)
        throw std::invalid_argument("descriptor: too many pooling stages for a 128x128 input");
}

std::string ArchDescriptor::to_string() const {
    std::ostringstream os;
    os << "conv:";
    for (std::size_t i = 0; i < conv_channels.size(); ++i) {
        if (i) os << ',';
        os << conv_channels[i];
    }
    os << ";dz:" << embed_dim;
    return os.str();
}

ArchDescriptor ArchDescriptor::parse(const std::string& text) {
    ArchDescriptor d;
    d.conv_channels.clear();
    d.embed_dim = 0;
    std::istringstream ss(text);
    std::string field;
    while (std::getline(ss, field, ';')) {
        const auto colon = field.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("descriptor: malformed field '" + field + "'");
        const std::string key = field.substr(0, colon);
        const std::string val = field.substr(colon + 1);
        if (key == "conv") {
            std::istringstream cs(val);
            std::string tok;
            while (std::getline(cs, tok, ',')) d.conv_channels.push_back(std::stoi(tok));
        } else if (key == "dz") {
            d.embed_dim = std::stoi(val);
        }
        // unknown keys (e.g. checkpoint metadata) are ignored here
    }
    d.validate();
    return d;
}

Tensor& ParamSet::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
}

ParamSet ParamSet::without_head() const {
    ParamSet out;
    for (const auto& [name, t] : tensors)
        if (name.rfind("head.", 0) != 0) out.tensors.emplace(name, t);
    return out;
}

namespace {

Tensor xavier_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-a, a);
    return t;
}

}  // namespace

ParamSet init_params(const ArchDescriptor& desc, std::uint64_t seed) {
    desc.validate();
    ParamSet p;
    int in_ch = 3;
    std::uint64_t idx = 0;
    for (std::size_t i = 0; i < desc.conv_channels.size(); ++i) {
        const int out_ch = desc.conv_channels[i];
        Rng rng(derive_seed(seed, idx++));
        const std::string base = "enc.conv" + std::to_string(i);
        p.tensors.emplace(base + ".w",
                          xavier_uniform({out_ch, in_ch, 3, 3}, in_ch * 9, out_ch * 9, rng));
        p.tensors.emplace(base + ".b", Tensor::zeros({out_ch}));
        in_ch = out_ch;
    }
    const int dh = desc.feature_dim();
    Rng rng(derive_seed(seed, idx));
    p.tensors.emplace("head.w", xavier_uniform({desc.embed_dim, dh}, dh, desc.embed_dim, rng));
    p.tensors.emplace("head.b", Tensor::zeros({desc.embed_dim}));
    return p;
}

TapedParams put_params(Tape& tape, const ParamSet& params) {
    TapedParams tp;
    for (const auto& [name, t] : params.tensors) {
        tp.names.push_back(name);
        tp.ids.push_back(tape.leaf(t));
    }
    return tp;
}

namespace {

int taped_id(const TapedParams& tp, const std::string& name) {
    for (std::size_t i = 0; i < tp.names.size(); ++i)
        if (tp.names[i] == name) return tp.ids[i];
    throw std::out_of_range("no taped parameter named " + name);
}

}  // namespace

// Global per-view standardization (one mean/sd across all channels and
// pixels). Removes brightness/contrast variation while leaving channel
// ratios intact; no parameters, so nothing to differentiate.
Tensor standardize_view(const Tensor& view) {
    double mean = 0.0;
    for (double v : view.data) mean += v;
    mean /= static_cast<double>(view.size());
    double var = 0.0;
    for (double v : view.data) {
        const double d = v - mean;
        var += d * d;
    }
    const double sd = std::max(std::sqrt(var / static_cast<double>(view.size())), 1e-6);
    Tensor out = view;
    for (auto& v : out.data) v = (v - mean) / sd;
    return out;
}

int forward_features(Tape& tape, const TapedParams& tp, const ArchDescriptor& desc, int view) {
    int x = view;
    for (std::size_t i = 0; i < desc.conv_channels.size(); ++i) {
        const std::string base = "enc.conv" + std::to_string(i);
        x = tape.conv2d(x, taped_id(tp, base + ".w"), 1, 1);
        x = tape.bias_add(x, taped_id(tp, base + ".b"));
        x = tape.relu(x);
        x = tape.maxpool2(x);
    }
    return tape.global_avg_pool(x);
}

int forward_projection(Tape& tape, const TapedParams& tp, int h) {
    return tape.relu(tape.affine(h, taped_id(tp, "head.w"), taped_id(tp, "head.b")));
}

Tensor forward_features(const ParamSet& params, const ArchDescriptor& desc, const Tensor& view) {
    if (view.rank() != 3 || view.shape[0] != 3)
        throw std::invalid_argument("forward_features: expected [3,H,W], got " + view.shape_str());
    Tensor x = standardize_view(view);
    for (std::size_t i = 0; i < desc.conv_channels.size(); ++i) {
        const std::string base = "enc.conv" + std::to_string(i);
        x = conv2d(x, params.at(base + ".w"), 1, 1);
        const Tensor& b = params.at(base + ".b");
        const std::int64_t plane = static_cast<std::int64_t>(x.shape[1]) * x.shape[2];
        for (int c = 0; c < x.shape[0]; ++c)
            for (std::int64_t j = 0; j < plane; ++j) x[c * plane + j] += b[c];
        x = relu(x);
        x = maxpool2(x);
    }
    return global_avg_pool(x);
}

Tensor forward_projection(const ParamSet& params, const Tensor& h) {
    return relu(affine(h, params.at("head.w"), params.at("head.b")));
}

// ---- checkpoint I/O ----

namespace {

constexpr char kMagic[8] = {'L', 'C', 'L', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("checkpoint truncated while reading " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32_le(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

float get_f32_le(std::istream& is) {
    const std::uint32_t bits = get_u32(is, "tensor data");
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(kMagic, 8);
    put_u32(f, ckpt.version);
    const std::string desc = ckpt.desc.to_string() + ";seed:" + std::to_string(ckpt.seed) +
                             ";step:" + std::to_string(ckpt.step);
    put_u32(f, static_cast<std::uint32_t>(desc.size()));
    f.write(desc.data(), static_cast<std::streamsize>(desc.size()));
    for (const auto& [name, t] : ckpt.params.tensors) {
        put_u32(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(f, static_cast<std::uint32_t>(t.rank()));
        for (int e : t.shape) put_u32(f, static_cast<std::uint32_t>(e));
        for (double v : t.data) put_f32_le(f, static_cast<float>(v));
    }
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path, bool drop_head) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    if (!f.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file (bad magic): " + path);
    Checkpoint ckpt;
    ckpt.version = get_u32(f, "version");
    if (ckpt.version != 1)
        throw std::runtime_error("unsupported checkpoint version " +
                                 std::to_string(ckpt.version) + ": " + path);
    const std::uint32_t desc_len = get_u32(f, "descriptor length");
    std::string desc(desc_len, '\0');
    if (!f.read(desc.data(), desc_len))
        throw std::runtime_error("checkpoint truncated while reading descriptor: " + path);
    ckpt.desc = ArchDescriptor::parse(desc);
    // metadata rides in the descriptor text
    std::istringstream ss(desc);
    std::string field;
    while (std::getline(ss, field, ';')) {
        if (field.rfind("seed:", 0) == 0) ckpt.seed = std::stoull(field.substr(5));
        if (field.rfind("step:", 0) == 0) ckpt.step = std::stoull(field.substr(5));
    }
    while (f.peek() != std::istream::traits_type::eof()) {
        const std::uint32_t name_len = get_u32(f, "tensor name length");
        std::string name(name_len, '\0');
        if (!f.read(name.data(), name_len))
            throw std::runtime_error("checkpoint truncated while reading tensor name: " + path);
        const std::uint32_t rank = get_u32(f, "tensor rank");
        std::vector<int> shape(rank);
        for (auto& e : shape) e = static_cast<int>(get_u32(f, "tensor extent"));
        Tensor t(shape);
        for (auto& v : t.data) v = static_cast<double>(get_f32_le(f));
        if (drop_head && name.rfind("head.", 0) == 0) continue;
        ckpt.params.tensors.emplace(std::move(name), std::move(t));
    }
    return ckpt;
}

ParamSet round_to_f32(const ParamSet& params) {
    ParamSet out = params;
    for (auto& [name, t] : out.tensors)
        for (auto& v : t.data) v = static_cast<double>(static_cast<float>(v));
    return out;
}

}  // namespace lcl
