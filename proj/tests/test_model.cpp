#include <doctest.h>

#include <stdexcept>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "lcl/model.hpp"
#include "lcl/ops.hpp"
#include "lcl/rng.hpp"

using namespace lcl;

TEST_SUITE_BEGIN("model");

TEST_CASE("descriptor text round trip") {
    ArchDescriptor d;
    d.conv_channels = {4, 8, 16};
    d.embed_dim = 8;
    const ArchDescriptor back = ArchDescriptor::parse(d.to_string());
    CHECK(back.conv_channels == d.conv_channels);
    CHECK(back.embed_dim == d.embed_dim);
    CHECK_THROWS_AS(ArchDescriptor::parse("nonsense"), std::invalid_argument);
}

TEST_CASE("init_params is seed-deterministic with zero biases") {
    ArchDescriptor d;
    d.conv_channels = {4, 8};
    d.embed_dim = 4;
    const ParamSet a = init_params(d, 123);
    const ParamSet b = init_params(d, 123);
    const ParamSet c = init_params(d, 124);

    bool identical = true, differs = false;
    for (const auto& [name, t] : a.tensors) {
        if (t.data != b.at(name).data) identical = false;
        if (t.data != c.at(name).data) differs = true;
        if (name.ends_with(".b"))
            for (double v : t.data) CHECK(v == 0.0);
    }
    CHECK(identical);
    CHECK(differs);
}

TEST_CASE("init weight sample mean is near zero") {
    ArchDescriptor d;
    d.conv_channels = {32, 64};
    d.embed_dim = 64;
    const ParamSet p = init_params(d, 7);
    double sum = 0.0, sum_sq = 0.0;
    std::int64_t n = 0;
    for (const auto& [name, t] : p.tensors) {
        if (name.ends_with(".b")) continue;
        for (double v : t.data) {
            sum += v;
            sum_sq += v * v;
            ++n;
        }
    }
    REQUIRE(n > 10000);
    const double mean = sum / n;
    const double sd = std::sqrt(sum_sq / n - mean * mean);
    CHECK(std::abs(mean) < 3.0 * sd / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("zero image maps to the zero feature vector") {
    ArchDescriptor d;
    d.conv_channels = {4, 8};
    d.embed_dim = 4;
    const ParamSet p = init_params(d, 9);
    const Tensor h = forward_features(p, d, Tensor::zeros({3, 16, 16}));
    CHECK(h.shape == std::vector<int>{8});
    for (double v : h.data) CHECK(v == 0.0);
    const Tensor z = forward_projection(p, h);
    for (double v : z.data) CHECK(v == 0.0);
}

TEST_CASE("feature length matches the descriptor across a matrix of architectures") {
    Rng rng(10);
    for (const auto& channels : {std::vector<int>{2}, {4, 8}, {8, 16, 32}}) {
        ArchDescriptor d;
        d.conv_channels = channels;
        d.embed_dim = 4;
        const ParamSet p = init_params(d, 11);
        Tensor view({3, 32, 32});
        for (auto& v : view.data) v = rng.next_double();
        const Tensor h = forward_features(p, d, view);
        CHECK(h.shape == std::vector<int>{channels.back()});
        CHECK(h.all_finite());
        const Tensor z = forward_projection(p, h);
        CHECK(z.shape == std::vector<int>{4});
        for (double v : z.data) CHECK(v >= 0.0);
    }
}

TEST_CASE("single-block encoder is positively homogeneous in its weights") {
    ArchDescriptor d;
    d.conv_channels = {4};
    d.embed_dim = 2;
    ParamSet p = init_params(d, 13);
    Rng rng(14);
    Tensor view({3, 8, 8});
    for (auto& v : view.data) v = rng.next_double();

    const Tensor h1 = forward_features(p, d, view);
    for (auto& v : p.at("enc.conv0.w").data) v *= 2.0;
    const Tensor h2 = forward_features(p, d, view);
    for (std::int64_t i = 0; i < h1.size(); ++i)
        CHECK(h2[i] == doctest::Approx(2.0 * h1[i]).epsilon(1e-12));
}

TEST_CASE("projection matches a direct matrix-vector oracle") {
    ArchDescriptor d;
    d.conv_channels = {4};
    d.embed_dim = 3;
    ParamSet p = init_params(d, 15);
    Rng rng(16);
    Tensor h({4});
    for (auto& v : h.data) v = rng.uniform(-1.0, 1.0);
    const Tensor z = forward_projection(p, h);
    const Tensor& W = p.at("head.w");
    const Tensor& b = p.at("head.b");
    for (int i = 0; i < 3; ++i) {
        double acc = b[i];
        for (int j = 0; j < 4; ++j) acc += W[static_cast<std::int64_t>(i) * 4 + j] * h[j];
        CHECK(z[i] == doctest::Approx(std::max(acc, 0.0)).epsilon(1e-12));
    }
}

TEST_CASE("checkpoint round trip is bit-exact") {
    ArchDescriptor d;
    d.conv_channels = {4, 8};
    d.embed_dim = 4;
    Checkpoint ck;
    ck.desc = d;
    ck.params = round_to_f32(init_params(d, 17));
    ck.seed = 42;
    ck.step = 100;

    const auto dir = std::filesystem::temp_directory_path() / "lcl_model_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "model.ckpt").string();
    save_checkpoint(path, ck);
    const Checkpoint back = load_checkpoint(path);

    CHECK(back.seed == 42);
    CHECK(back.step == 100);
    CHECK(back.desc.to_string() == d.to_string());
    REQUIRE(back.params.tensors.size() == ck.params.tensors.size());
    for (const auto& [name, t] : ck.params.tensors)
        CHECK(back.params.at(name).data == t.data);

    // saving the loaded checkpoint reproduces the file byte-for-byte
    const std::string path2 = (dir / "model2.ckpt").string();
    save_checkpoint(path2, back);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt or truncated checkpoints are rejected") {
    const auto dir = std::filesystem::temp_directory_path() / "lcl_model_test2";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "bad.ckpt").string();

    {
        std::ofstream f(path, std::ios::binary);
        f << "NOTACKPT";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), std::runtime_error);

    ArchDescriptor d;
    d.conv_channels = {4};
    d.embed_dim = 2;
    Checkpoint ck;
    ck.desc = d;
    ck.params = init_params(d, 18);
    save_checkpoint(path, ck);
    // truncate
    std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"), std::runtime_error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("loading with head drop removes g tensors and keeps f intact") {
    ArchDescriptor d;
    d.conv_channels = {4, 8};
    d.embed_dim = 4;
    Checkpoint ck;
    ck.desc = d;
    ck.params = round_to_f32(init_params(d, 19));

    const auto dir = std::filesystem::temp_directory_path() / "lcl_model_test3";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "model.ckpt").string();
    save_checkpoint(path, ck);

    const Checkpoint enc_only = load_checkpoint(path, /*drop_head=*/true);
    CHECK_FALSE(enc_only.params.has("head.w"));
    CHECK_FALSE(enc_only.params.has("head.b"));
    for (const auto& [name, t] : ck.params.tensors) {
        if (name.rfind("head.", 0) == 0) continue;
        CHECK(enc_only.params.at(name).data == t.data);
    }
    std::filesystem::remove_all(dir);
}

TEST_SUITE_END();
