#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "lcl/contrastive.hpp"
#include "lcl/model.hpp"
#include "lcl/ops.hpp"
#include "lcl/rng.hpp"
#include "lcl/tape.hpp"
#include "oracles.hpp"

using namespace lcl;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_SUITE_BEGIN("numerics");

TEST_CASE("conv2d all-ones 3x3 sums to 9") {
    const Tensor in = Tensor::full({1, 3, 3}, 1.0);
    const Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
    const Tensor out = conv2d(in, k, 1, 0);
    CHECK(out.shape == std::vector<int>{1, 1, 1});
    CHECK(out[0] == doctest::Approx(9.0));
}

TEST_CASE("conv2d identity kernel reproduces input") {
    Rng rng(7);
    const Tensor in = random_tensor({2, 5, 6}, rng);
    Tensor k = Tensor::zeros({2, 2, 3, 3});
    k.at4(0, 0, 1, 1) = 1.0;
    k.at4(1, 1, 1, 1) = 1.0;
    const Tensor out = conv2d(in, k, 1, 1);
    REQUIRE(out.shape == in.shape);
    for (std::int64_t i = 0; i < in.size(); ++i) CHECK(out[i] == doctest::Approx(in[i]));
}

TEST_CASE("conv2d matches the six-nested-loop reference") {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor in = random_tensor({2, 5, 5}, rng);
        const Tensor k = random_tensor({3, 2, 3, 3}, rng);
        for (int pad : {0, 1}) {
            const Tensor got = conv2d(in, k, 1, pad);
            const Tensor want = oracle::conv2d_reference(in, k, 1, pad);
            CHECK(max_rel_error(got, want) < 1e-12);
        }
    }
}

TEST_CASE("conv2d rejects shape mismatches with a diagnostic") {
    const Tensor in = Tensor::zeros({2, 4, 4});
    const Tensor k = Tensor::zeros({1, 3, 3, 3});
    CHECK_THROWS_WITH_AS(conv2d(in, k, 1, 0), doctest::Contains("C_in"), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(in, Tensor::zeros({1, 2, 5, 5}), 1, 0), std::invalid_argument);
}

TEST_CASE("conv2d is linear in its input") {
    Rng rng(13);
    const Tensor k = random_tensor({2, 2, 3, 3}, rng);
    const Tensor x = random_tensor({2, 6, 6}, rng);
    const Tensor y = random_tensor({2, 6, 6}, rng);
    const double a = 0.7, b = -1.3;
    Tensor mix({2, 6, 6});
    for (std::int64_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
    const Tensor lhs = conv2d(mix, k, 1, 1);
    const Tensor cx = conv2d(x, k, 1, 1);
    const Tensor cy = conv2d(y, k, 1, 1);
    for (std::int64_t i = 0; i < lhs.size(); ++i)
        CHECK(std::abs(lhs[i] - (a * cx[i] + b * cy[i])) < 1e-10);
}

TEST_CASE("relu, l2_normalize, maxpool2 basics") {
    const Tensor r = relu(Tensor({3}, {-1.0, 0.0, 2.0}));
    CHECK(r.data == std::vector<double>{0.0, 0.0, 2.0});

    const Tensor n = l2_normalize(Tensor({2}, {3.0, 4.0}));
    CHECK(n[0] == doctest::Approx(0.6));
    CHECK(n[1] == doctest::Approx(0.8));
    CHECK_THROWS_AS(l2_normalize(Tensor::zeros({3})), std::invalid_argument);

    const Tensor m = maxpool2(Tensor({1, 2, 2}, {1.0, 2.0, 3.0, 4.0}));
    CHECK(m.shape == std::vector<int>{1, 1, 1});
    CHECK(m[0] == 4.0);
}

TEST_CASE("maxpool2 truncates odd trailing extents") {
    Rng rng(3);
    const Tensor in = random_tensor({1, 5, 7}, rng);
    const Tensor out = maxpool2(in);
    CHECK(out.shape == std::vector<int>{1, 2, 3});
}

TEST_CASE("finite differences: sum of squares and constants") {
    auto sum_sq = [](const Tensor& t) {
        double acc = 0.0;
        for (double v : t.data) acc += v * v;
        return acc;
    };
    const Tensor g = finite_diff_grad(sum_sq, Tensor({2}, {1.0, 2.0}), 1e-6);
    CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-6));

    const Tensor gc = finite_diff_grad([](const Tensor&) { return 3.0; },
                                       Tensor({4}, {1.0, 2.0, 3.0, 4.0}), 1e-6);
    for (double v : gc.data) CHECK(v == 0.0);
}

TEST_CASE("backward: sum gives ones, square sum gives 2x") {
    Tape tape;
    const int x = tape.leaf(Tensor({3}, {1.0, -2.0, 0.5}));
    tape.backward(tape.sum(x));
    for (double v : tape.grad(x).data) CHECK(v == 1.0);

    Tape tape2;
    const int y = tape2.leaf(Tensor({3}, {1.0, -2.0, 0.5}));
    tape2.backward(tape2.square_sum(y));
    CHECK(tape2.grad(y)[0] == doctest::Approx(2.0));
    CHECK(tape2.grad(y)[1] == doctest::Approx(-4.0));
    CHECK(tape2.grad(y)[2] == doctest::Approx(1.0));
}

TEST_CASE("backward rejects non-scalar loss") {
    Tape tape;
    const int x = tape.leaf(Tensor({3}, {1.0, 2.0, 3.0}));
    CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("backward accumulates through duplicated sub-expressions") {
    // loss = sum(x + x) => gradient 2 per element
    Tape tape;
    const int x = tape.leaf(Tensor({2}, {0.3, -0.7}));
    tape.backward(tape.sum(tape.add(x, x)));
    for (double v : tape.grad(x).data) CHECK(v == doctest::Approx(2.0));
}

TEST_CASE("per-primitive gradients match central finite differences") {
    Rng rng(21);
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int c = static_cast<int>(rng.uniform_int(1, 3));
        const int h = static_cast<int>(rng.uniform_int(4, 7));
        const int w = static_cast<int>(rng.uniform_int(4, 7));
        const Tensor x0 = random_tensor({c, h, w}, rng);
        const Tensor k0 = random_tensor({2, c, 3, 3}, rng);

        struct Probe {
            const char* name;
            std::function<double(const Tensor&)> f;
            std::function<Tensor(const Tensor&)> analytic;
        };
        // every primitive wrapped as scalar-valued via square_sum
        auto tape_grad = [&](const Tensor& x, auto build) {
            Tape tape;
            const int xn = tape.leaf(x);
            tape.backward(tape.square_sum(build(tape, xn)));
            return tape.grad(xn);
        };
        auto fd = [&](const Tensor& x, auto build) {
            return finite_diff_grad(
                [&](const Tensor& probe) {
                    Tape tape;
                    const int xn = tape.leaf(probe);
                    return tape.value(tape.square_sum(build(tape, xn)))[0];
                },
                x, 1e-5);
        };

        auto conv_build = [&](Tape& t, int xn) { return t.conv2d(xn, t.leaf(k0), 1, 1); };
        CHECK(max_rel_error(tape_grad(x0, conv_build), fd(x0, conv_build), 1e-4) < 1e-4);

        auto pool_build = [&](Tape& t, int xn) { return t.maxpool2(xn); };
        CHECK(max_rel_error(tape_grad(x0, pool_build), fd(x0, pool_build), 1e-4) < 1e-4);

        auto gap_build = [&](Tape& t, int xn) { return t.global_avg_pool(xn); };
        CHECK(max_rel_error(tape_grad(x0, gap_build), fd(x0, gap_build), 1e-4) < 1e-4);

        const Tensor v0 = random_tensor({5}, rng, 0.2, 1.0);
        const Tensor W0 = random_tensor({3, 5}, rng);
        const Tensor b0 = random_tensor({3}, rng);
        auto aff_build = [&](Tape& t, int xn) {
            return t.relu(t.affine(xn, t.leaf(W0), t.leaf(b0)));
        };
        CHECK(max_rel_error(tape_grad(v0, aff_build), fd(v0, aff_build), 1e-4) < 1e-4);

        auto norm_build = [&](Tape& t, int xn) {
            return t.affine(t.l2_normalize(xn), t.leaf(W0), t.leaf(b0));
        };
        CHECK(max_rel_error(tape_grad(v0, norm_build), fd(v0, norm_build), 1e-4) < 1e-4);
        ++checked;
    }
    CHECK(checked == 20);
}

TEST_CASE("full model + contrastive loss gradient matches finite differences") {
    // tiny descriptor, N=2 patches -> 4 views
    ArchDescriptor desc;
    desc.conv_channels = {4, 8};
    desc.embed_dim = 4;
    const ParamSet params = init_params(desc, 99);

    Rng rng(5);
    std::vector<Tensor> views;
    for (int i = 0; i < 4; ++i) views.push_back(random_tensor({3, 8, 8}, rng, 0.0, 1.0));
    const std::vector<int> partner = {1, 0, 3, 2};

    auto loss_of = [&](const ParamSet& p) {
        Tape tape;
        const TapedParams tp = put_params(tape, p);
        EmbeddingBatch emb;
        emb.z = Tensor({4, desc.embed_dim});
        emb.partner = partner;
        emb.temperature = 0.07;
        std::vector<int> zids;
        for (int i = 0; i < 4; ++i) {
            const int h = forward_features(tape, tp, desc, tape.leaf(standardize_view(views[i])));
            const int z = forward_projection(tape, tp, h);
            zids.push_back(z);
            for (int k = 0; k < desc.embed_dim; ++k)
                emb.z[static_cast<std::int64_t>(i) * desc.embed_dim + k] = tape.value(z)[k];
        }
        return std::tuple{std::move(tape), tp, zids, emb};
    };

    // analytic gradient
    auto [tape, tp, zids, emb] = loss_of(params);
    Tensor gz;
    ntxent_loss(emb, &gz);
    std::vector<std::pair<int, Tensor>> seeds;
    for (int i = 0; i < 4; ++i) {
        Tensor g({desc.embed_dim});
        for (int k = 0; k < desc.embed_dim; ++k)
            g[k] = gz[static_cast<std::int64_t>(i) * desc.embed_dim + k];
        seeds.emplace_back(zids[i], std::move(g));
    }
    tape.backward_seeded(seeds);

    for (const auto& [name, tensor] : params.tensors) {
        int id = -1;
        for (std::size_t i = 0; i < tp.names.size(); ++i)
            if (tp.names[i] == name) id = tp.ids[i];
        REQUIRE(id >= 0);
        const Tensor analytic = tape.grad(id);

        const Tensor fd = finite_diff_grad(
            [&](const Tensor& probe) {
                ParamSet p = params;
                p.at(name) = probe;
                auto [t2, tp2, z2, emb2] = loss_of(p);
                return ntxent_loss(emb2).total;
            },
            tensor, 1e-5);
        CHECK(max_rel_error(analytic, fd, 1e-5) < 1e-4);
    }
}

TEST_SUITE_END();
