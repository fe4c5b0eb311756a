#include <doctest.h>

#include <stdexcept>
#include <cmath>
#include <numbers>

#include "lcl/contrastive.hpp"
#include "lcl/ops.hpp"
#include "oracles.hpp"

using namespace lcl;

namespace {

EmbeddingBatch random_batch(int n_pairs, int dim, double tau, Rng& rng) {
    EmbeddingBatch b;
    b.z = Tensor({2 * n_pairs, dim});
    for (auto& v : b.z.data) v = rng.uniform(-1.0, 1.0);
    b.temperature = tau;
    for (int k = 0; k < n_pairs; ++k) {
        b.partner.push_back(2 * k + 1);
        b.partner.push_back(2 * k);
    }
    return b;
}

std::vector<std::vector<double>> rows_of(const EmbeddingBatch& b) {
    std::vector<std::vector<double>> rows(b.rows(), std::vector<double>(b.dim()));
    for (int i = 0; i < b.rows(); ++i)
        for (int j = 0; j < b.dim(); ++j)
            rows[i][j] = b.z[static_cast<std::int64_t>(i) * b.dim() + j];
    return rows;
}

}  // namespace

TEST_SUITE_BEGIN("contrastive");

TEST_CASE("cosine similarity basics") {
    CHECK(cosine_sim(Tensor({2}, {2.0, 1.0}), Tensor({2}, {2.0, 1.0})) == doctest::Approx(1.0));
    CHECK(cosine_sim(Tensor({2}, {1.0, 0.0}), Tensor({2}, {0.0, 5.0})) == doctest::Approx(0.0));
    CHECK(cosine_sim(Tensor({2}, {1.0, 1.0}), Tensor({2}, {1.0, 0.0})) ==
          doctest::Approx(1.0 / std::numbers::sqrt2));
    CHECK_THROWS_AS(cosine_sim(Tensor::zeros({2}), Tensor({2}, {1.0, 0.0})),
                    std::invalid_argument);
}

TEST_CASE("N=1 loss is exactly zero for any embeddings and temperature") {
    Rng rng(1);
    for (double tau : {0.07, 0.5, 3.0}) {
        EmbeddingBatch b = random_batch(1, 5, tau, rng);
        const LossReport r = ntxent_loss(b);
        CHECK(r.total == doctest::Approx(0.0).epsilon(1e-15));
    }
}

TEST_CASE("all-identical rows give 2N log(2N-1)") {
    for (int n_pairs : {2, 4}) {
        EmbeddingBatch b;
        const int n = 2 * n_pairs;
        b.z = Tensor({n, 3});
        for (int i = 0; i < n; ++i) {
            b.z[static_cast<std::int64_t>(i) * 3 + 0] = 0.3;
            b.z[static_cast<std::int64_t>(i) * 3 + 1] = -0.4;
            b.z[static_cast<std::int64_t>(i) * 3 + 2] = 0.9;
        }
        b.temperature = 0.07;
        for (int k = 0; k < n_pairs; ++k) {
            b.partner.push_back(2 * k + 1);
            b.partner.push_back(2 * k);
        }
        const LossReport r = ntxent_loss(b);
        CHECK(r.total == doctest::Approx(n * std::log(n - 1.0)).epsilon(1e-12));
        if (n_pairs == 2) CHECK(r.total == doctest::Approx(4.0 * std::log(3.0)).epsilon(1e-12));
    }
}

TEST_CASE("loss matches the brute-force reference") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        EmbeddingBatch b = random_batch(4, 8, 0.07, rng);
        const LossReport r = ntxent_loss(b);
        const double want = oracle::ntxent_reference(rows_of(b), b.partner, 0.07);
        CHECK(std::abs(r.total - want) / std::abs(want) < 1e-9);
        CHECK(r.mean == doctest::Approx(r.total / 8.0));
    }
}

TEST_CASE("loss error paths") {
    Rng rng(3);
    EmbeddingBatch b = random_batch(2, 4, 0.07, rng);
    b.temperature = 0.0;
    CHECK_THROWS_AS(ntxent_loss(b), std::invalid_argument);
    b.temperature = 0.07;
    for (int j = 0; j < 4; ++j) b.z[j] = 0.0;  // zero row
    CHECK_THROWS_AS(ntxent_loss(b), std::invalid_argument);
}

TEST_CASE("loss is strictly positive once negatives exist") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        EmbeddingBatch b = random_batch(static_cast<int>(rng.uniform_int(2, 6)), 6, 0.5, rng);
        CHECK(ntxent_loss(b).total > 0.0);
    }
}

TEST_CASE("invariance under a common orthogonal transform") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        EmbeddingBatch b = random_batch(3, 2, 0.07, rng);
        const double base = ntxent_loss(b).total;
        const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
        EmbeddingBatch rot = b;
        for (int i = 0; i < b.rows(); ++i) {
            const double x = b.z[static_cast<std::int64_t>(i) * 2];
            const double y = b.z[static_cast<std::int64_t>(i) * 2 + 1];
            rot.z[static_cast<std::int64_t>(i) * 2] = std::cos(th) * x - std::sin(th) * y;
            rot.z[static_cast<std::int64_t>(i) * 2 + 1] = std::sin(th) * x + std::cos(th) * y;
        }
        CHECK(std::abs(ntxent_loss(rot).total - base) < 1e-9);
    }
}

TEST_CASE("invariance under per-row positive rescaling") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        EmbeddingBatch b = random_batch(3, 5, 0.07, rng);
        const double base = ntxent_loss(b).total;
        EmbeddingBatch scaled = b;
        for (int i = 0; i < b.rows(); ++i) {
            const double s = rng.uniform(0.1, 10.0);
            for (int j = 0; j < 5; ++j) scaled.z[static_cast<std::int64_t>(i) * 5 + j] *= s;
        }
        CHECK(std::abs(ntxent_loss(scaled).total - base) < 1e-9);
    }
}

TEST_CASE("invariance under batch permutation") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        EmbeddingBatch b = random_batch(4, 4, 0.07, rng);
        const double base = ntxent_loss(b).total;

        std::vector<int> perm(b.rows());
        for (int i = 0; i < b.rows(); ++i) perm[i] = i;
        rng.shuffle(perm);
        EmbeddingBatch p = b;
        std::vector<int> inverse(b.rows());
        for (int i = 0; i < b.rows(); ++i) inverse[perm[i]] = i;
        for (int i = 0; i < b.rows(); ++i) {
            for (int j = 0; j < 4; ++j)
                p.z[static_cast<std::int64_t>(inverse[i]) * 4 + j] =
                    b.z[static_cast<std::int64_t>(i) * 4 + j];
            p.partner[inverse[i]] = inverse[b.partner[i]];
        }
        CHECK(std::abs(ntxent_loss(p).total - base) < 1e-12);
    }
}

TEST_CASE("raising the positive similarity never increases a row's term") {
    // synthetic logit configuration: keep all other similarities fixed
    auto term = [](double pos_sim, const std::vector<double>& neg_sims, double tau) {
        double denom = std::exp(pos_sim / tau);
        for (double s : neg_sims) denom += std::exp(s / tau);
        return -std::log(std::exp(pos_sim / tau) / denom);
    };
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> negs;
        for (int i = 0; i < 6; ++i) negs.push_back(rng.uniform(-1.0, 1.0));
        const double a = rng.uniform(-1.0, 1.0);
        const double b = rng.uniform(a, 1.0);
        CHECK(term(b, negs, 0.07) <= term(a, negs, 0.07) + 1e-12);
    }
}

TEST_CASE("analytic gradient of the loss matches finite differences") {
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        EmbeddingBatch b = random_batch(3, 4, 0.2, rng);
        Tensor gz;
        ntxent_loss(b, &gz);
        const Tensor fd = finite_diff_grad(
            [&](const Tensor& probe) {
                EmbeddingBatch p = b;
                p.z = probe;
                return ntxent_loss(p).total;
            },
            b.z, 1e-5);
        CHECK(max_rel_error(gz, fd, 1e-4) < 1e-4);
    }
}

TEST_CASE("contrastive accuracy on constructed batches") {
    // duplicated pairs, mutually orthogonal -> accuracy 1
    EmbeddingBatch good;
    good.z = Tensor({4, 2}, {1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0});
    good.partner = {1, 0, 3, 2};
    good.temperature = 0.07;
    CHECK(contrastive_accuracy(good) == doctest::Approx(1.0));

    // each row closest to a non-partner -> accuracy 0
    EmbeddingBatch bad;
    bad.z = Tensor({4, 2}, {1.0, 0.0, 0.0, 1.0, 1.0, 0.1, 0.1, 1.0});
    bad.partner = {1, 0, 3, 2};
    bad.temperature = 0.07;
    CHECK(contrastive_accuracy(bad) == doctest::Approx(0.0));
}

TEST_CASE("random high-dimensional batches score near chance") {
    Rng rng(10);
    const int n_pairs = 8;
    double acc_sum = 0.0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        EmbeddingBatch b = random_batch(n_pairs, 64, 0.07, rng);
        acc_sum += contrastive_accuracy(b);
    }
    const double chance = 1.0 / (2.0 * n_pairs - 1.0);
    CHECK(acc_sum / trials == doctest::Approx(chance).epsilon(0.5));
}

TEST_CASE("view batch pairing is a fixed-point-free involution") {
    ViewBatch b;
    for (int k = 0; k < 3; ++k)
        for (int v = 0; v < 2; ++v) {
            b.views.push_back(Tensor::zeros({3, 2, 2}));
            b.partner.push_back(2 * k + (1 - v));
            b.patch_ids.push_back("p" + std::to_string(k));
        }
    CHECK_NOTHROW(b.check_pairing());
    b.partner[0] = 0;
    CHECK_THROWS_AS(b.check_pairing(), std::invalid_argument);
}

TEST_SUITE_END();
