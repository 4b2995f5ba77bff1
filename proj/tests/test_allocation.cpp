// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "kvlab/allocation.hpp"
#include "oracles.hpp"

using namespace kvlab;

namespace {

std::size_t sum(const std::vector<std::size_t>& v) {
    return std::accumulate(v.begin(), v.end(), std::size_t{0});
}

}  // namespace

TEST_CASE("uniform_layer_budgets remainder rule") {
    CHECK(uniform_layer_budgets(8, 4, 0) == std::vector<std::size_t>{2, 2, 2, 2});
    CHECK(uniform_layer_budgets(9, 4, 0) == std::vector<std::size_t>{3, 2, 2, 2});
    CHECK_THROWS_AS(uniform_layer_budgets(5, 3, 2), InfeasibleBudgetError);

    Rng rng(1);
    for (int iter = 0; iter < 50; ++iter) {
        const std::size_t layers = 1 + rng.index(8);
        const std::size_t total = layers + rng.index(200);
        CHECK(sum(uniform_layer_budgets(total, layers, 1)) == total);
    }
}

TEST_CASE("pyramid_layer_budgets formula, rounding, and degenerate cases") {
    // total=80, L=4, beta=2: real budgets [30, 23.33, 16.67, 10].
    CHECK(pyramid_layer_budgets(80, 4, 2.0, 0, 1000) == std::vector<std::size_t>{30, 23, 17, 10});
    // beta=1 degenerates to uniform.
    CHECK(pyramid_layer_budgets(40, 4, 1.0, 0, 1000) == std::vector<std::size_t>{10, 10, 10, 10});
    CHECK(pyramid_layer_budgets(77, 1, 3.0, 0, 1000) == std::vector<std::size_t>{77});
    CHECK_THROWS_AS(pyramid_layer_budgets(80, 4, 0.5, 0, 1000), ConfigError);

    Rng rng(2);
    for (int iter = 0; iter < 100; ++iter) {
        const std::size_t layers = 2 + rng.index(6);
        const std::size_t floor_each = 1 + rng.index(3);
        const std::size_t cap_each = floor_each + 20 + rng.index(30);
        const std::size_t total = layers * floor_each + rng.index(layers * (cap_each - floor_each));
        const double beta = 1.0 + rng.uniform(0.0, 4.0);
        const auto budgets = pyramid_layer_budgets(total, layers, beta, floor_each, cap_each);
        CHECK(sum(budgets) == total);
        for (std::size_t l = 0; l < layers; ++l) {
            CHECK(budgets[l] >= floor_each);
            CHECK(budgets[l] <= cap_each);
            if (l > 0 && budgets[l - 1] >= cap_each) {
                continue;  // cap clamping may flatten the head of the pyramid
            }
            if (l > 0) {
                CHECK(budgets[l - 1] >= budgets[l]);
            }
        }
    }
}

TEST_CASE("cake_spatial and cake_temporal closed forms") {
    // Uniform rows of length n have entropy ln n.
    const std::size_t n = 8;
    std::vector<RecentAttention> heads(2);
    for (auto& head : heads) {
        head.rows.assign(3, Vec(n, 1.0 / static_cast<double>(n)));
    }
    CHECK(cake_spatial(heads) == doctest::Approx(std::log(static_cast<double>(n))).epsilon(1e-12));
    // Rows constant in j mean zero shift.
    CHECK(cake_temporal(heads, n - 2) == 0.0);

    Rng rng(3);
    std::vector<RecentAttention> rnd(2);
    for (auto& head : rnd) {
        for (int j = 0; j < 3; ++j) {
            head.rows.push_back(oracle::random_distribution(rng, n));
        }
    }
    long double want_h = 0.0L;
    for (const auto& head : rnd) {
        for (const Vec& row : head.rows) {
            for (double a : row) {
                want_h -= a * std::log(a);
            }
        }
    }
    want_h /= 6.0L;  // 2 heads x 3 rows
    CHECK(cake_spatial(rnd) == doctest::Approx(static_cast<double>(want_h)).epsilon(1e-12));

    const std::size_t scored = n - 2;
    long double want_v = 0.0L;
    for (const auto& head : rnd) {
        for (std::size_t i = 0; i < scored; ++i) {
            Vec col;
            for (const Vec& row : head.rows) {
                col.push_back(row[i]);
            }
            want_v += oracle::variance_twopass(col);
        }
    }
    want_v /= 2.0L;
    CHECK(cake_temporal(rnd, scored) == doctest::Approx(static_cast<double>(want_v)).epsilon(1e-12));
}

TEST_CASE("cake_layer_budgets proportional split and limits") {
    // spatial [1,4] with 1/gamma1 = 0.5 gives P = [1,2]; 9 splits as [3,6].
    CHECK(cake_layer_budgets({1.0, 4.0}, {1.0, 1.0}, 2.0, 1.0, 9, 0, 100) == std::vector<std::size_t>{3, 6});
    // Exponents -> 0 flatten P to uniform.
    CHECK(cake_layer_budgets({1.0, 4.0}, {2.0, 8.0}, 1e9, 1e9, 10, 0, 100) == std::vector<std::size_t>{5, 5});
    CHECK_THROWS_AS(cake_layer_budgets({1.0}, {1.0}, 0.0, 1.0, 5, 0, 100), ConfigError);

    bool fallback = false;
    const auto zero = cake_layer_budgets({0.0, 0.0}, {0.0, 0.0}, 1.0, 1.0, 8, 0, 100, &fallback);
    CHECK(zero == std::vector<std::size_t>{4, 4});
    CHECK(fallback);

    Rng rng(4);
    for (int iter = 0; iter < 100; ++iter) {
        const std::size_t layers = 2 + rng.index(5);
        Vec sp = oracle::random_vec(rng, layers, 0.2, 4.0);
        Vec te = oracle::random_vec(rng, layers, 0.01, 1.0);
        const std::size_t total = layers * 2 + rng.index(100);
        const auto budgets = cake_layer_budgets(sp, te, 2.0, 3.0, total, 2, total);
        CHECK(sum(budgets) == total);
        for (std::size_t b : budgets) {
            CHECK(b >= 2);
        }
    }
}

TEST_CASE("lava_normalized_scores and entropy") {
    bool fallback = false;
    const Vec norm = lava_normalized_scores({{1.0, 1.0}, {2.0}}, &fallback);
    CHECK_FALSE(fallback);
    CHECK(norm == Vec{0.25, 0.25, 0.5});
    CHECK(lava_normalized_scores({{5.0}}) == Vec{1.0});
    CHECK_THROWS_AS(lava_normalized_scores({{-0.1, 1.0}}), DomainError);

    const Vec zero = lava_normalized_scores({{0.0, 0.0, 0.0, 0.0}}, &fallback);
    CHECK(fallback);
    CHECK(zero == Vec(4, 0.25));

    // Uniform over 4 entries with H=2, N=2: ln(4)/4.
    CHECK(lava_layer_entropy(Vec(4, 0.25), 2, 2) == doctest::Approx(std::log(4.0) / 4.0).epsilon(1e-12));
    CHECK(lava_layer_entropy({1.0, 0.0, 0.0}, 2, 2) == 0.0);

    Rng rng(5);
    const Vec p = oracle::random_distribution(rng, 16);
    long double want = 0.0L;
    for (double v : p) {
        want -= static_cast<long double>(v) * std::log(static_cast<long double>(v));
    }
    CHECK(std::fabs(lava_layer_entropy(p, 4, 4) - static_cast<double>(want / 16.0L)) <= 1e-12);

    // Uniform maximizes the entropy among distributions of the same support.
    const double uniform_e = lava_layer_entropy(Vec(16, 1.0 / 16.0), 4, 4);
    for (int iter = 0; iter < 100; ++iter) {
        CHECK(lava_layer_entropy(oracle::random_distribution(rng, 16), 4, 4) <= uniform_e + 1e-12);
    }
}

TEST_CASE("entropy_layer_budgets proportional split and scale invariance") {
    CHECK(entropy_layer_budgets({0.3, 0.1}, 8, 0, 100) == std::vector<std::size_t>{6, 2});
    CHECK(entropy_layer_budgets({0.7, 0.7, 0.7}, 9, 0, 100) == std::vector<std::size_t>{3, 3, 3});
    CHECK_THROWS_AS(entropy_layer_budgets({0.0, 0.0}, 8, 0, 100), DomainError);
    CHECK_THROWS_AS(entropy_layer_budgets({1.0, 1.0}, 1, 1, 100), InfeasibleBudgetError);

    Rng rng(6);
    for (int iter = 0; iter < 100; ++iter) {
        const std::size_t layers = 2 + rng.index(5);
        const Vec e = oracle::random_vec(rng, layers, 0.01, 2.0);
        const std::size_t total = layers + rng.index(60);
        const auto budgets = entropy_layer_budgets(e, total, 1, total);
        CHECK(sum(budgets) == total);
        // Rounding stays within one seat of the real share before clamping.
        const double esum = std::accumulate(e.begin(), e.end(), 0.0);
        bool clamped = false;
        for (std::size_t l = 0; l < layers; ++l) {
            if (total * e[l] / esum < 1.0) {
                clamped = true;
            }
        }
        if (!clamped) {
            for (std::size_t l = 0; l < layers; ++l) {
                CHECK(std::fabs(static_cast<double>(budgets[l]) - total * e[l] / esum) <= 1.0 + 1e-9);
            }
        }

        // Scale invariance.
        Vec scaled = e;
        for (double& v : scaled) {
            v *= 37.5;
        }
        CHECK(entropy_layer_budgets(scaled, total, 1, total) == budgets);
    }
}

TEST_CASE("adakv_head_budgets counts the layer-wide top-k per head") {
    const std::vector<Vec> rows = {{0.9, 0.1}, {0.5, 0.4}};
    const std::size_t w = 2;
    // Scored quota 2: winners 0.9 (head 0) and 0.5 (head 1).
    CHECK(adakv_head_budgets(rows, 2 + 2 * w, w) == std::vector<std::size_t>{1 + w, 1 + w});
    // Scored quota 3 adds 0.4 on head 1.
    CHECK(adakv_head_budgets(rows, 3 + 2 * w, w) == std::vector<std::size_t>{1 + w, 2 + w});
    CHECK_THROWS_AS(adakv_head_budgets(rows, 1, w), InfeasibleBudgetError);
    CHECK_THROWS_AS(adakv_head_budgets(rows, 5 + 2 * w, w), InfeasibleBudgetError);

    Rng rng(7);
    for (int iter = 0; iter < 50; ++iter) {
        const std::size_t heads = 1 + rng.index(4);
        const std::size_t scored = 3 + rng.index(6);
        std::vector<Vec> scores;
        Vec flat;
        for (std::size_t h = 0; h < heads; ++h) {
            scores.push_back(oracle::random_vec(rng, scored, 0.0, 1.0));
            flat.insert(flat.end(), scores.back().begin(), scores.back().end());
        }
        const std::size_t quota = rng.index(heads * scored + 1);
        const auto budgets = adakv_head_budgets(scores, quota + heads * 2, 2);
        CHECK(sum(budgets) == quota + heads * 2);
        std::vector<std::size_t> want(heads, 2);
        for (std::size_t idx : oracle::topk_fullsort(flat, quota)) {
            ++want[idx / scored];
        }
        CHECK(budgets == want);
    }
}

TEST_CASE("budget conservation across all strategies") {
    Rng rng(8);
    for (int iter = 0; iter < 100; ++iter) {
        const std::size_t layers = 1 + rng.index(6);
        const std::size_t kv_heads = 1 + rng.index(4);
        const std::size_t window = 1 + rng.index(4);
        const std::size_t tokens = window + 2 + rng.index(20);
        const std::size_t floor_each = kv_heads * window;
        const std::size_t cap_each = kv_heads * tokens;
        const std::size_t total = layers * floor_each + rng.index(layers * (cap_each - floor_each) + 1);

        const auto uni = uniform_layer_budgets(total, layers, floor_each);
        const auto pyr = pyramid_layer_budgets(total, layers, 1.0 + rng.uniform(0.0, 3.0), floor_each, cap_each);
        const auto ent = entropy_layer_budgets(oracle::random_vec(rng, layers, 0.05, 1.0), total, floor_each,
                                               cap_each);
        const auto cak = cake_layer_budgets(oracle::random_vec(rng, layers, 0.1, 3.0),
                                            oracle::random_vec(rng, layers, 0.01, 1.0), 2.0, 2.0, total, floor_each,
                                            cap_each);
        for (const auto& budgets : {uni, pyr, ent, cak}) {
            CHECK(sum(budgets) == total);
            for (std::size_t b : budgets) {
                CHECK(b >= floor_each);
                CHECK(b <= cap_each);
            }
        }
    }
}
