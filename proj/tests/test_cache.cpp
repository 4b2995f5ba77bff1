// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "kvlab/cache.hpp"
#include "kvlab/toymodel.hpp"
#include "oracles.hpp"

using namespace kvlab;

namespace {

LayerKVCache filled_cache(Rng& rng, std::size_t kv_heads, std::size_t head_dim, std::size_t window, std::size_t n) {
    LayerKVCache cache(kv_heads, head_dim, window);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t g = 0; g < kv_heads; ++g) {
            cache.append_kv(g, oracle::random_vec(rng, head_dim), oracle::random_vec(rng, head_dim));
        }
    }
    return cache;
}

}  // namespace

TEST_CASE("append_kv grows per-head storage independently") {
    LayerKVCache cache(2, 3, 1);
    cache.append_kv(0, {1, 2, 3}, {4, 5, 6});
    CHECK(cache.length(0) == 1);
    CHECK(cache.length(1) == 0);
    CHECK(cache.head(0).retained[0] == 1);
    CHECK_THROWS_AS(cache.append_kv(0, {1, 2}, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(cache.append_kv(7, {1, 2, 3}, {1, 2, 3}), DimensionError);

    // Interleaved appends: per-head lengths track a plain counter.
    Rng rng(11);
    LayerKVCache c2(3, 2, 1);
    std::vector<std::size_t> counts(3, 0);
    for (int i = 0; i < 200; ++i) {
        const std::size_t g = rng.index(3);
        c2.append_kv(g, oracle::random_vec(rng, 2), oracle::random_vec(rng, 2));
        ++counts[g];
    }
    for (std::size_t g = 0; g < 3; ++g) {
        CHECK(c2.length(g) == counts[g]);
    }
}

TEST_CASE("apply_mask identity, window floor, and protection") {
    Rng rng(22);
    const std::size_t window = 2;
    LayerKVCache cache = filled_cache(rng, 2, 3, window, 6);

    cache.apply_mask(EvictionMask::all_ones(2, 6));
    CHECK(cache.retained_count() == 12);

    EvictionMask window_only;
    window_only.bits.assign(2, std::vector<std::uint8_t>(6, 0));
    for (std::size_t g = 0; g < 2; ++g) {
        for (std::size_t i = 4; i < 6; ++i) {
            window_only.bits[g][i] = 1;
        }
    }
    LayerKVCache floor_case = cache;
    floor_case.apply_mask(window_only);
    CHECK(floor_case.retained_count() == 2 * window);

    EvictionMask bad = EvictionMask::all_ones(2, 6);
    bad.bits[1][5] = 0;  // inside the window
    CHECK_THROWS_AS(cache.apply_mask(bad), ConstraintError);

    EvictionMask ragged = EvictionMask::all_ones(2, 5);
    CHECK_THROWS_AS(cache.apply_mask(ragged), DimensionError);
}

TEST_CASE("retained_count matches a boolean-sum oracle over random masks") {
    Rng rng(33);
    for (int iter = 0; iter < 25; ++iter) {
        const std::size_t n = 5 + rng.index(8);
        const std::size_t window = 1 + rng.index(3);
        LayerKVCache cache = filled_cache(rng, 2, 2, window, n);
        CHECK(cache.retained_count() == 2 * n);

        const EvictionMask mask = oracle::random_window_mask(rng, 2, n, window);
        cache.apply_mask(mask);
        std::size_t expect = 0;
        for (const auto& row : mask.bits) {
            for (auto b : row) {
                expect += b;
            }
        }
        CHECK(cache.retained_count() == expect);
    }
}

TEST_CASE("masked attention equals attention over the physically compacted cache") {
    Rng rng(44);
    ModelConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.kv_heads = 2;
    cfg.head_dim = 3;
    cfg.window = 2;
    cfg.vocab = 4;
    cfg.seed = 1234;
    const ModelWeights weights = init_random_model(cfg);

    for (int iter = 0; iter < 20; ++iter) {
        LayerKVCache cache = filled_cache(rng, cfg.kv_heads, cfg.head_dim, cfg.window, 8);
        const EvictionMask mask = oracle::random_window_mask(rng, cfg.kv_heads, 8, cfg.window);
        cache.apply_mask(mask);
        const LayerKVCache compacted = cache.compacted_copy();

        const Vec x = oracle::random_vec(rng, cfg.dim());
        const LayerStepResult a = layer_forward(x, cache, weights.layers[0], cfg);
        const LayerStepResult b = layer_forward(x, compacted, weights.layers[0], cfg);
        for (std::size_t i = 0; i < a.y.size(); ++i) {
            CHECK(std::fabs(a.y[i] - b.y[i]) <= 1e-12);
        }
        // The masked row carries the same weights at the retained positions.
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            const auto live = cache.retained_indices(cfg.group_of(h));
            REQUIRE(live.size() == b.attn_rows[h].size());
            for (std::size_t t = 0; t < live.size(); ++t) {
                CHECK(std::fabs(a.attn_rows[h][live[t]] - b.attn_rows[h][t]) <= 1e-12);
            }
        }
    }
}

TEST_CASE("score sidecar keeps only retained non-window positions") {
    Rng rng(55);
    const std::size_t n = 8;
    const std::size_t window = 2;
    LayerKVCache cache = filled_cache(rng, 1, 2, window, n);
    const Vec scores = oracle::random_vec(rng, n - window, 0.0, 1.0);
    cache.set_retained_scores(0, scores);
    CHECK(cache.head(0).scores.size() == n - window);

    EvictionMask mask = EvictionMask::all_ones(1, n);
    mask.bits[0][1] = 0;
    mask.bits[0][3] = 0;
    cache.apply_mask(mask);
    CHECK(cache.head(0).scores.size() == n - window - 2);
    for (const auto& [pos, score] : cache.head(0).scores) {
        CHECK(mask.bits[0][pos] == 1);
        CHECK(score == scores[pos]);
    }
}
