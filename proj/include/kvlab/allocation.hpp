// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "kvlab/common.hpp"
#include "kvlab/scoring.hpp"

namespace kvlab {

/**
 * Integer apportionment of `total` proportionally to `weights`, by largest
 * remainder. Every share is clamped to [floor_each, cap_each] with the excess
 * redistributed proportionally among the unclamped entries (waterfilling).
 * Remainder seats go to the largest fractional parts, lower index first on
 * ties, so the result is deterministic and order-preserving.
 *
 * Throws InfeasibleBudgetError unless n*floor_each <= total <= n*cap_each,
 * DomainError on negative weights. All-zero weights fall back to equal shares.
 */
std::vector<std::size_t> apportion_largest_remainder(const Vec& weights, std::size_t total, std::size_t floor_each,
                                                     std::size_t cap_each);

// floor(total/layers) each, remainder one each to the lowest-index layers.
std::vector<std::size_t> uniform_layer_budgets(std::size_t total, std::size_t layers, std::size_t min_per_layer);

// Descending linear interpolation from 2*total/layers - total/(beta*layers)
// down to total/(beta*layers), rounded by largest remainder. beta >= 1.
std::vector<std::size_t> pyramid_layer_budgets(std::size_t total, std::size_t layers, double beta,
                                               std::size_t min_per_layer, std::size_t max_per_layer);

// Spatial information of a layer: mean row entropy (-sum a*ln a) over the
// window attention rows of all heads.
double cake_spatial(const std::vector<RecentAttention>& heads);

// Temporal information: per-head sum over scored positions of the population
// variance of the window samples, averaged over heads.
double cake_temporal(const std::vector<RecentAttention>& heads, std::size_t scored);

// Budgets proportional to P_l = spatial^(1/gamma1) * temporal^(1/gamma2)
// (entries floored at 1e-12). All-zero P falls back to uniform and sets
// *used_fallback when provided.
std::vector<std::size_t> cake_layer_budgets(const Vec& spatial, const Vec& temporal, double gamma1, double gamma2,
                                            std::size_t total, std::size_t min_per_layer, std::size_t max_per_layer,
                                            bool* used_fallback = nullptr);

// Eviction probabilities: flattened scores divided by their sum. Nonpositive
// sums fall back to uniform and set *used_fallback. Negative scores throw.
Vec lava_normalized_scores(const std::vector<Vec>& score_rows, bool* used_fallback = nullptr);

// e_l = -sum p*ln p / (heads * tokens), with 0*ln 0 = 0.
double lava_layer_entropy(const Vec& normalized, std::size_t heads, std::size_t tokens);

// Budgets proportional to the per-layer entropies.
std::vector<std::size_t> entropy_layer_budgets(const Vec& entropies, std::size_t total, std::size_t min_per_layer,
                                               std::size_t max_per_layer);

/**
 * Per-head budgets from a layer-wide top-k: flatten the head score rows, take
 * the top (layer_budget - heads*window) entries, count the winners per head,
 * and add `window` to every head. Sums to layer_budget exactly.
 */
std::vector<std::size_t> adakv_head_budgets(const std::vector<Vec>& head_scores, std::size_t layer_budget,
                                            std::size_t window);

}  // namespace kvlab
