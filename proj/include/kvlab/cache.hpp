// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "kvlab/common.hpp"

namespace kvlab {

/**
 * @brief Eviction mask over (kv-head, position): 1 retains, 0 evicts.
 *
 * The recent window (the last `window` positions of every head) must stay at 1;
 * apply sites enforce this.
 */
struct EvictionMask {
    std::vector<std::vector<std::uint8_t>> bits;  // [kv_head][position]

    static EvictionMask all_ones(std::size_t kv_heads, std::size_t positions) {
        EvictionMask m;
        m.bits.assign(kv_heads, std::vector<std::uint8_t>(positions, 1));
        return m;
    }

    std::size_t retained_count() const {
        std::size_t n = 0;
        for (const auto& row : bits) {
            for (std::uint8_t b : row) {
                n += b;
            }
        }
        return n;
    }
};

/**
 * @brief Per-layer KV storage with logical eviction flags and a retained-score
 *        sidecar.
 *
 * Eviction is logical: evicted entries stay in storage but are flagged out and
 * excluded from attention and scoring. Scores are kept only for retained
 * non-window positions (they are what recompression rounds consult).
 */
class LayerKVCache {
public:
    struct HeadCache {
        std::vector<Vec> k;
        std::vector<Vec> v;
        std::vector<std::uint8_t> retained;
        // Sorted (position, score) pairs for retained non-window positions.
        std::vector<std::pair<std::size_t, double>> scores;
    };

    LayerKVCache() = default;
    LayerKVCache(std::size_t kv_heads, std::size_t head_dim, std::size_t window)
        : m_head_dim(head_dim), m_window(window), m_heads(kv_heads) {}

    std::size_t kv_heads() const {
        return m_heads.size();
    }
    std::size_t head_dim() const {
        return m_head_dim;
    }
    std::size_t window() const {
        return m_window;
    }

    const HeadCache& head(std::size_t h) const {
        return m_heads[h];
    }
    HeadCache& head(std::size_t h) {
        return m_heads[h];
    }

    // Number of stored positions for head h (evicted entries included).
    std::size_t length(std::size_t h) const {
        return m_heads[h].k.size();
    }

    // First always-retained position for head h: max(0, len - window).
    std::size_t window_start(std::size_t h) const {
        const std::size_t n = length(h);
        return n > m_window ? n - m_window : 0;
    }

    void append_kv(std::size_t head, const Vec& key, const Vec& value);

    // Replaces retained flags with the mask and drops sidecar scores of evicted
    // positions. Throws ConstraintError if the mask clears a window bit and
    // DimensionError on shape mismatch.
    void apply_mask(const EvictionMask& mask);

    std::size_t retained_count() const;

    std::vector<std::size_t> retained_indices(std::size_t head) const;

    // Records the score sidecar for head h: one score per retained non-window
    // position, taken from a dense row over scored positions.
    void set_retained_scores(std::size_t head, const Vec& scored_row);

    // Physically compacted copy containing only retained entries. Used by
    // rebuild-and-compare oracles; behavior must match the logical view.
    LayerKVCache compacted_copy() const;

private:
    std::size_t m_head_dim = 0;
    std::size_t m_window = 0;
    std::vector<HeadCache> m_heads;
};

// Planned budgets with conservation invariants: sum(per_layer) == total,
// sum(per_head[l]) == per_layer[l].
struct BudgetPlan {
    std::size_t total = 0;
    std::vector<std::size_t> per_layer;
    std::vector<std::vector<std::size_t>> per_head;  // realized, post-eviction
};

}  // namespace kvlab
