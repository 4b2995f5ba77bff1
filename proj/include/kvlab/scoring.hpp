// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "kvlab/common.hpp"
#include "kvlab/numerics.hpp"

namespace kvlab {

/**
 * @brief Attention rows of one query head for the recent window: rows for the
 *        last window+1 decode steps (j = N-window .. N), each padded to the
 *        full sequence length with zeros beyond the row's causal support.
 */
struct RecentAttention {
    std::vector<Vec> rows;

    std::size_t sequence_length() const {
        return rows.empty() ? 0 : rows.back().size();
    }
    const Vec& last_row() const {
        return rows.back();
    }
};

// max_k ||V[k]||_1 over the head's value vectors. Throws DomainError on empty input.
double value_norm_max(const std::vector<Vec>& values);

// All scoring functions return one score per scored (pre-window) position.
// `scored` is the number of such positions; rows must cover window+1 steps.

// s[i] = (value_norm / window) * sum_j rows[j][i]
Vec lava_score(const RecentAttention& recent, double value_norm, std::size_t window, std::size_t scored);

// s[i] = (1 / window) * sum_j rows[j][i]
Vec snapkv_score(const RecentAttention& recent, std::size_t window, std::size_t scored);

// Accumulated column sums over strictly-later rows: s[i] = sum_{j>i} rows[j][i].
// Needs the full attention matrix (rows for every step, padded to length N);
// diagnostic mode only.
Vec h2o_score(const std::vector<Vec>& full_rows);

// s[i] = last_row[i]
Vec tova_score(const Vec& last_row, std::size_t scored);

// Window mean plus gamma * population variance of the window samples.
Vec cake_score(const RecentAttention& recent, std::size_t window, double gamma, std::size_t scored);

// s[i] = (||V[i]||_1 / window) * sum_j rows[j][i] — per-token value norm.
Vec vatp_score(const RecentAttention& recent, std::size_t window, const std::vector<Vec>& values, std::size_t scored);

// maxpool over a score row; kernel defaults to 7 at call sites.
Vec pool_scores(const Vec& scores, std::size_t kernel);

// Elementwise max across the query heads of one GQA group.
Vec gqa_reduce_max(const std::vector<Vec>& group_scores);

// Per-entry eviction cost in the layer output bound: a * value_norm.
double theorem1_term(double attention_weight, double value_norm);

}  // namespace kvlab
