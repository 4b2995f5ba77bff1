// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "kvlab/cache.hpp"
#include "kvlab/common.hpp"
#include "kvlab/numerics.hpp"
#include "kvlab/toymodel.hpp"

namespace kvlab {

struct LayerLoss {
    double true_l1_loss = 0.0;
    double theorem1_bound = 0.0;
    double adakv_bound = 0.0;
    double entropy = 0.0;  // e_l of the layer's eviction distribution
    std::size_t budget = 0;
    std::size_t retained = 0;
};

struct LossReport {
    std::vector<LayerLoss> layers;
    double logit_ce = 0.0;
    std::string policy;
    std::size_t total_budget = 0;
    std::uint64_t seed = 0;
};

// (a . mask) / ||a . mask||_1 — the distribution attention collapses to after
// eviction (Lemma-1 form). Throws DomainError when everything is masked.
Vec masked_renormalize(const Vec& attention, const std::vector<std::uint8_t>& mask);

/**
 * Everything per-layer loss math needs for the current decode step: the
 * full-cache attention rows A^N of every query head, the value cache of every
 * kv head, the output projection, and the group size mapping query heads onto
 * kv heads.
 */
struct LayerLossInputs {
    const std::vector<Vec>* attn_rows;            // [heads][positions]
    const std::vector<std::vector<Vec>>* values;  // [kv_heads][positions][head_dim]
    const Mat* w_o;
    std::size_t group_size = 1;
};

// Exact ||y - y_hat||_1 with y_hat computed from masked-renormalized rows.
double layer_output_loss(const LayerLossInputs& in, const EvictionMask& mask);

// Max row absolute sum of w (= ||w^T||_1, the induced matrix 1-norm of the
// transpose).
double max_row_abs_sum(const Mat& w);

// 2 * ||W_O^T||_1 * sum_h sum_i A_h[i] * vbar_h * (1 - mask), vbar per kv head.
double theorem1_bound(const LayerLossInputs& in, const EvictionMask& mask);

// 2 * C * sum_h sum_i A_h[i] * (1 - mask) with the coarser head-max constant
// C = max_h ||W_{O,h}^T V_h^T||_1.
double adakv_bound(const LayerLossInputs& in, const EvictionMask& mask);

/**
 * Cross-entropy between the step-N logits of the full-cache forward pass and
 * a rerun in which every layer's cache is masked. The rerun recomputes the
 * current stream's K/V from its (perturbed) hidden state, as a decode step
 * would.
 */
double logit_loss(const ModelConfig& cfg, const ModelWeights& weights, const std::vector<Vec>& inputs,
                  const std::vector<EvictionMask>& masks);

// Masked-rerun logits against caller-provided caches (the trace path). Caches
// must hold the full prefill contents; masks are applied to copies.
Vec rerun_masked_logits(const ModelConfig& cfg, const ModelWeights& weights, const std::vector<Vec>& inputs,
                        const std::vector<LayerKVCache>& caches, const std::vector<EvictionMask>& masks);

struct OracleResult {
    EvictionMask mask;
    double min_loss = 0.0;
    std::size_t masks_tried = 0;
};

// Enumeration cap for the exhaustive oracle (total evictable slots).
inline constexpr std::size_t kOracleSlotCap = 20;

/**
 * Exhaustive minimizer of the true layer output loss over all window-respecting
 * masks with exactly `layer_budget` retained entries. Deterministic: masks are
 * enumerated in lexicographic order over (head, position) and the first
 * minimizer wins. Throws FeasibilityError above kOracleSlotCap evictable slots.
 */
OracleResult oracle_exhaustive_evict(const LayerLossInputs& in, const LayerKVCache& cache, std::size_t layer_budget);

}  // namespace kvlab
