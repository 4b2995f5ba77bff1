// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "kvlab/allocation.hpp"
#include "kvlab/cache.hpp"
#include "kvlab/common.hpp"
#include "kvlab/metrics.hpp"
#include "kvlab/scoring.hpp"
#include "kvlab/toymodel.hpp"

namespace kvlab {

enum class ScorePolicy { Lava, SnapKv, H2O, Tova, Cake, Vatp };
enum class HeadMode { Fixed, Dynamic };
enum class LayerAllocation { Uniform, Pyramid, Cake, LavaEntropy };

struct PolicyConfig {
    ScorePolicy score = ScorePolicy::Lava;
    LayerAllocation allocation = LayerAllocation::LavaEntropy;
    HeadMode head_mode = HeadMode::Dynamic;
    std::size_t total_budget = 0;
    std::size_t pool_kernel = 7;  // odd; 1 disables pooling
    double cake_score_gamma = 0.0;
    double pyramid_beta = 2.0;
    double cake_gamma1 = 1.0;
    double cake_gamma2 = 1.0;
    std::string name = "lava";

    bool needs_full_attention() const {
        return score == ScorePolicy::H2O;
    }
    bool dynamic_layers() const {
        return allocation == LayerAllocation::Cake || allocation == LayerAllocation::LavaEntropy;
    }
};

// Named bundles: lava, snapkv, ada-snapkv, pyramidkv, ada-pyramidkv, cake,
// tova, h2o, vatp. Throws ConfigError on unknown names.
PolicyConfig policy_bundle(const std::string& name, std::size_t total_budget);
const std::vector<std::string>& policy_bundle_names();

/**
 * Layer-wise eviction with implicit dynamic head budgets: scores of all kv
 * heads compete in one joint top-k. Retains every window position plus the
 * top (layer_budget - window entries) scored candidates; ties break on the
 * smaller (head, position). Score rows are dense over scored positions; only
 * currently retained positions are candidates.
 */
EvictionMask layer_evict(const LayerKVCache& cache, const std::vector<Vec>& head_scores, std::size_t layer_budget);

// Same selection against the cache's retained-score sidecar (recompression path).
EvictionMask layer_evict_retained(const LayerKVCache& cache, std::size_t layer_budget);

// Fixed head budgets: an independent top-(budget - window) per head.
EvictionMask head_evict(const LayerKVCache& cache, const std::vector<Vec>& head_scores,
                        const std::vector<std::size_t>& head_budgets);

EvictionMask head_evict_retained(const LayerKVCache& cache, const std::vector<std::size_t>& head_budgets);

// Per-policy score rows on kv-head granularity: raw per-query-head scores,
// GQA max-reduction, then pooling.
std::vector<Vec> compute_layer_scores(const LayerKVCache& cache, const std::vector<RecentAttention>& recent,
                                      const std::vector<std::vector<Vec>>* full_attention, const PolicyConfig& policy,
                                      const ModelConfig& model);

// Dispatch: dynamic head mode runs layer_evict, fixed mode splits the layer
// budget equally across heads (largest remainder) and runs head_evict.
EvictionMask compress_layer(const LayerKVCache& cache, const std::vector<Vec>& kv_scores, const PolicyConfig& policy,
                            std::size_t layer_budget, std::size_t kv_heads);

struct PipelineResult {
    std::vector<LayerKVCache> caches;  // compressed (logical flags applied)
    BudgetPlan plan;
    LossReport report;
    // Window attention rows kept for diagnostics and loss checks.
    std::vector<std::vector<RecentAttention>> recent;
    std::vector<EvictionMask> final_masks;
    // Max of (retained entries of compressed layers + full cache being
    // prefilled) observed while running.
    std::size_t peak_retained = 0;
    // Budgets after every recompression round; entry r covers layers 0..r.
    std::vector<std::vector<std::size_t>> budget_history;
    // e_l (or CAKE's P_l) per layer, as used for dynamic allocation.
    std::vector<double> allocation_weights;
};

// One prefilled layer, however it was produced (model forward or trace).
struct LayerArtifacts {
    LayerKVCache cache;
    std::vector<RecentAttention> recent;          // per query head
    std::vector<std::vector<Vec>> full_attention;  // per query head; empty unless requested
    Mat w_o;
};

using LayerProvider = std::function<LayerArtifacts(std::size_t layer)>;
using LogitEvaluator = std::function<double(const std::vector<EvictionMask>& masks)>;

/**
 * The compression loop shared by the synthetic and trace drivers: fetch one
 * layer at a time, score, allocate, evict, and recompress earlier layers when
 * the allocation is dynamic. Budgets of already-compressed layers are clamped
 * to be non-increasing (evicted entries cannot come back); any clamped surplus
 * goes to the newest layer.
 */
PipelineResult run_pipeline_core(const ModelConfig& cfg, std::size_t tokens, const PolicyConfig& policy,
                                 const LayerProvider& provider, const LogitEvaluator& logit_ce);

// Prefill-and-evict over the toy model, layer by layer.
PipelineResult run_pipeline(const ModelConfig& cfg, const ModelWeights& weights, const std::vector<Vec>& inputs,
                            const PolicyConfig& policy);

// Algorithm entry points by name.
PipelineResult lava_pipeline(const ModelConfig& cfg, const ModelWeights& weights, const std::vector<Vec>& inputs,
                             std::size_t total_budget);
PipelineResult baseline_pipeline(const ModelConfig& cfg, const ModelWeights& weights, const std::vector<Vec>& inputs,
                                 const PolicyConfig& policy);

}  // namespace kvlab
