// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvlab/engine.hpp"

#include <algorithm>
#include <cmath>

namespace kvlab {

namespace {

struct Candidate {
    std::size_t head;
    std::size_t pos;
    double score;
};

// Base mask: window positions on, everything else off.
EvictionMask window_only_mask(const LayerKVCache& cache) {
    EvictionMask m;
    m.bits.resize(cache.kv_heads());
    for (std::size_t g = 0; g < cache.kv_heads(); ++g) {
        m.bits[g].assign(cache.length(g), 0);
        for (std::size_t i = cache.window_start(g); i < cache.length(g); ++i) {
            m.bits[g][i] = 1;
        }
    }
    return m;
}

std::size_t window_entry_count(const LayerKVCache& cache) {
    std::size_t n = 0;
    for (std::size_t g = 0; g < cache.kv_heads(); ++g) {
        n += cache.length(g) - cache.window_start(g);
    }
    return n;
}

EvictionMask select_top_candidates(const LayerKVCache& cache, const std::vector<Candidate>& candidates,
                                   std::size_t quota) {
    if (quota > candidates.size()) {
        throw InfeasibleBudgetError("evict: budget asks for " + std::to_string(quota) + " scored entries, only " +
                                    std::to_string(candidates.size()) + " available");
    }
    Vec flat(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        flat[i] = candidates[i].score;
    }
    EvictionMask mask = window_only_mask(cache);
    for (std::size_t idx : top_k_indices(flat, quota)) {
        mask.bits[candidates[idx].head][candidates[idx].pos] = 1;
    }
    return mask;
}

// Candidates in (head, position) lexicographic order so the top-k tie-break is
// identical between the dense and sidecar paths.
std::vector<Candidate> dense_candidates(const LayerKVCache& cache, const std::vector<Vec>& head_scores,
                                        std::size_t head_lo, std::size_t head_hi) {
    std::vector<Candidate> out;
    for (std::size_t g = head_lo; g < head_hi; ++g) {
        const std::size_t wstart = cache.window_start(g);
        if (head_scores[g].size() != wstart) {
            throw DimensionError("evict: score row length " + std::to_string(head_scores[g].size()) +
                                 " vs scored positions " + std::to_string(wstart));
        }
        for (std::size_t i = 0; i < wstart; ++i) {
            if (cache.head(g).retained[i]) {
                out.push_back({g, i, head_scores[g][i]});
            }
        }
    }
    return out;
}

std::vector<Candidate> sidecar_candidates(const LayerKVCache& cache, std::size_t head_lo, std::size_t head_hi) {
    std::vector<Candidate> out;
    for (std::size_t g = head_lo; g < head_hi; ++g) {
        for (const auto& [pos, score] : cache.head(g).scores) {
            out.push_back({g, pos, score});
        }
    }
    return out;
}

std::vector<std::size_t> equal_head_split(std::size_t layer_budget, std::size_t kv_heads) {
    std::vector<std::size_t> out(kv_heads, layer_budget / kv_heads);
    for (std::size_t i = 0; i < layer_budget % kv_heads; ++i) {
        ++out[i];
    }
    return out;
}

EvictionMask head_evict_impl(const LayerKVCache& cache, const std::vector<std::size_t>& head_budgets,
                             const std::vector<Vec>* head_scores) {
    if (head_budgets.size() != cache.kv_heads()) {
        throw DimensionError("head_evict: budget list length mismatch");
    }
    EvictionMask mask = window_only_mask(cache);
    for (std::size_t g = 0; g < cache.kv_heads(); ++g) {
        const std::size_t window = cache.length(g) - cache.window_start(g);
        if (head_budgets[g] < window) {
            throw InfeasibleBudgetError("head_evict: head budget below the window size");
        }
        const std::vector<Candidate> cand = head_scores ? dense_candidates(cache, *head_scores, g, g + 1)
                                                        : sidecar_candidates(cache, g, g + 1);
        const EvictionMask partial = select_top_candidates(cache, cand, head_budgets[g] - window);
        for (std::size_t i = 0; i < partial.bits[g].size(); ++i) {
            if (partial.bits[g][i]) {
                mask.bits[g][i] = 1;
            }
        }
    }
    return mask;
}

}  // namespace

EvictionMask layer_evict(const LayerKVCache& cache, const std::vector<Vec>& head_scores, std::size_t layer_budget) {
    const std::size_t window = window_entry_count(cache);
    if (layer_budget < window) {
        throw InfeasibleBudgetError("layer_evict: budget below the window floor");
    }
    if (head_scores.size() != cache.kv_heads()) {
        throw DimensionError("layer_evict: score row count mismatch");
    }
    return select_top_candidates(cache, dense_candidates(cache, head_scores, 0, cache.kv_heads()),
                                 layer_budget - window);
}

EvictionMask layer_evict_retained(const LayerKVCache& cache, std::size_t layer_budget) {
    const std::size_t window = window_entry_count(cache);
    if (layer_budget < window) {
        throw InfeasibleBudgetError("layer_evict_retained: budget below the window floor");
    }
    return select_top_candidates(cache, sidecar_candidates(cache, 0, cache.kv_heads()), layer_budget - window);
}

EvictionMask head_evict(const LayerKVCache& cache, const std::vector<Vec>& head_scores,
                        const std::vector<std::size_t>& head_budgets) {
    return head_evict_impl(cache, head_budgets, &head_scores);
}

EvictionMask head_evict_retained(const LayerKVCache& cache, const std::vector<std::size_t>& head_budgets) {
    return head_evict_impl(cache, head_budgets, nullptr);
}

std::vector<Vec> compute_layer_scores(const LayerKVCache& cache, const std::vector<RecentAttention>& recent,
                                      const std::vector<std::vector<Vec>>* full_attention, const PolicyConfig& policy,
                                      const ModelConfig& model) {
    std::vector<Vec> per_query_head(model.heads);
    for (std::size_t h = 0; h < model.heads; ++h) {
        const std::size_t g = model.group_of(h);
        const std::size_t scored = cache.window_start(g);
        switch (policy.score) {
        case ScorePolicy::Lava:
            per_query_head[h] = lava_score(recent[h], value_norm_max(cache.head(g).v), model.window, scored);
            break;
        case ScorePolicy::SnapKv:
            per_query_head[h] = snapkv_score(recent[h], model.window, scored);
            break;
        case ScorePolicy::Tova:
            per_query_head[h] = tova_score(recent[h].last_row(), scored);
            break;
        case ScorePolicy::Cake:
            per_query_head[h] = cake_score(recent[h], model.window, policy.cake_score_gamma, scored);
            break;
        case ScorePolicy::Vatp:
            per_query_head[h] = vatp_score(recent[h], model.window, cache.head(g).v, scored);
            break;
        case ScorePolicy::H2O: {
            if (!full_attention || full_attention->empty()) {
                throw StateError("h2o scoring needs the full attention matrix (diagnostic mode)");
            }
            Vec all = h2o_score((*full_attention)[h]);
            all.resize(scored);
            per_query_head[h] = std::move(all);
            break;
        }
        }
    }

    std::vector<Vec> out(model.kv_heads);
    const std::size_t gs = model.group_size();
    for (std::size_t g = 0; g < model.kv_heads; ++g) {
        std::vector<Vec> group(per_query_head.begin() + static_cast<std::ptrdiff_t>(g * gs),
                               per_query_head.begin() + static_cast<std::ptrdiff_t>((g + 1) * gs));
        Vec reduced = gqa_reduce_max(group);
        out[g] = policy.pool_kernel > 1 ? pool_scores(reduced, policy.pool_kernel) : reduced;
    }
    return out;
}

EvictionMask compress_layer(const LayerKVCache& cache, const std::vector<Vec>& kv_scores, const PolicyConfig& policy,
                            std::size_t layer_budget, std::size_t kv_heads) {
    if (policy.head_mode == HeadMode::Dynamic) {
        return layer_evict(cache, kv_scores, layer_budget);
    }
    return head_evict(cache, kv_scores, equal_head_split(layer_budget, kv_heads));
}

PolicyConfig policy_bundle(const std::string& name, std::size_t total_budget) {
    PolicyConfig c;
    c.total_budget = total_budget;
    c.name = name;
    if (name == "lava") {
        c.score = ScorePolicy::Lava;
        c.allocation = LayerAllocation::LavaEntropy;
        c.head_mode = HeadMode::Dynamic;
    } else if (name == "snapkv") {
        c.score = ScorePolicy::SnapKv;
        c.allocation = LayerAllocation::Uniform;
        c.head_mode = HeadMode::Fixed;
    } else if (name == "ada-snapkv") {
        c.score = ScorePolicy::SnapKv;
        c.allocation = LayerAllocation::Uniform;
        c.head_mode = HeadMode::Dynamic;
    } else if (name == "pyramidkv") {
        c.score = ScorePolicy::SnapKv;
        c.allocation = LayerAllocation::Pyramid;
        c.head_mode = HeadMode::Fixed;
    } else if (name == "ada-pyramidkv") {
        c.score = ScorePolicy::SnapKv;
        c.allocation = LayerAllocation::Pyramid;
        c.head_mode = HeadMode::Dynamic;
    } else if (name == "cake") {
        c.score = ScorePolicy::Cake;
        c.allocation = LayerAllocation::Cake;
        c.head_mode = HeadMode::Fixed;
    } else if (name == "tova") {
        c.score = ScorePolicy::Tova;
        c.allocation = LayerAllocation::Uniform;
        c.head_mode = HeadMode::Fixed;
    } else if (name == "h2o") {
        c.score = ScorePolicy::H2O;
        c.allocation = LayerAllocation::Uniform;
        c.head_mode = HeadMode::Fixed;
    } else if (name == "vatp") {
        c.score = ScorePolicy::Vatp;
        c.allocation = LayerAllocation::Uniform;
        c.head_mode = HeadMode::Fixed;
    } else {
        throw ConfigError("unknown policy: " + name);
    }
    return c;
}

const std::vector<std::string>& policy_bundle_names() {
    static const std::vector<std::string> names = {"lava", "snapkv", "ada-snapkv", "pyramidkv", "ada-pyramidkv",
                                                   "cake", "tova",   "h2o",        "vatp"};
    return names;
}

namespace {

// Budgets for layers 0..round under a dynamic allocation, with already
// compressed layers clamped to their previous budgets (eviction is permanent)
// and the clamped surplus moved to the newest layer.
std::vector<std::size_t> dynamic_round_budgets(const PolicyConfig& policy, const std::vector<double>& entropies,
                                               const Vec& spatial, const Vec& temporal, std::size_t round,
                                               std::size_t total, std::size_t floor_each, std::size_t cap_each,
                                               const std::vector<std::size_t>& prev) {
    const std::size_t layers = round + 1;
    const std::size_t eff_total = std::min(total, layers * cap_each);
    std::vector<std::size_t> budgets;
    if (policy.allocation == LayerAllocation::LavaEntropy) {
        Vec e(entropies.begin(), entropies.begin() + static_cast<std::ptrdiff_t>(layers));
        budgets = entropy_layer_budgets(e, eff_total, floor_each, cap_each);
    } else {
        Vec sp(spatial.begin(), spatial.begin() + static_cast<std::ptrdiff_t>(layers));
        Vec te(temporal.begin(), temporal.begin() + static_cast<std::ptrdiff_t>(layers));
        budgets = cake_layer_budgets(sp, te, policy.cake_gamma1, policy.cake_gamma2, eff_total, floor_each, cap_each);
    }
    std::size_t surplus = 0;
    for (std::size_t l = 0; l + 1 < layers; ++l) {
        if (budgets[l] > prev[l]) {
            surplus += budgets[l] - prev[l];
            budgets[l] = prev[l];
        }
    }
    budgets[round] += surplus;
    if (budgets[round] > cap_each) {
        std::size_t overflow = budgets[round] - cap_each;
        budgets[round] = cap_each;
        for (std::size_t l = 0; l + 1 < layers && overflow > 0; ++l) {
            const std::size_t take = std::min(prev[l] - budgets[l], overflow);
            budgets[l] += take;
            overflow -= take;
        }
    }
    return budgets;
}

}  // namespace

PipelineResult run_pipeline_core(const ModelConfig& cfg, std::size_t tokens, const PolicyConfig& policy,
                                 const LayerProvider& provider, const LogitEvaluator& logit_ce) {
    cfg.validate();
    const std::size_t n = tokens;
    if (n <= cfg.window) {
        throw ConfigError("pipeline: need more streams than the window");
    }
    if (policy.pool_kernel == 0 || policy.pool_kernel % 2 == 0) {
        throw ConfigError("pipeline: pool kernel must be odd");
    }
    const std::size_t floor_each = cfg.kv_heads * cfg.window;
    const std::size_t cap_each = cfg.kv_heads * n;
    if (policy.total_budget < cfg.layers * floor_each || policy.total_budget > cfg.layers * cap_each) {
        throw InfeasibleBudgetError("pipeline: budget " + std::to_string(policy.total_budget) +
                                    " outside the feasible range [" + std::to_string(cfg.layers * floor_each) + ", " +
                                    std::to_string(cfg.layers * cap_each) + "]");
    }

    std::vector<std::size_t> static_budgets;
    if (!policy.dynamic_layers()) {
        static_budgets = policy.allocation == LayerAllocation::Uniform
                             ? uniform_layer_budgets(policy.total_budget, cfg.layers, floor_each)
                             : pyramid_layer_budgets(policy.total_budget, cfg.layers, policy.pyramid_beta, floor_each,
                                                     cap_each);
    }

    PipelineResult res;
    res.recent.assign(cfg.layers, {});
    res.allocation_weights.assign(cfg.layers, 0.0);
    res.report.policy = policy.name;
    res.report.total_budget = policy.total_budget;
    res.report.seed = cfg.seed;
    res.report.layers.resize(cfg.layers);

    std::vector<double> entropies;
    Vec spatial;
    Vec temporal;
    std::vector<std::size_t> prev_budgets;
    std::vector<Mat> w_o_per_layer(cfg.layers);

    for (std::size_t l = 0; l < cfg.layers; ++l) {
        LayerArtifacts art = provider(l);
        w_o_per_layer[l] = std::move(art.w_o);

        std::size_t held = cfg.kv_heads * n;
        for (const LayerKVCache& c : res.caches) {
            held += c.retained_count();
        }
        res.peak_retained = std::max(res.peak_retained, held);

        std::vector<Vec> scores = compute_layer_scores(
            art.cache, art.recent, art.full_attention.empty() ? nullptr : &art.full_attention, policy, cfg);
        entropies.push_back(lava_layer_entropy(lava_normalized_scores(scores), cfg.heads, n));
        if (policy.allocation == LayerAllocation::Cake) {
            spatial.push_back(cake_spatial(art.recent));
            temporal.push_back(cake_temporal(art.recent, scored_positions(n, cfg.window)));
            res.allocation_weights[l] = std::pow(std::max(spatial[l], 1e-12), 1.0 / policy.cake_gamma1) *
                                        std::pow(std::max(temporal[l], 1e-12), 1.0 / policy.cake_gamma2);
        } else {
            res.allocation_weights[l] = entropies[l];
        }

        std::vector<std::size_t> budgets;
        if (policy.dynamic_layers()) {
            budgets = dynamic_round_budgets(policy, entropies, spatial, temporal, l, policy.total_budget, floor_each,
                                            cap_each, prev_budgets);
        } else {
            budgets.assign(static_budgets.begin(), static_budgets.begin() + static_cast<std::ptrdiff_t>(l + 1));
        }

        EvictionMask mask = compress_layer(art.cache, scores, policy, budgets[l], cfg.kv_heads);
        art.cache.apply_mask(mask);
        for (std::size_t g = 0; g < cfg.kv_heads; ++g) {
            art.cache.set_retained_scores(g, scores[g]);
        }
        res.caches.push_back(std::move(art.cache));

        if (policy.dynamic_layers()) {
            for (std::size_t past = 0; past < l; ++past) {
                if (budgets[past] == res.caches[past].retained_count()) {
                    continue;
                }
                EvictionMask m =
                    policy.head_mode == HeadMode::Dynamic
                        ? layer_evict_retained(res.caches[past], budgets[past])
                        : head_evict_retained(res.caches[past], equal_head_split(budgets[past], cfg.kv_heads));
                res.caches[past].apply_mask(m);
            }
        }

        res.budget_history.push_back(budgets);
        prev_budgets = std::move(budgets);
        res.recent[l] = std::move(art.recent);
    }

    res.plan.total = policy.total_budget;
    res.plan.per_layer = prev_budgets;
    res.plan.per_head.resize(cfg.layers);
    res.final_masks.resize(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        res.plan.per_head[l].resize(cfg.kv_heads);
        res.final_masks[l].bits.resize(cfg.kv_heads);
        for (std::size_t g = 0; g < cfg.kv_heads; ++g) {
            const auto& retained = res.caches[l].head(g).retained;
            res.final_masks[l].bits[g].assign(retained.begin(), retained.end());
            res.plan.per_head[l][g] = res.caches[l].retained_indices(g).size();
        }
    }

    for (std::size_t l = 0; l < cfg.layers; ++l) {
        std::vector<Vec> last_rows(cfg.heads);
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            last_rows[h] = res.recent[l][h].last_row();
        }
        std::vector<std::vector<Vec>> values(cfg.kv_heads);
        for (std::size_t g = 0; g < cfg.kv_heads; ++g) {
            values[g] = res.caches[l].head(g).v;
        }
        const LayerLossInputs in{&last_rows, &values, &w_o_per_layer[l], cfg.group_size()};
        LayerLoss& ll = res.report.layers[l];
        ll.true_l1_loss = layer_output_loss(in, res.final_masks[l]);
        ll.theorem1_bound = theorem1_bound(in, res.final_masks[l]);
        ll.adakv_bound = adakv_bound(in, res.final_masks[l]);
        ll.entropy = entropies[l];
        ll.budget = res.plan.per_layer[l];
        ll.retained = res.caches[l].retained_count();
    }
    res.report.logit_ce = logit_ce ? logit_ce(res.final_masks) : 0.0;
    return res;
}

PipelineResult run_pipeline(const ModelConfig& cfg, const ModelWeights& weights, const std::vector<Vec>& inputs,
                            const PolicyConfig& policy) {
    if (weights.layers.size() != cfg.layers) {
        throw DimensionError("run_pipeline: weight/layer count mismatch");
    }
    const std::size_t n = inputs.size();
    const std::size_t dh = cfg.head_dim;
    const bool keep_full = policy.needs_full_attention();

    // The provider advances the residual streams one layer per call.
    std::vector<Vec> hidden = inputs;
    auto provider = [&](std::size_t l) -> LayerArtifacts {
        const LayerWeights& lw = weights.layers[l];
        LayerArtifacts art;
        art.cache = LayerKVCache(cfg.kv_heads, dh, cfg.window);
        art.recent.assign(cfg.heads, {});
        if (keep_full) {
            art.full_attention.assign(cfg.heads, {});
        }
        art.w_o = lw.w_o;
        std::vector<Vec> next(n);
        const std::size_t row_begin = n - 1 - cfg.window;
        for (std::size_t i = 0; i < n; ++i) {
            const Vec& x = hidden[i];
            const Vec k_full = matvec_row(x, lw.w_k);
            const Vec v_full = matvec_row(x, lw.w_v);
            for (std::size_t g = 0; g < cfg.kv_heads; ++g) {
                art.cache.append_kv(g,
                                    Vec(k_full.begin() + static_cast<std::ptrdiff_t>(g * dh),
                                        k_full.begin() + static_cast<std::ptrdiff_t>((g + 1) * dh)),
                                    Vec(v_full.begin() + static_cast<std::ptrdiff_t>(g * dh),
                                        v_full.begin() + static_cast<std::ptrdiff_t>((g + 1) * dh)));
            }
            LayerStepResult step = layer_forward(x, art.cache, lw, cfg);
            next[i] = std::move(step.x_next);
            for (std::size_t h = 0; h < cfg.heads; ++h) {
                if (i >= row_begin || keep_full) {
                    Vec padded = step.attn_rows[h];
                    padded.resize(n, 0.0);
                    if (i >= row_begin) {
                        art.recent[h].rows.push_back(padded);
                    }
                    if (keep_full) {
                        art.full_attention[h].push_back(std::move(padded));
                    }
                }
            }
        }
        hidden = std::move(next);
        return art;
    };

    auto logits = [&](const std::vector<EvictionMask>& masks) { return logit_loss(cfg, weights, inputs, masks); };
    return run_pipeline_core(cfg, n, policy, provider, logits);
}

PipelineResult lava_pipeline(const ModelConfig& cfg, const ModelWeights& weights, const std::vector<Vec>& inputs,
                             std::size_t total_budget) {
    return run_pipeline(cfg, weights, inputs, policy_bundle("lava", total_budget));
}

PipelineResult baseline_pipeline(const ModelConfig& cfg, const ModelWeights& weights, const std::vector<Vec>& inputs,
                                 const PolicyConfig& policy) {
    return run_pipeline(cfg, weights, inputs, policy);
}

}  // namespace kvlab
