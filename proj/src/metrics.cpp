// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace kvlab {

Vec masked_renormalize(const Vec& attention, const std::vector<std::uint8_t>& mask) {
    if (attention.size() != mask.size()) {
        throw DimensionError("masked_renormalize: length mismatch");
    }
    double kept = 0.0;
    for (std::size_t i = 0; i < attention.size(); ++i) {
        if (attention[i] < 0.0) {
            throw DomainError("masked_renormalize: negative attention weight");
        }
        if (mask[i]) {
            kept += attention[i];
        }
    }
    if (kept <= 0.0) {
        throw DomainError("masked_renormalize: no retained attention mass");
    }
    Vec out(attention.size(), 0.0);
    for (std::size_t i = 0; i < attention.size(); ++i) {
        if (mask[i]) {
            out[i] = attention[i] / kept;
        }
    }
    return out;
}

double layer_output_loss(const LayerLossInputs& in, const EvictionMask& mask) {
    const auto& rows = *in.attn_rows;
    const auto& values = *in.values;
    const std::size_t heads = rows.size();
    const std::size_t dh = values.front().front().size();
    Vec delta(heads * dh, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t g = h / in.group_size;
        const Vec& a = rows[h];
        const Vec a_hat = masked_renormalize(a, mask.bits[g]);
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double da = a[i] - a_hat[i];
            if (da == 0.0) {
                continue;
            }
            const Vec& v = values[g][i];
            for (std::size_t e = 0; e < dh; ++e) {
                delta[h * dh + e] += da * v[e];
            }
        }
    }
    return l1_norm(matvec_row(delta, *in.w_o));
}

double max_row_abs_sum(const Mat& w) {
    double best = 0.0;
    for (std::size_t r = 0; r < w.rows; ++r) {
        double s = 0.0;
        const double* row = w.row_ptr(r);
        for (std::size_t c = 0; c < w.cols; ++c) {
            s += std::fabs(row[c]);
        }
        best = std::max(best, s);
    }
    return best;
}

double theorem1_bound(const LayerLossInputs& in, const EvictionMask& mask) {
    const auto& rows = *in.attn_rows;
    const auto& values = *in.values;
    const double c_hat = max_row_abs_sum(*in.w_o);
    double acc = 0.0;
    for (std::size_t h = 0; h < rows.size(); ++h) {
        const std::size_t g = h / in.group_size;
        double vbar = 0.0;
        for (const Vec& v : values[g]) {
            vbar = std::max(vbar, l1_norm(v));
        }
        const Vec& a = rows[h];
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!mask.bits[g][i]) {
                acc += a[i] * vbar;
            }
        }
    }
    return 2.0 * c_hat * acc;
}

double adakv_bound(const LayerLossInputs& in, const EvictionMask& mask) {
    const auto& rows = *in.attn_rows;
    const auto& values = *in.values;
    const Mat& w_o = *in.w_o;
    const std::size_t dh = values.front().front().size();

    // C = max over query heads of the induced 1-norm of W_{O,h}^T V_h^T, i.e.
    // the largest ||V_h[k] * W_{O,h}||_1 over cached tokens k.
    double c = 0.0;
    for (std::size_t h = 0; h < rows.size(); ++h) {
        const std::size_t g = h / in.group_size;
        for (const Vec& v : values[g]) {
            Vec mapped(w_o.cols, 0.0);
            for (std::size_t e = 0; e < dh; ++e) {
                const double ve = v[e];
                if (ve == 0.0) {
                    continue;
                }
                const double* row = w_o.row_ptr(h * dh + e);
                for (std::size_t cidx = 0; cidx < w_o.cols; ++cidx) {
                    mapped[cidx] += ve * row[cidx];
                }
            }
            c = std::max(c, l1_norm(mapped));
        }
    }

    double evicted_mass = 0.0;
    for (std::size_t h = 0; h < rows.size(); ++h) {
        const std::size_t g = h / in.group_size;
        const Vec& a = rows[h];
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!mask.bits[g][i]) {
                evicted_mass += a[i];
            }
        }
    }
    return 2.0 * c * evicted_mass;
}

Vec rerun_masked_logits(const ModelConfig& cfg, const ModelWeights& weights, const std::vector<Vec>& inputs,
                        const std::vector<LayerKVCache>& caches, const std::vector<EvictionMask>& masks) {
    if (caches.size() != cfg.layers || masks.size() != cfg.layers) {
        throw DimensionError("rerun_masked_logits: layer count mismatch");
    }
    const std::size_t dh = cfg.head_dim;
    Vec x = inputs.back();
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        LayerKVCache cache = caches[l];
        cache.apply_mask(masks[l]);
        // A decode step recomputes the current stream's projections from the
        // (possibly perturbed) hidden state and overwrites its cache slot: the
        // last stored entry of every head is the current stream.
        const LayerWeights& lw = weights.layers[l];
        const Vec k_full = matvec_row(x, lw.w_k);
        const Vec v_full = matvec_row(x, lw.w_v);
        for (std::size_t g = 0; g < cfg.kv_heads; ++g) {
            cache.head(g).k.back().assign(k_full.begin() + static_cast<std::ptrdiff_t>(g * dh),
                                          k_full.begin() + static_cast<std::ptrdiff_t>((g + 1) * dh));
            cache.head(g).v.back().assign(v_full.begin() + static_cast<std::ptrdiff_t>(g * dh),
                                          v_full.begin() + static_cast<std::ptrdiff_t>((g + 1) * dh));
        }
        LayerStepResult step = layer_forward(x, cache, lw, cfg);
        x = std::move(step.x_next);
    }
    return softmax_row(matvec_row(x, weights.w_m));
}

double logit_loss(const ModelConfig& cfg, const ModelWeights& weights, const std::vector<Vec>& inputs,
                  const std::vector<EvictionMask>& masks) {
    PrefillResult pre = prefill(cfg, weights, inputs);
    const Vec p = softmax_row(matvec_row(pre.hidden[cfg.layers].back(), weights.w_m));
    const Vec p_hat = rerun_masked_logits(cfg, weights, inputs, pre.caches, masks);
    return cross_entropy(p, p_hat);
}

OracleResult oracle_exhaustive_evict(const LayerLossInputs& in, const LayerKVCache& cache,
                                     std::size_t layer_budget) {
    const std::size_t kv_heads = cache.kv_heads();
    std::size_t window_total = 0;
    std::vector<std::pair<std::size_t, std::size_t>> slots;  // (head, position), lexicographic
    for (std::size_t g = 0; g < kv_heads; ++g) {
        const std::size_t wstart = cache.window_start(g);
        window_total += cache.length(g) - wstart;
        for (std::size_t i = 0; i < wstart; ++i) {
            slots.emplace_back(g, i);
        }
    }
    if (slots.size() > kOracleSlotCap) {
        throw FeasibilityError("oracle_exhaustive_evict: " + std::to_string(slots.size()) +
                               " evictable slots exceed the cap of " + std::to_string(kOracleSlotCap));
    }
    if (layer_budget < window_total || layer_budget > window_total + slots.size()) {
        throw InfeasibleBudgetError("oracle_exhaustive_evict: budget outside feasible range");
    }
    const std::size_t quota = layer_budget - window_total;

    EvictionMask base;
    base.bits.resize(kv_heads);
    for (std::size_t g = 0; g < kv_heads; ++g) {
        base.bits[g].assign(cache.length(g), 0);
        for (std::size_t i = cache.window_start(g); i < cache.length(g); ++i) {
            base.bits[g][i] = 1;
        }
    }

    OracleResult result;
    result.min_loss = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> pick(quota);
    for (std::size_t i = 0; i < quota; ++i) {
        pick[i] = i;
    }
    const std::size_t s = slots.size();
    while (true) {
        EvictionMask m = base;
        for (std::size_t i : pick) {
            m.bits[slots[i].first][slots[i].second] = 1;
        }
        const double loss = layer_output_loss(in, m);
        ++result.masks_tried;
        if (loss < result.min_loss) {
            result.min_loss = loss;
            result.mask = m;
        }
        if (quota == 0) {
            break;
        }
        // next combination in lexicographic order
        std::size_t j = quota;
        while (j > 0 && pick[j - 1] == s - quota + (j - 1)) {
            --j;
        }
        if (j == 0) {
            break;
        }
        ++pick[j - 1];
        for (std::size_t t = j; t < quota; ++t) {
            pick[t] = pick[t - 1] + 1;
        }
    }
    return result;
}

}  // namespace kvlab
