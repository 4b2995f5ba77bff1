// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvlab/toymodel.hpp"

#include <algorithm>
#include <cmath>

namespace kvlab {

namespace {

constexpr std::uint64_t kInputStreamTag = 0x696e707574ULL;  // keeps input draws off the weight stream

void fill_uniform(Mat& m, Rng& rng, double bound) {
    for (double& v : m.data) {
        v = rng.uniform(-bound, bound);
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (layers == 0 || heads == 0 || kv_heads == 0 || head_dim == 0 || vocab == 0) {
        throw ConfigError("ModelConfig: all dimensions must be >= 1");
    }
    if (window == 0) {
        throw ConfigError("ModelConfig: window must be >= 1");
    }
    if (heads % kv_heads != 0) {
        throw ConfigError("ModelConfig: heads must be divisible by kv_heads");
    }
}

ModelWeights init_random_model(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t d = cfg.dim();
    const std::size_t kv_dim = cfg.kv_heads * cfg.head_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    Rng rng(cfg.seed);

    ModelWeights w;
    w.layers.resize(cfg.layers);
    for (LayerWeights& lw : w.layers) {
        lw.w_q = Mat(d, d);
        lw.w_k = Mat(d, kv_dim);
        lw.w_v = Mat(d, kv_dim);
        lw.w_o = Mat(d, d);
        lw.ffn_in = Mat(d, 4 * d);
        lw.ffn_out = Mat(4 * d, d);
        fill_uniform(lw.w_q, rng, bound);
        fill_uniform(lw.w_k, rng, bound);
        fill_uniform(lw.w_v, rng, bound);
        fill_uniform(lw.w_o, rng, bound);
        fill_uniform(lw.ffn_in, rng, bound);
        fill_uniform(lw.ffn_out, rng, bound);
    }
    w.w_m = Mat(d, cfg.vocab);
    fill_uniform(w.w_m, rng, bound);
    return w;
}

std::vector<Vec> make_random_inputs(const ModelConfig& cfg, std::size_t count) {
    cfg.validate();
    const std::size_t d = cfg.dim();
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    Rng rng(cfg.seed ^ kInputStreamTag);
    std::vector<Vec> inputs(count, Vec(d));
    for (Vec& x : inputs) {
        for (double& v : x) {
            v = rng.uniform(-bound, bound);
        }
    }
    return inputs;
}

Vec ffn_forward(const Vec& x, const LayerWeights& lw) {
    Vec hidden = matvec_row(x, lw.ffn_in);
    for (double& v : hidden) {
        v = std::max(0.0, v);
    }
    return matvec_row(hidden, lw.ffn_out);
}

Vec attention_step(const Vec& q, const std::vector<Vec>& keys, double scale) {
    if (keys.empty()) {
        throw StateError("attention_step: empty key list");
    }
    Vec logits(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
        logits[i] = dot(q, keys[i]) * scale;
    }
    return softmax_row(logits);
}

LayerStepResult layer_forward(const Vec& x, const LayerKVCache& cache, const LayerWeights& lw,
                              const ModelConfig& cfg) {
    const std::size_t d = cfg.dim();
    const std::size_t dh = cfg.head_dim;
    if (x.size() != d) {
        throw DimensionError("layer_forward: input dim mismatch");
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const Vec q_full = matvec_row(x, lw.w_q);

    LayerStepResult out;
    out.attn_rows.resize(cfg.heads);
    out.queries.resize(cfg.heads);
    Vec context(d, 0.0);

    for (std::size_t h = 0; h < cfg.heads; ++h) {
        const std::size_t g = cfg.group_of(h);
        const std::size_t n = cache.length(g);
        if (n == 0) {
            throw StateError("layer_forward: empty cache for kv head " + std::to_string(g));
        }
        Vec q(q_full.begin() + static_cast<std::ptrdiff_t>(h * dh),
              q_full.begin() + static_cast<std::ptrdiff_t>((h + 1) * dh));
        out.queries[h] = q;

        const std::vector<std::size_t> live = cache.retained_indices(g);
        if (live.empty()) {
            throw StateError("layer_forward: all entries evicted for kv head " + std::to_string(g));
        }
        std::vector<Vec> keys;
        keys.reserve(live.size());
        for (std::size_t idx : live) {
            keys.push_back(cache.head(g).k[idx]);
        }
        const Vec weights = attention_step(q, keys, scale);

        Vec row(n, 0.0);
        for (std::size_t t = 0; t < live.size(); ++t) {
            row[live[t]] = weights[t];
            const Vec& v = cache.head(g).v[live[t]];
            for (std::size_t e = 0; e < dh; ++e) {
                context[h * dh + e] += weights[t] * v[e];
            }
        }
        out.attn_rows[h] = std::move(row);
    }

    out.y = matvec_row(context, lw.w_o);
    Vec f = ffn_forward(out.y, lw);
    out.x_next = out.y;
    for (std::size_t i = 0; i < d; ++i) {
        out.x_next[i] += f[i];
    }
    return out;
}

Vec forward_logits(const Vec& y_last, const ModelWeights& weights, const ModelConfig& cfg) {
    (void)cfg;
    const LayerWeights& last = weights.layers.back();
    Vec x = y_last;
    Vec f = ffn_forward(y_last, last);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] += f[i];
    }
    return softmax_row(matvec_row(x, weights.w_m));
}

PrefillResult prefill(const ModelConfig& cfg, const ModelWeights& weights, const std::vector<Vec>& inputs,
                      bool keep_full_attention) {
    cfg.validate();
    const std::size_t n = inputs.size();
    if (n <= cfg.window) {
        throw ConfigError("prefill: need more streams than the window, got " + std::to_string(n));
    }
    if (weights.layers.size() != cfg.layers) {
        throw DimensionError("prefill: layer count mismatch");
    }

    PrefillResult res;
    res.tokens = n;
    res.caches.reserve(cfg.layers);
    res.hidden.assign(cfg.layers + 1, std::vector<Vec>(n));
    res.recent.assign(cfg.layers, std::vector<RecentAttention>(cfg.heads));
    res.recent_queries.assign(cfg.layers, std::vector<std::vector<Vec>>(cfg.heads));
    if (keep_full_attention) {
        res.full_attention.assign(cfg.layers, std::vector<std::vector<Vec>>(cfg.heads));
    }
    res.hidden[0] = inputs;

    const std::size_t dh = cfg.head_dim;
    const std::size_t row_begin = n - 1 - cfg.window;  // first recorded stream

    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const LayerWeights& lw = weights.layers[l];
        LayerKVCache cache(cfg.kv_heads, dh, cfg.window);
        for (std::size_t i = 0; i < n; ++i) {
            const Vec& x = res.hidden[l][i];
            const Vec k_full = matvec_row(x, lw.w_k);
            const Vec v_full = matvec_row(x, lw.w_v);
            for (std::size_t g = 0; g < cfg.kv_heads; ++g) {
                Vec k(k_full.begin() + static_cast<std::ptrdiff_t>(g * dh),
                      k_full.begin() + static_cast<std::ptrdiff_t>((g + 1) * dh));
                Vec v(v_full.begin() + static_cast<std::ptrdiff_t>(g * dh),
                      v_full.begin() + static_cast<std::ptrdiff_t>((g + 1) * dh));
                cache.append_kv(g, k, v);
            }
            LayerStepResult step = layer_forward(x, cache, lw, cfg);
            res.hidden[l + 1][i] = std::move(step.x_next);

            const bool record = i >= row_begin;
            for (std::size_t h = 0; h < cfg.heads; ++h) {
                Vec padded;
                if (record || keep_full_attention) {
                    padded = step.attn_rows[h];
                    padded.resize(n, 0.0);
                }
                if (record) {
                    res.recent[l][h].rows.push_back(padded);
                    res.recent_queries[l][h].push_back(step.queries[h]);
                }
                if (keep_full_attention) {
                    res.full_attention[l][h].push_back(std::move(padded));
                }
            }
        }
        res.caches.push_back(std::move(cache));
    }
    return res;
}

}  // namespace kvlab
