// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "kvlab/cache.hpp"
#include "kvlab/common.hpp"
#include "kvlab/numerics.hpp"
#include "kvlab/scoring.hpp"

namespace kvlab {

/**
 * @brief Dimensions and seed of the toy decoder.
 *
 * Inputs are synthetic seeded hidden vectors, not token embeddings; the cache
 * mechanics never touch a tokenizer. The model dimension is heads * head_dim.
 */
struct ModelConfig {
    std::size_t layers = 1;    // L
    std::size_t heads = 1;     // H (query heads)
    std::size_t kv_heads = 1;  // H_kv (GQA groups)
    std::size_t head_dim = 1;  // d_h
    std::size_t window = 1;    // w
    std::size_t vocab = 1;
    std::uint64_t seed = 0;

    std::size_t dim() const {
        return heads * head_dim;
    }
    std::size_t group_size() const {
        return heads / kv_heads;
    }
    // Query head h reads this kv slot.
    std::size_t group_of(std::size_t h) const {
        return h / group_size();
    }

    void validate() const;
};

struct LayerWeights {
    Mat w_q;      // d x d
    Mat w_k;      // d x (kv_heads * head_dim)
    Mat w_v;      // d x (kv_heads * head_dim)
    Mat w_o;      // d x d
    Mat ffn_in;   // d x 4d
    Mat ffn_out;  // 4d x d
};

struct ModelWeights {
    std::vector<LayerWeights> layers;
    Mat w_m;  // d x vocab
};

/**
 * Draws all weights i.i.d. uniform[-1/sqrt(d), 1/sqrt(d)] from Rng(cfg.seed),
 * in declaration order per layer (w_q, w_k, w_v, w_o, ffn_in, ffn_out) and
 * finally w_m, filling each matrix row-major. Same seed, same weights.
 */
ModelWeights init_random_model(const ModelConfig& cfg);

// Synthetic input streams: `count` d-vectors, i.i.d. uniform[-1/sqrt(d), 1/sqrt(d)]
// from a separate stream derived from cfg.seed.
std::vector<Vec> make_random_inputs(const ModelConfig& cfg, std::size_t count);

// relu(x * ffn_in) * ffn_out
Vec ffn_forward(const Vec& x, const LayerWeights& lw);

// softmax(q . K^T * scale) over the given keys.
Vec attention_step(const Vec& q, const std::vector<Vec>& keys, double scale);

struct LayerStepResult {
    Vec y;                       // attention output, length d
    Vec x_next;                  // y + FFN(y)
    std::vector<Vec> attn_rows;  // per query head, over the head's stored positions
                                 // (zero at evicted positions, renormalized over retained)
    std::vector<Vec> queries;    // per query head, length head_dim
};

/**
 * One decode step over an already-updated cache (the caller appends this
 * stream's K/V first). Attention reads only retained entries; the layer output
 * feeds the next layer as y + FFN(y) with no input residual.
 */
LayerStepResult layer_forward(const Vec& x, const LayerKVCache& cache, const LayerWeights& lw,
                              const ModelConfig& cfg);

// softmax((y_last + FFN(y_last)) * w_m) using the last layer's FFN.
Vec forward_logits(const Vec& y_last, const ModelWeights& weights, const ModelConfig& cfg);

struct PrefillResult {
    std::vector<LayerKVCache> caches;
    // hidden[l][i] = input of layer l for stream i; hidden[L][i] is the final
    // residual output of stream i.
    std::vector<std::vector<Vec>> hidden;
    // Window attention rows per layer / query head (rows for the last window+1
    // streams, padded to length N). The full N x N attention is not retained
    // unless keep_full_attention is set.
    std::vector<std::vector<RecentAttention>> recent;
    // Queries of the last window+1 streams per layer / query head.
    std::vector<std::vector<std::vector<Vec>>> recent_queries;
    // Only filled when requested (accumulated-score policies need it): rows for
    // every stream, padded to length N. Indexed [layer][head][stream].
    std::vector<std::vector<std::vector<Vec>>> full_attention;

    std::size_t tokens = 0;

    const Vec& last_attention_row(std::size_t layer, std::size_t head) const {
        return recent[layer][head].last_row();
    }
};

/**
 * Causal prefill of all N streams, layer by layer. Each layer's cache ends up
 * with N entries per kv head; attention rows are recorded for the last
 * window+1 streams. Throws ConfigError when N <= window.
 */
PrefillResult prefill(const ModelConfig& cfg, const ModelWeights& weights, const std::vector<Vec>& inputs,
                      bool keep_full_attention = false);

// Number of scored (pre-window) positions for a sequence of length n.
inline std::size_t scored_positions(std::size_t n, std::size_t window) {
    return n > window ? n - window : 0;
}

}  // namespace kvlab
