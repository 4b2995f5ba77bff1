// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kvlab/numerics.hpp"
#include "kvlab/toymodel.hpp"

namespace kvlab {

/**
 * @brief KVT1 trace: a prefilled toy-model snapshot for offline loss evaluation.
 *
 * Binary layout, all little-endian:
 *   magic "KVT1"
 *   u32 version (=1), L, H, H_kv, d_h, N, w, vocab
 *   u64 seed
 *   per layer: K [H_kv x N x d_h] f32, V [H_kv x N x d_h] f32,
 *              Q [H x (w+1) x d_h] f32 (queries of the last w+1 streams,
 *              oldest first), W_O [d x d] f32 row-major
 *   W_M [d x vocab] f32
 *   per layer: FFN_in [d x 4d] f32, FFN_out [4d x d] f32
 *
 * Values are stored as 32-bit floats; the in-memory form below keeps them as
 * doubles that are exactly representable in f32, so write(read(x)) is
 * byte-identical.
 */
struct TraceData {
    ModelConfig cfg;
    std::size_t tokens = 0;

    struct Layer {
        std::vector<std::vector<Vec>> k;         // [H_kv][N][d_h]
        std::vector<std::vector<Vec>> v;         // [H_kv][N][d_h]
        std::vector<std::vector<Vec>> recent_q;  // [H][w+1][d_h]
        Mat w_o;
        Mat ffn_in;
        Mat ffn_out;
    };
    std::vector<Layer> layers;
    Mat w_m;
};

// Exact byte length of a serialized trace with these dimensions.
std::size_t trace_byte_size(const ModelConfig& cfg, std::size_t tokens);

// Builds the toy model from cfg.seed, prefills `tokens` streams, and rounds
// everything through f32.
TraceData make_trace(const ModelConfig& cfg, std::size_t tokens);

std::vector<std::uint8_t> serialize_trace(const TraceData& trace);
TraceData parse_trace(const std::vector<std::uint8_t>& bytes);

void write_trace_file(const TraceData& trace, const std::string& path);
TraceData read_trace_file(const std::string& path);

// Causal attention rows of the last w+1 streams, recomputed from the stored
// queries and keys and padded to length N.
std::vector<RecentAttention> trace_recent_attention(const TraceData& trace, std::size_t layer);

}  // namespace kvlab
