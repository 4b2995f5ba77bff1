// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvlab/trace.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace kvlab {

namespace {

constexpr char kMagic[4] = {'K', 'V', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

double round_f32(double v) {
    return static_cast<double>(static_cast<float>(v));
}

void round_f32(Mat& m) {
    for (double& v : m.data) {
        v = round_f32(v);
    }
}

void round_f32(std::vector<std::vector<Vec>>& t) {
    for (auto& outer : t) {
        for (Vec& vec : outer) {
            for (double& v : vec) {
                v = round_f32(v);
            }
        }
    }
}

struct Writer {
    std::vector<std::uint8_t> bytes;

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void f32(double v) {
        float f = static_cast<float>(v);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        u32(u);
    }
    void mat(const Mat& m) {
        for (double v : m.data) {
            f32(v);
        }
    }
    void nested(const std::vector<std::vector<Vec>>& t) {
        for (const auto& outer : t) {
            for (const Vec& vec : outer) {
                for (double v : vec) {
                    f32(v);
                }
            }
        }
    }
};

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    explicit Reader(const std::vector<std::uint8_t>& b) : bytes(b) {}

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) {
            throw IoError("trace: truncated file");
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        }
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        }
        pos += 8;
        return v;
    }
    double f32() {
        std::uint32_t u = u32();
        float f;
        std::memcpy(&f, &u, 4);
        return static_cast<double>(f);
    }
    void mat(Mat& m) {
        for (double& v : m.data) {
            v = f32();
        }
    }
    void nested(std::vector<std::vector<Vec>>& t, std::size_t outer, std::size_t mid, std::size_t inner) {
        t.assign(outer, std::vector<Vec>(mid, Vec(inner)));
        for (auto& o : t) {
            for (Vec& vec : o) {
                for (double& v : vec) {
                    v = f32();
                }
            }
        }
    }
};

}  // namespace

std::size_t trace_byte_size(const ModelConfig& cfg, std::size_t tokens) {
    const std::size_t d = cfg.dim();
    const std::size_t per_layer_front =
        cfg.kv_heads * tokens * cfg.head_dim * 2 + cfg.heads * (cfg.window + 1) * cfg.head_dim + d * d;
    const std::size_t per_layer_ffn = d * 4 * d + 4 * d * d;
    const std::size_t floats = cfg.layers * per_layer_front + d * cfg.vocab + cfg.layers * per_layer_ffn;
    return 4 + 8 * 4 + 8 + floats * 4;
}

TraceData make_trace(const ModelConfig& cfg, std::size_t tokens) {
    const ModelWeights weights = init_random_model(cfg);
    const std::vector<Vec> inputs = make_random_inputs(cfg, tokens);
    const PrefillResult pre = prefill(cfg, weights, inputs);

    TraceData t;
    t.cfg = cfg;
    t.tokens = tokens;
    t.layers.resize(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        TraceData::Layer& layer = t.layers[l];
        layer.k.assign(cfg.kv_heads, {});
        layer.v.assign(cfg.kv_heads, {});
        for (std::size_t g = 0; g < cfg.kv_heads; ++g) {
            layer.k[g] = pre.caches[l].head(g).k;
            layer.v[g] = pre.caches[l].head(g).v;
        }
        layer.recent_q = pre.recent_queries[l];
        layer.w_o = weights.layers[l].w_o;
        layer.ffn_in = weights.layers[l].ffn_in;
        layer.ffn_out = weights.layers[l].ffn_out;
        round_f32(layer.k);
        round_f32(layer.v);
        round_f32(layer.recent_q);
        round_f32(layer.w_o);
        round_f32(layer.ffn_in);
        round_f32(layer.ffn_out);
    }
    t.w_m = weights.w_m;
    round_f32(t.w_m);
    return t;
}

std::vector<std::uint8_t> serialize_trace(const TraceData& t) {
    Writer w;
    w.bytes.reserve(trace_byte_size(t.cfg, t.tokens));
    w.bytes.insert(w.bytes.end(), kMagic, kMagic + 4);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(t.cfg.layers));
    w.u32(static_cast<std::uint32_t>(t.cfg.heads));
    w.u32(static_cast<std::uint32_t>(t.cfg.kv_heads));
    w.u32(static_cast<std::uint32_t>(t.cfg.head_dim));
    w.u32(static_cast<std::uint32_t>(t.tokens));
    w.u32(static_cast<std::uint32_t>(t.cfg.window));
    w.u32(static_cast<std::uint32_t>(t.cfg.vocab));
    w.u64(t.cfg.seed);
    for (const TraceData::Layer& layer : t.layers) {
        w.nested(layer.k);
        w.nested(layer.v);
        w.nested(layer.recent_q);
        w.mat(layer.w_o);
    }
    w.mat(t.w_m);
    for (const TraceData::Layer& layer : t.layers) {
        w.mat(layer.ffn_in);
        w.mat(layer.ffn_out);
    }
    return std::move(w.bytes);
}

TraceData parse_trace(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    r.need(4);
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw IoError("trace: bad magic");
    }
    r.pos = 4;
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw IoError("trace: unsupported version " + std::to_string(version));
    }
    TraceData t;
    t.cfg.layers = r.u32();
    t.cfg.heads = r.u32();
    t.cfg.kv_heads = r.u32();
    t.cfg.head_dim = r.u32();
    t.tokens = r.u32();
    t.cfg.window = r.u32();
    t.cfg.vocab = r.u32();
    t.cfg.seed = r.u64();
    t.cfg.validate();
    if (bytes.size() != trace_byte_size(t.cfg, t.tokens)) {
        throw IoError("trace: size " + std::to_string(bytes.size()) + " does not match header-derived " +
                      std::to_string(trace_byte_size(t.cfg, t.tokens)));
    }
    const std::size_t d = t.cfg.dim();
    t.layers.resize(t.cfg.layers);
    for (TraceData::Layer& layer : t.layers) {
        r.nested(layer.k, t.cfg.kv_heads, t.tokens, t.cfg.head_dim);
        r.nested(layer.v, t.cfg.kv_heads, t.tokens, t.cfg.head_dim);
        r.nested(layer.recent_q, t.cfg.heads, t.cfg.window + 1, t.cfg.head_dim);
        layer.w_o = Mat(d, d);
        r.mat(layer.w_o);
    }
    t.w_m = Mat(d, t.cfg.vocab);
    r.mat(t.w_m);
    for (TraceData::Layer& layer : t.layers) {
        layer.ffn_in = Mat(d, 4 * d);
        layer.ffn_out = Mat(4 * d, d);
        r.mat(layer.ffn_in);
        r.mat(layer.ffn_out);
    }
    return t;
}

void write_trace_file(const TraceData& trace, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize_trace(trace);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("trace: cannot open " + path + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("trace: short write to " + path);
    }
}

TraceData read_trace_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) {
        throw IoError("trace: cannot open " + path);
    }
    const std::streamsize size = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) {
        throw IoError("trace: short read from " + path);
    }
    return parse_trace(bytes);
}

std::vector<RecentAttention> trace_recent_attention(const TraceData& trace, std::size_t layer) {
    const ModelConfig& cfg = trace.cfg;
    const TraceData::Layer& lt = trace.layers[layer];
    const std::size_t n = trace.tokens;
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
    std::vector<RecentAttention> recent(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        const std::size_t g = cfg.group_of(h);
        for (std::size_t t = 0; t <= cfg.window; ++t) {
            const std::size_t stream = n - 1 - cfg.window + t;
            const Vec& q = lt.recent_q[h][t];
            std::vector<Vec> keys(lt.k[g].begin(), lt.k[g].begin() + static_cast<std::ptrdiff_t>(stream + 1));
            Vec row = attention_step(q, keys, scale);
            row.resize(n, 0.0);
            recent[h].rows.push_back(std::move(row));
        }
    }
    return recent;
}

}  // namespace kvlab
