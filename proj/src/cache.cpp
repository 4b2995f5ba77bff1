// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvlab/cache.hpp"

#include <algorithm>

namespace kvlab {

void LayerKVCache::append_kv(std::size_t head, const Vec& key, const Vec& value) {
    if (head >= m_heads.size()) {
        throw DimensionError("append_kv: head index out of range");
    }
    if (key.size() != m_head_dim || value.size() != m_head_dim) {
        throw DimensionError("append_kv: vector dim " + std::to_string(key.size()) + " vs head_dim " +
                             std::to_string(m_head_dim));
    }
    HeadCache& hc = m_heads[head];
    hc.k.push_back(key);
    hc.v.push_back(value);
    hc.retained.push_back(1);
}

void LayerKVCache::apply_mask(const EvictionMask& mask) {
    if (mask.bits.size() != m_heads.size()) {
        throw DimensionError("apply_mask: head count mismatch");
    }
    for (std::size_t h = 0; h < m_heads.size(); ++h) {
        if (mask.bits[h].size() != length(h)) {
            throw DimensionError("apply_mask: position count mismatch on head " + std::to_string(h));
        }
        const std::size_t wstart = window_start(h);
        for (std::size_t i = wstart; i < length(h); ++i) {
            if (!mask.bits[h][i]) {
                throw ConstraintError("apply_mask: mask clears window position " + std::to_string(i) + " of head " +
                                      std::to_string(h));
            }
        }
    }
    for (std::size_t h = 0; h < m_heads.size(); ++h) {
        HeadCache& hc = m_heads[h];
        hc.retained.assign(mask.bits[h].begin(), mask.bits[h].end());
        auto dropped = [&](const std::pair<std::size_t, double>& e) { return !hc.retained[e.first]; };
        hc.scores.erase(std::remove_if(hc.scores.begin(), hc.scores.end(), dropped), hc.scores.end());
    }
}

std::size_t LayerKVCache::retained_count() const {
    std::size_t n = 0;
    for (const auto& hc : m_heads) {
        for (std::uint8_t b : hc.retained) {
            n += b;
        }
    }
    return n;
}

std::vector<std::size_t> LayerKVCache::retained_indices(std::size_t head) const {
    const HeadCache& hc = m_heads[head];
    std::vector<std::size_t> out;
    out.reserve(hc.retained.size());
    for (std::size_t i = 0; i < hc.retained.size(); ++i) {
        if (hc.retained[i]) {
            out.push_back(i);
        }
    }
    return out;
}

void LayerKVCache::set_retained_scores(std::size_t head, const Vec& scored_row) {
    HeadCache& hc = m_heads[head];
    const std::size_t wstart = window_start(head);
    if (scored_row.size() != wstart) {
        throw DimensionError("set_retained_scores: row length " + std::to_string(scored_row.size()) +
                             " vs scored positions " + std::to_string(wstart));
    }
    hc.scores.clear();
    for (std::size_t i = 0; i < wstart; ++i) {
        if (hc.retained[i]) {
            hc.scores.emplace_back(i, scored_row[i]);
        }
    }
}

LayerKVCache LayerKVCache::compacted_copy() const {
    LayerKVCache out(m_heads.size(), m_head_dim, m_window);
    for (std::size_t h = 0; h < m_heads.size(); ++h) {
        const HeadCache& hc = m_heads[h];
        for (std::size_t i = 0; i < hc.k.size(); ++i) {
            if (hc.retained[i]) {
                out.append_kv(h, hc.k[i], hc.v[i]);
            }
        }
    }
    return out;
}

}  // namespace kvlab
