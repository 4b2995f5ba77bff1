// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations the tests check the library against.
// Everything here is written straight from the definitions, with extended
// precision where it is cheap, and stays independent of the code paths under
// test.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "kvlab/cache.hpp"
#include "kvlab/common.hpp"
#include "kvlab/numerics.hpp"

namespace oracle {

using kvlab::Mat;
using kvlab::Vec;

inline Mat matmul_naive(const Mat& a, const Mat& b) {
    Mat out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            long double acc = 0.0L;
            for (std::size_t k = 0; k < a.cols; ++k) {
                acc += static_cast<long double>(a.at(i, k)) * static_cast<long double>(b.at(k, j));
            }
            out.at(i, j) = static_cast<double>(acc);
        }
    }
    return out;
}

inline Vec softmax_longdouble(const Vec& logits) {
    long double mx = logits[0];
    for (double v : logits) {
        mx = std::max(mx, static_cast<long double>(v));
    }
    std::vector<long double> e(logits.size());
    long double sum = 0.0L;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(static_cast<long double>(logits[i]) - mx);
        sum += e[i];
    }
    Vec out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = static_cast<double>(e[i] / sum);
    }
    return out;
}

inline Vec maxpool_bruteforce(const Vec& s, std::size_t kernel) {
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kernel / 2);
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(s.size());
    Vec out(s.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::ptrdiff_t j = i - half; j <= i + half; ++j) {
            if (j >= 0 && j < n) {
                m = std::max(m, s[static_cast<std::size_t>(j)]);
            }
        }
        out[static_cast<std::size_t>(i)] = m;
    }
    return out;
}

// Full sort with the same (value desc, index asc) rule.
inline std::vector<std::size_t> topk_fullsort(const Vec& s, std::size_t k) {
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (s[a] != s[b]) {
            return s[a] > s[b];
        }
        return a < b;
    });
    idx.resize(k);
    return idx;
}

inline double variance_twopass(const Vec& xs) {
    long double mean = 0.0L;
    for (double x : xs) {
        mean += x;
    }
    mean /= static_cast<long double>(xs.size());
    long double acc = 0.0L;
    for (double x : xs) {
        acc += (x - mean) * (x - mean);
    }
    return static_cast<double>(acc / static_cast<long double>(xs.size()));
}

inline double cross_entropy_direct(const Vec& p, const Vec& q) {
    long double ce = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            ce -= static_cast<long double>(p[i]) * std::log(static_cast<long double>(q[i]) + 1e-12L);
        }
    }
    return static_cast<double>(ce);
}

inline Vec random_vec(kvlab::Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    Vec v(n);
    for (double& x : v) {
        x = rng.uniform(lo, hi);
    }
    return v;
}

inline Mat random_mat(kvlab::Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
    Mat m(rows, cols);
    for (double& x : m.data) {
        x = rng.uniform(lo, hi);
    }
    return m;
}

// Random probability vector (softmax of random logits).
inline Vec random_distribution(kvlab::Rng& rng, std::size_t n) {
    return softmax_longdouble(random_vec(rng, n, -3.0, 3.0));
}

// Random window-respecting mask: window bits on, each scored bit kept with
// probability `keep`, at least one scored bit retained overall when any exist.
inline kvlab::EvictionMask random_window_mask(kvlab::Rng& rng, std::size_t kv_heads, std::size_t positions,
                                              std::size_t window, double keep = 0.5) {
    kvlab::EvictionMask m;
    m.bits.assign(kv_heads, std::vector<std::uint8_t>(positions, 0));
    const std::size_t wstart = positions > window ? positions - window : 0;
    for (std::size_t g = 0; g < kv_heads; ++g) {
        for (std::size_t i = wstart; i < positions; ++i) {
            m.bits[g][i] = 1;
        }
        for (std::size_t i = 0; i < wstart; ++i) {
            m.bits[g][i] = rng.uniform() < keep ? 1 : 0;
        }
    }
    return m;
}

}  // namespace oracle
