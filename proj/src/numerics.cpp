// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kvlab {

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) {
        throw DimensionError("matmul: shape mismatch " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                             " * " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
    }
    Mat out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) {
                continue;
            }
            const double* brow = b.row_ptr(k);
            double* orow = out.data.data() + i * out.cols;
            for (std::size_t j = 0; j < b.cols; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

Vec matvec_row(const Vec& x, const Mat& m) {
    if (x.size() != m.rows) {
        throw DimensionError("matvec_row: vector length " + std::to_string(x.size()) + " vs matrix rows " +
                             std::to_string(m.rows));
    }
    Vec out(m.cols, 0.0);
    for (std::size_t k = 0; k < m.rows; ++k) {
        const double xk = x[k];
        if (xk == 0.0) {
            continue;
        }
        const double* mrow = m.row_ptr(k);
        for (std::size_t j = 0; j < m.cols; ++j) {
            out[j] += xk * mrow[j];
        }
    }
    return out;
}

Vec softmax_row(const Vec& logits) {
    if (logits.empty()) {
        throw DomainError("softmax_row: empty input");
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    Vec out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) {
        v /= sum;
    }
    return out;
}

double l1_norm(const Vec& v) {
    double s = 0.0;
    for (double x : v) {
        s += std::fabs(x);
    }
    return s;
}

double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot: length mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

Vec maxpool1d(const Vec& s, std::size_t kernel) {
    if (kernel == 0 || kernel % 2 == 0) {
        throw ConfigError("maxpool1d: kernel must be odd and >= 1, got " + std::to_string(kernel));
    }
    const std::size_t n = s.size();
    const std::size_t half = kernel / 2;
    Vec out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n, i + half + 1);
        double m = s[lo];
        for (std::size_t j = lo + 1; j < hi; ++j) {
            m = std::max(m, s[j]);
        }
        out[i] = m;
    }
    return out;
}

std::vector<std::size_t> top_k_indices(const Vec& s, std::size_t k) {
    if (k > s.size()) {
        throw DomainError("top_k_indices: k=" + std::to_string(k) + " exceeds length " + std::to_string(s.size()));
    }
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    idx.resize(k);
    return idx;
}

double population_variance(const Vec& xs) {
    if (xs.empty()) {
        throw DomainError("population_variance: empty input");
    }
    double mean = 0.0;
    for (double x : xs) {
        mean += x;
    }
    mean /= static_cast<double>(xs.size());
    double acc = 0.0;
    for (double x : xs) {
        const double d = x - mean;
        acc += d * d;
    }
    return acc / static_cast<double>(xs.size());
}

double cross_entropy(const Vec& p, const Vec& q) {
    if (p.size() != q.size()) {
        throw DimensionError("cross_entropy: length mismatch");
    }
    double ps = 0.0;
    double qs = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0) {
            throw DomainError("cross_entropy: negative probability entry");
        }
        ps += p[i];
        qs += q[i];
    }
    if (std::fabs(ps - 1.0) > 1e-9 || std::fabs(qs - 1.0) > 1e-9) {
        throw DomainError("cross_entropy: inputs are not probability vectors");
    }
    constexpr double eps = 1e-12;
    double ce = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            ce -= p[i] * std::log(q[i] + eps);
        }
    }
    return ce;
}

}  // namespace kvlab
