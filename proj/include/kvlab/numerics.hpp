// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "kvlab/common.hpp"

namespace kvlab {

// Dense row-major matrix of 64-bit reals. All internal compute is double
// precision; 32-bit floats appear only at the trace-file boundary.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) {
        return data[r * cols + c];
    }
    double at(std::size_t r, std::size_t c) const {
        return data[r * cols + c];
    }

    const double* row_ptr(std::size_t r) const {
        return data.data() + r * cols;
    }
};

Mat matmul(const Mat& a, const Mat& b);

// y = x * m for a row vector x (len == m.rows).
Vec matvec_row(const Vec& x, const Mat& m);

// Numerically stable softmax (max subtraction). Throws DomainError on empty input.
Vec softmax_row(const Vec& logits);

double l1_norm(const Vec& v);

double dot(const Vec& a, const Vec& b);

// Sliding max of odd width `kernel`, stride 1, window clipped at the edges so
// that constant inputs are fixed points. Throws ConfigError on even kernels.
Vec maxpool1d(const Vec& s, std::size_t kernel);

// Indices of the k largest entries, ordered by value descending; ties go to
// the smaller index. Deterministic. Throws DomainError if k > s.size().
std::vector<std::size_t> top_k_indices(const Vec& s, std::size_t k);

// Divisor-n variance. Throws DomainError on empty input.
double population_variance(const Vec& xs);

// -sum p[i] * ln(q[i] + 1e-12). Both arguments must be probability vectors of
// equal length (sums checked to 1e-9).
double cross_entropy(const Vec& p, const Vec& q);

}  // namespace kvlab
