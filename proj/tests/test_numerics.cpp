// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "kvlab/numerics.hpp"
#include "oracles.hpp"

using namespace kvlab;

TEST_CASE("matmul identity and selector") {
    Mat id(2, 2);
    id.at(0, 0) = 1.0;
    id.at(1, 1) = 1.0;
    Mat m(2, 2);
    m.data = {1, 2, 3, 4};
    const Mat prod = matmul(id, m);
    CHECK(prod.data == m.data);

    Mat row(1, 2);
    row.data = {1, 0};
    Mat col(2, 1);
    col.data = {5, 7};
    const Mat sel = matmul(row, col);
    CHECK(sel.rows == 1);
    CHECK(sel.cols == 1);
    CHECK(sel.data[0] == 5.0);
}

TEST_CASE("matmul matches the naive triple loop") {
    Rng rng(101);
    const Mat a = oracle::random_mat(rng, 8, 8);
    const Mat b = oracle::random_mat(rng, 8, 8);
    const Mat got = matmul(a, b);
    const Mat want = oracle::matmul_naive(a, b);
    for (std::size_t i = 0; i < got.data.size(); ++i) {
        CHECK(std::fabs(got.data[i] - want.data[i]) <= 1e-12);
    }
    CHECK_THROWS_AS(matmul(Mat(2, 3), Mat(2, 3)), DimensionError);
}

TEST_CASE("softmax_row closed forms") {
    const Vec u = softmax_row({0.0, 0.0, 0.0});
    for (double v : u) {
        CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    }
    const Vec two = softmax_row({std::log(2.0), 0.0});
    CHECK(two[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(two[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK_THROWS_AS(softmax_row({}), DomainError);
}

TEST_CASE("softmax_row matches extended precision and is shift invariant") {
    Rng rng(202);
    for (int iter = 0; iter < 50; ++iter) {
        const Vec logits = oracle::random_vec(rng, 16, -6.0, 6.0);
        const Vec got = softmax_row(logits);
        const Vec want = oracle::softmax_longdouble(logits);
        double sum = 0.0;
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(std::fabs(got[i] - want[i]) <= 1e-12);
            CHECK(got[i] > 0.0);
            sum += got[i];
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-12);

        Vec shifted = logits;
        const double c = rng.uniform(-5.0, 5.0);
        for (double& v : shifted) {
            v += c;
        }
        const Vec got2 = softmax_row(shifted);
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(std::fabs(got[i] - got2[i]) <= 1e-12);
        }
    }
}

TEST_CASE("l1_norm definition and triangle inequality") {
    CHECK(l1_norm({1.0, -2.0, 3.0}) == 6.0);
    CHECK(l1_norm({0.0, 0.0}) == 0.0);

    Rng rng(303);
    for (int iter = 0; iter < 100; ++iter) {
        const Vec a = oracle::random_vec(rng, 12);
        const Vec b = oracle::random_vec(rng, 12);
        double direct = 0.0;
        Vec sum(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            direct += std::fabs(a[i]);
            sum[i] = a[i] + b[i];
        }
        CHECK(l1_norm(a) == doctest::Approx(direct).epsilon(1e-15));
        CHECK(l1_norm(sum) <= l1_norm(a) + l1_norm(b) + 1e-12);
    }
}

TEST_CASE("maxpool1d boundary clipping and brute-force equivalence") {
    CHECK(maxpool1d({1, 2, 3}, 3) == Vec{2, 3, 3});
    const Vec constant(9, 4.2);
    CHECK(maxpool1d(constant, 7) == constant);
    CHECK_THROWS_AS(maxpool1d({1, 2}, 4), ConfigError);

    Rng rng(404);
    const Vec s = oracle::random_vec(rng, 64);
    CHECK(maxpool1d(s, 7) == oracle::maxpool_bruteforce(s, 7));

    // Pooling twice never lowers an entry; constants are fixed points.
    const Vec once = maxpool1d(s, 7);
    const Vec twice = maxpool1d(once, 7);
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(twice[i] >= once[i]);
    }
}

TEST_CASE("top_k_indices ordering, ties, and full-sort oracle") {
    CHECK(top_k_indices({0.9, 0.1, 0.5}, 2) == std::vector<std::size_t>{0, 2});
    CHECK(top_k_indices({0.5, 0.5}, 1) == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(top_k_indices({1.0}, 2), DomainError);

    Rng rng(505);
    Vec s = oracle::random_vec(rng, 100);
    for (int i = 0; i < 20; ++i) {  // inject ties
        s[rng.index(100)] = s[rng.index(100)];
    }
    CHECK(top_k_indices(s, 10) == oracle::topk_fullsort(s, 10));
    CHECK(top_k_indices(s, 10) == top_k_indices(s, 10));
}

TEST_CASE("population_variance formulas") {
    CHECK(population_variance({0.1, 0.3}) == doctest::Approx(0.01).epsilon(1e-14));
    CHECK(population_variance(Vec(5, 2.5)) == 0.0);
    CHECK_THROWS_AS(population_variance({}), DomainError);

    Rng rng(606);
    const Vec xs = oracle::random_vec(rng, 33);
    CHECK(std::fabs(population_variance(xs) - oracle::variance_twopass(xs)) <= 1e-14);
}

TEST_CASE("cross_entropy closed forms and direct summation") {
    CHECK(std::fabs(cross_entropy({0.5, 0.5}, {0.5, 0.5}) - std::log(2.0)) <= 1e-11);
    CHECK(cross_entropy({1.0, 0.0}, {1.0, 0.0}) <= 1e-11);
    CHECK_THROWS_AS(cross_entropy({1.0}, {0.5, 0.5}), DimensionError);

    Rng rng(707);
    for (int iter = 0; iter < 50; ++iter) {
        const Vec p = oracle::random_distribution(rng, 10);
        const Vec q = oracle::random_distribution(rng, 10);
        CHECK(cross_entropy(p, q) == doctest::Approx(oracle::cross_entropy_direct(p, q)).epsilon(1e-12));
    }
}
