// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvlab/scoring.hpp"

#include <algorithm>

namespace kvlab {

namespace {

void check_window_rows(const RecentAttention& recent, std::size_t window, std::size_t scored) {
    if (recent.rows.size() != window + 1) {
        throw StateError("scoring: need window+1 attention rows, have " + std::to_string(recent.rows.size()));
    }
    for (const Vec& row : recent.rows) {
        if (row.size() < scored) {
            throw DimensionError("scoring: attention row shorter than scored range");
        }
    }
}

}  // namespace

double value_norm_max(const std::vector<Vec>& values) {
    if (values.empty()) {
        throw DomainError("value_norm_max: empty value list");
    }
    double best = 0.0;
    for (const Vec& v : values) {
        best = std::max(best, l1_norm(v));
    }
    return best;
}

Vec lava_score(const RecentAttention& recent, double value_norm, std::size_t window, std::size_t scored) {
    check_window_rows(recent, window, scored);
    Vec s(scored, 0.0);
    for (const Vec& row : recent.rows) {
        for (std::size_t i = 0; i < scored; ++i) {
            s[i] += row[i];
        }
    }
    const double scale = value_norm / static_cast<double>(window);
    for (double& v : s) {
        v *= scale;
    }
    return s;
}

Vec snapkv_score(const RecentAttention& recent, std::size_t window, std::size_t scored) {
    return lava_score(recent, 1.0, window, scored);
}

Vec h2o_score(const std::vector<Vec>& full_rows) {
    const std::size_t n = full_rows.size();
    for (const Vec& row : full_rows) {
        if (row.size() != n) {
            throw StateError("h2o_score: needs all rows padded to the sequence length");
        }
    }
    Vec s(n, 0.0);
    for (std::size_t j = 1; j < n; ++j) {
        for (std::size_t i = 0; i < j; ++i) {
            s[i] += full_rows[j][i];
        }
    }
    return s;
}

Vec tova_score(const Vec& last_row, std::size_t scored) {
    if (last_row.size() < scored) {
        throw DimensionError("tova_score: row shorter than scored range");
    }
    return Vec(last_row.begin(), last_row.begin() + static_cast<std::ptrdiff_t>(scored));
}

Vec cake_score(const RecentAttention& recent, std::size_t window, double gamma, std::size_t scored) {
    if (gamma < 0.0) {
        throw ConfigError("cake_score: gamma must be >= 0");
    }
    check_window_rows(recent, window, scored);
    Vec s = snapkv_score(recent, window, scored);
    Vec samples(recent.rows.size());
    for (std::size_t i = 0; i < scored; ++i) {
        for (std::size_t j = 0; j < recent.rows.size(); ++j) {
            samples[j] = recent.rows[j][i];
        }
        s[i] += gamma * population_variance(samples);
    }
    return s;
}

Vec vatp_score(const RecentAttention& recent, std::size_t window, const std::vector<Vec>& values,
               std::size_t scored) {
    check_window_rows(recent, window, scored);
    if (values.size() < scored) {
        throw DimensionError("vatp_score: fewer value vectors than scored positions");
    }
    Vec s = snapkv_score(recent, window, scored);
    for (std::size_t i = 0; i < scored; ++i) {
        s[i] *= l1_norm(values[i]);
    }
    return s;
}

Vec pool_scores(const Vec& scores, std::size_t kernel) {
    return maxpool1d(scores, kernel);
}

Vec gqa_reduce_max(const std::vector<Vec>& group_scores) {
    if (group_scores.empty()) {
        throw DimensionError("gqa_reduce_max: empty group");
    }
    const std::size_t n = group_scores.front().size();
    Vec out = group_scores.front();
    for (std::size_t g = 1; g < group_scores.size(); ++g) {
        if (group_scores[g].size() != n) {
            throw DimensionError("gqa_reduce_max: ragged rows");
        }
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = std::max(out[i], group_scores[g][i]);
        }
    }
    return out;
}

double theorem1_term(double attention_weight, double value_norm) {
    return attention_weight * value_norm;
}

}  // namespace kvlab
