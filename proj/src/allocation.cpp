// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvlab/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kvlab/numerics.hpp"

namespace kvlab {

std::vector<std::size_t> apportion_largest_remainder(const Vec& weights, std::size_t total, std::size_t floor_each,
                                                     std::size_t cap_each) {
    const std::size_t n = weights.size();
    if (n == 0) {
        throw DomainError("apportion: no entries");
    }
    if (cap_each < floor_each) {
        throw ConfigError("apportion: cap below floor");
    }
    if (total < n * floor_each || total > n * cap_each) {
        throw InfeasibleBudgetError("apportion: total " + std::to_string(total) + " outside [" +
                                    std::to_string(n * floor_each) + ", " + std::to_string(n * cap_each) + "]");
    }
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w)) {
            throw DomainError("apportion: weights must be finite and >= 0");
        }
    }

    std::vector<double> share(n, 0.0);
    std::vector<int> state(n, 0);  // 0 = free, 1 = pinned at floor, 2 = pinned at cap
    while (true) {
        double wsum = 0.0;
        std::size_t free_count = 0;
        std::size_t pinned_total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (state[i] == 0) {
                wsum += weights[i];
                ++free_count;
            } else {
                pinned_total += state[i] == 1 ? floor_each : cap_each;
            }
        }
        if (free_count == 0) {
            break;
        }
        const double remaining = static_cast<double>(total - pinned_total);
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (state[i] != 0) {
                continue;
            }
            share[i] = wsum > 0.0 ? remaining * weights[i] / wsum : remaining / static_cast<double>(free_count);
            if (share[i] < static_cast<double>(floor_each)) {
                state[i] = 1;
                changed = true;
            } else if (share[i] > static_cast<double>(cap_each)) {
                state[i] = 2;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
    }

    std::vector<std::size_t> out(n, 0);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (state[i] == 1) {
            out[i] = floor_each;
        } else if (state[i] == 2) {
            out[i] = cap_each;
        } else {
            out[i] = static_cast<std::size_t>(share[i]);
        }
        assigned += out[i];
    }

    // Remainder seats by largest fractional part, lower index first.
    std::vector<std::size_t> free_idx;
    for (std::size_t i = 0; i < n; ++i) {
        if (state[i] == 0) {
            free_idx.push_back(i);
        }
    }
    std::stable_sort(free_idx.begin(), free_idx.end(), [&](std::size_t a, std::size_t b) {
        const double fa = share[a] - std::floor(share[a]);
        const double fb = share[b] - std::floor(share[b]);
        return fa > fb;
    });
    std::size_t seats = total - assigned;
    for (std::size_t i : free_idx) {
        if (seats == 0) {
            break;
        }
        if (out[i] < cap_each) {
            ++out[i];
            --seats;
        }
    }
    // Cap collisions can leave seats over; hand them to any entry with headroom.
    for (std::size_t i = 0; i < n && seats > 0; ++i) {
        while (out[i] < cap_each && seats > 0) {
            ++out[i];
            --seats;
        }
    }
    return out;
}

std::vector<std::size_t> uniform_layer_budgets(std::size_t total, std::size_t layers, std::size_t min_per_layer) {
    if (layers == 0) {
        throw DomainError("uniform_layer_budgets: no layers");
    }
    if (total < layers * min_per_layer) {
        throw InfeasibleBudgetError("uniform_layer_budgets: total below the window floor");
    }
    std::vector<std::size_t> out(layers, total / layers);
    for (std::size_t i = 0; i < total % layers; ++i) {
        ++out[i];
    }
    return out;
}

std::vector<std::size_t> pyramid_layer_budgets(std::size_t total, std::size_t layers, double beta,
                                               std::size_t min_per_layer, std::size_t max_per_layer) {
    if (beta < 1.0) {
        throw ConfigError("pyramid_layer_budgets: beta must be >= 1");
    }
    if (layers == 1) {
        if (total < min_per_layer || total > max_per_layer) {
            throw InfeasibleBudgetError("pyramid_layer_budgets: infeasible single-layer budget");
        }
        return {total};
    }
    const double b = static_cast<double>(total);
    const double last = b / (beta * static_cast<double>(layers));
    const double first = 2.0 * b / static_cast<double>(layers) - last;
    Vec real(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        real[l] = first - static_cast<double>(l) * (first - last) / static_cast<double>(layers - 1);
    }
    return apportion_largest_remainder(real, total, min_per_layer, max_per_layer);
}

double cake_spatial(const std::vector<RecentAttention>& heads) {
    double acc = 0.0;
    std::size_t rows = 0;
    for (const RecentAttention& head : heads) {
        for (const Vec& row : head.rows) {
            double h = 0.0;
            for (double a : row) {
                if (a > 0.0) {
                    h -= a * std::log(a);
                }
            }
            acc += h;
            ++rows;
        }
    }
    return rows == 0 ? 0.0 : acc / static_cast<double>(rows);
}

double cake_temporal(const std::vector<RecentAttention>& heads, std::size_t scored) {
    if (heads.empty()) {
        return 0.0;
    }
    double acc = 0.0;
    for (const RecentAttention& head : heads) {
        Vec samples(head.rows.size());
        for (std::size_t i = 0; i < scored; ++i) {
            for (std::size_t j = 0; j < head.rows.size(); ++j) {
                samples[j] = head.rows[j][i];
            }
            acc += population_variance(samples);
        }
    }
    return acc / static_cast<double>(heads.size());
}

std::vector<std::size_t> cake_layer_budgets(const Vec& spatial, const Vec& temporal, double gamma1, double gamma2,
                                            std::size_t total, std::size_t min_per_layer, std::size_t max_per_layer,
                                            bool* used_fallback) {
    if (gamma1 == 0.0 || gamma2 == 0.0) {
        throw ConfigError("cake_layer_budgets: gamma exponents must be nonzero");
    }
    if (spatial.size() != temporal.size()) {
        throw DimensionError("cake_layer_budgets: spatial/temporal length mismatch");
    }
    constexpr double floor_val = 1e-12;
    Vec p(spatial.size());
    double sum = 0.0;
    for (std::size_t l = 0; l < p.size(); ++l) {
        p[l] = std::pow(std::max(spatial[l], floor_val), 1.0 / gamma1) *
               std::pow(std::max(temporal[l], floor_val), 1.0 / gamma2);
        sum += p[l];
    }
    bool fallback = !(sum > 0.0) || !std::isfinite(sum);
    if (fallback) {
        std::fill(p.begin(), p.end(), 1.0);
    }
    if (used_fallback) {
        *used_fallback = fallback;
    }
    return apportion_largest_remainder(p, total, min_per_layer, max_per_layer);
}

Vec lava_normalized_scores(const std::vector<Vec>& score_rows, bool* used_fallback) {
    std::size_t count = 0;
    double sum = 0.0;
    for (const Vec& row : score_rows) {
        for (double s : row) {
            if (s < 0.0) {
                throw DomainError("lava_normalized_scores: negative score");
            }
            sum += s;
            ++count;
        }
    }
    if (count == 0) {
        throw DomainError("lava_normalized_scores: no scores");
    }
    Vec out;
    out.reserve(count);
    const bool fallback = !(sum > 0.0);
    if (used_fallback) {
        *used_fallback = fallback;
    }
    for (const Vec& row : score_rows) {
        for (double s : row) {
            out.push_back(fallback ? 1.0 / static_cast<double>(count) : s / sum);
        }
    }
    return out;
}

double lava_layer_entropy(const Vec& normalized, std::size_t heads, std::size_t tokens) {
    double h = 0.0;
    for (double p : normalized) {
        if (p > 0.0) {
            h -= p * std::log(p);
        }
    }
    return h / static_cast<double>(heads * tokens);
}

std::vector<std::size_t> entropy_layer_budgets(const Vec& entropies, std::size_t total, std::size_t min_per_layer,
                                               std::size_t max_per_layer) {
    double sum = 0.0;
    for (double e : entropies) {
        sum += e;
    }
    if (!(sum > 0.0)) {
        throw DomainError("entropy_layer_budgets: entropies must sum to > 0");
    }
    return apportion_largest_remainder(entropies, total, min_per_layer, max_per_layer);
}

std::vector<std::size_t> adakv_head_budgets(const std::vector<Vec>& head_scores, std::size_t layer_budget,
                                            std::size_t window) {
    const std::size_t heads = head_scores.size();
    if (heads == 0) {
        throw DomainError("adakv_head_budgets: no heads");
    }
    if (layer_budget < heads * window) {
        throw InfeasibleBudgetError("adakv_head_budgets: layer budget below the window floor");
    }
    const std::size_t quota = layer_budget - heads * window;
    Vec flat;
    std::vector<std::size_t> owner;
    for (std::size_t h = 0; h < heads; ++h) {
        for (double s : head_scores[h]) {
            flat.push_back(s);
            owner.push_back(h);
        }
    }
    if (quota > flat.size()) {
        throw InfeasibleBudgetError("adakv_head_budgets: quota exceeds scored entries");
    }
    std::vector<std::size_t> budgets(heads, window);
    for (std::size_t idx : top_k_indices(flat, quota)) {
        ++budgets[owner[idx]];
    }
    return budgets;
}

}  // namespace kvlab
