// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace kvlab {

using Vec = std::vector<double>;

// Error taxonomy. The CLI maps these onto exit codes: config/infeasible -> 1,
// I/O -> 2, invariant violations detected during audited runs -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};
struct DomainError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct StateError : Error {
    using Error::Error;
};
struct ConstraintError : Error {
    using Error::Error;
};
struct InfeasibleBudgetError : ConfigError {
    using ConfigError::ConfigError;
};
struct FeasibilityError : ConfigError {
    using ConfigError::ConfigError;
};
struct IoError : Error {
    using Error::Error;
};

/**
 * @brief Deterministic uniform generator.
 *
 * mt19937_64 with an explicit 53-bit mantissa mapping. std::uniform_real_distribution
 * is implementation-defined, so the mapping is done by hand to keep streams
 * reproducible bit-for-bit across standard libraries.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : m_gen(seed) {}

    std::uint64_t next_u64() {
        return m_gen();
    }

    // [0, 1)
    double uniform() {
        return static_cast<double>(m_gen() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // [0, n)
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

private:
    std::mt19937_64 m_gen;
};

}  // namespace kvlab
