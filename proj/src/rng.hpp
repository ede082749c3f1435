// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

#include "textio.hpp"

namespace kvbudget {

/// Seeded stream with distribution code pinned here rather than in the
/// standard library, whose distributions are implementation-defined. Outputs
/// are identical across compilers for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : m_engine(seed) {}

    std::uint64_t next() { return m_engine(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(m_engine() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [lo, hi).
    std::uint64_t below(std::uint64_t lo, std::uint64_t hi) { return lo + m_engine() % (hi - lo); }

    /// Standard normal via Box-Muller; no cached second variate.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 m_engine;
};

/// Derives an independent stream seed for a named purpose.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
    std::uint64_t z = fnv1a64(purpose, seed ^ 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace kvbudget
