#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace patchmil {

using Rng = std::mt19937_64;

/// Independent generator derived from a top-level seed and a stream name
/// ("split", "init", "augment", "shuffle", ...). An optional index separates
/// per-item streams within a name.
Rng substream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

/// Uniform double in [lo, hi). Implemented directly on the raw engine output
/// so results do not depend on the standard library's distribution code.
double uniform(Rng& rng, double lo = 0.0, double hi = 1.0);

/// Standard normal via Box-Muller on `uniform`.
double normal(Rng& rng);

/// Uniform integer in [0, n).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

}  // namespace patchmil
