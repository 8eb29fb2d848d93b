#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gpabc {

using Rng = std::mt19937_64;

/// Derives an independent generator from a root seed, a stream name and an index.
///
/// Every stage of a run draws from its own named stream ("design", "sim",
/// "bootstrap", "mcmc", ...), and per-point simulation streams are keyed by the
/// point's Sobol index, so results do not depend on evaluation order or on
/// how many threads were used.
Rng make_stream(std::uint64_t root_seed, std::string_view name, std::uint64_t index = 0);

std::uint64_t splitmix64(std::uint64_t x);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace gpabc
