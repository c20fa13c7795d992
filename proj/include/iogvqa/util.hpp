#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace iog {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Independent, reproducible seed for a named random stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::string_view stream) { return Rng(derive_seed(seed, stream)); }

}  // namespace iog
