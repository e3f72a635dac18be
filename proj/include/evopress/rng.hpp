#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace evopress {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a root seed and a key path such
/// as (generation, stage). Different key paths give unrelated streams.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = mix64(seed);
    for (std::uint64_t k : keys) {
        h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
    }
    return h;
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    return Rng(derive_seed(seed, keys));
}

// Stream tags, so that e.g. the mutation stream of generation 3 never
// collides with the batch stream of generation 3.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kMutation = 2;
inline constexpr std::uint64_t kBatch = 3;
inline constexpr std::uint64_t kNoise = 4;
inline constexpr std::uint64_t kTrial = 5;
}  // namespace stream

}  // namespace evopress
