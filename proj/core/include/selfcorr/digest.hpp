#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace selfcorr {

/// Hex-encoded SHA-256 of `data`. Used for cache keys and config digests.
std::string sha256_hex(std::string_view data);

/// FNV-1a 64-bit over bytes. Platform-independent, unlike std::hash.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer; decorrelates sequential FNV states.
std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic counter-based randomness. Every draw is a pure function of
/// the key parts, so results do not depend on call order or threading.
class StableRng {
public:
    /// Collapse key parts into one 64-bit state.
    static std::uint64_t key(std::uint64_t seed, std::initializer_list<std::string_view> parts);

    /// Uniform double in [0, 1) for the given key.
    static double uniform01(std::uint64_t key);

    /// Uniform integer in [0, n) for the given key. n must be > 0.
    static std::uint64_t uniform_below(std::uint64_t key, std::uint64_t n);
};

}  // namespace selfcorr
