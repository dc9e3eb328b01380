#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedsim {

// All randomness in the simulator flows through generators seeded here.
// Streams are derived by hashing the experiment seed with fixed stream tags
// (and indices such as client id / round), so results do not depend on the
// order in which streams are consumed or on thread scheduling.

namespace stream {
// Tags for deriving independent RNG streams from one experiment seed.
inline constexpr std::uint64_t dataset = 0xD5;
inline constexpr std::uint64_t test_split = 0xD6;
inline constexpr std::uint64_t partition = 0xA7;
inline constexpr std::uint64_t attackers = 0xB3;
inline constexpr std::uint64_t init = 0x11;
inline constexpr std::uint64_t client_train = 0xC1;
inline constexpr std::uint64_t client_noise = 0xC2;
inline constexpr std::uint64_t participation = 0xE4;
inline constexpr std::uint64_t metaval = 0xF0;
inline constexpr std::uint64_t sweep = 0x5E;
}  // namespace stream

// splitmix64 finalizer; good avalanche, cheap.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (std::uint64_t p : parts) h = mix64(h ^ p);
    return h;
}

inline std::mt19937_64 make_rng(std::initializer_list<std::uint64_t> parts) {
    return std::mt19937_64(mix_seed(parts));
}

}  // namespace fedsim
