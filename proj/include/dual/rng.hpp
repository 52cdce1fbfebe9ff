#pragma once

#include <cstdint>
#include <random>

namespace dual {

using Rng = std::mt19937_64;

/// SplitMix64 output function (Steele, Lea & Flood).
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based seed derivation. `mix(base, t, r)` gives the seed of
/// stream `r` inside trial `t`; the value depends only on its arguments,
/// so any execution order reproduces the same draws.
constexpr std::uint64_t mix(std::uint64_t base, std::uint64_t stream) noexcept {
    return splitmix64(base ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

template <class... Rest>
constexpr std::uint64_t mix(std::uint64_t base, std::uint64_t stream, Rest... rest) noexcept {
    return mix(mix(base, stream), static_cast<std::uint64_t>(rest)...);
}

/// Stream indices used inside one pipeline run.
enum class Stream : std::uint64_t {
    Data = 1,
    Split = 2,
    TrainResample = 3,
    TestResample = 4,
    Bootstrap = 5,
};

constexpr std::uint64_t mix(std::uint64_t base, Stream stream) noexcept {
    return mix(base, static_cast<std::uint64_t>(stream));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

} // namespace dual
