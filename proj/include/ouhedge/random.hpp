#pragma once

#include <cstdint>
#include <random>

namespace ouhedge {

using Engine = std::mt19937_64;

// splitmix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed-splitting rule: child = mix(master ^ mix(index + 1)). Path p of a run
// with master seed s always sees derive_seed(s, p), independent of how paths
// are scheduled.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return mix_seed(master ^ mix_seed(index + 1));
}

// Sub-streams of one path.
enum class Stream : std::uint64_t { jumps = 1, brownian = 2, inner = 3 };

constexpr std::uint64_t stream_seed(std::uint64_t path_seed, Stream s) noexcept {
    return derive_seed(path_seed, static_cast<std::uint64_t>(s));
}

}  // namespace ouhedge
