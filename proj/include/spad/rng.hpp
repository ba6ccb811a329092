// Deterministic per-pixel random streams. Each pixel derives its own engine
// from (seed, purpose, stream index), so results do not depend on how work is
// scheduled across threads.
#pragma once

#include <cstdint>
#include <random>

namespace spad {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum class RngPurpose : std::uint64_t {
  montecarlo = 1,
  expectation = 2,
};

inline std::mt19937_64 make_stream(std::uint64_t seed, RngPurpose purpose,
                                   std::uint64_t stream) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s ^= static_cast<std::uint64_t>(purpose) * 0xda942042e4dd58b5ULL;
  std::uint64_t b = splitmix64(s);
  s ^= stream * 0xd6e8feb86659fd93ULL;
  std::uint64_t c = splitmix64(s);
  return std::mt19937_64(a ^ (b << 1) ^ (c << 2));
}

}  // namespace spad
