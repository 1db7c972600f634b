#pragma once

#include <cstdint>
#include <random>

namespace glarmix {

// splitmix64 step; used to derive independent engine seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Independent per-series stream: the draw sequence for series j depends only on
// (seed, j), never on scheduling or on other series, so simulated panels are
// reproducible across runs and worker counts.
inline std::mt19937_64 series_stream(std::uint64_t seed, std::uint64_t series_index) {
  std::uint64_t s = seed ^ (0xd1342543de82ef95ULL * (series_index + 1));
  std::uint64_t a = splitmix64(s);
  std::uint64_t b = splitmix64(s);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

// Uniform on [0,1) with 53 random bits.
inline double draw_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller without pair caching; costs two uniforms per draw but keeps the
// stream position a pure function of the draw count.
inline double draw_normal(std::mt19937_64& rng) {
  double u1 = draw_uniform(rng);
  while (u1 <= 0.0) u1 = draw_uniform(rng);
  const double u2 = draw_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace glarmix
