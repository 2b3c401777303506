#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ccv {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of stream `stream` for run `index` under `master`.
///
///   seed = mix64(master ^ mix64(mix64(index) + stream))
///
/// Distinct (index, stream) pairs give statistically independent
/// mt19937_64 streams for all practical purposes.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index,
                                    std::uint64_t stream = 0) {
  return mix64(master ^ mix64(mix64(index) + stream));
}

// Uniform on the open interval (0, 1). Built from raw engine bits so the
// sequence is identical across standard libraries.
template <class Engine>
double uniform01(Engine& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

template <class Engine>
double exponential(Engine& rng, double rate) {
  return -std::log(uniform01(rng)) / rate;
}

}  // namespace ccv
