#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace crashgan {

using Rng = std::mt19937_64;

// Derives an independent stream seed from a master seed, a stream label and a
// replication index (splitmix64 over an FNV-1a hash of the label).
std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t master, std::string_view label, std::uint64_t index = 0) {
  return Rng(derive_seed(master, label, index));
}

// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

}  // namespace crashgan
