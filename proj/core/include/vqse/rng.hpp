// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VQSE_RNG_HPP_
#define VQSE_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace vqse {

using Rng = std::mt19937_64;

// Seed splitting rule: each component draws its stream seed as
//   splitmix64(master ^ fnv1a64(stream_name))
// so adding a stream never perturbs the draws of existing streams.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
  return splitmix64(master ^ fnv1a64(stream));
}

inline Rng make_stream(std::uint64_t master, std::string_view stream) {
  return Rng(derive_seed(master, stream));
}

}  // namespace vqse

#endif  // VQSE_RNG_HPP_
