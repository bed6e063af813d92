#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace grangerlab {

// All randomness in the library flows from one user seed through named
// substreams, so parallel replicates can each own an independent engine
// and results do not depend on thread scheduling.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derive a deterministic child seed from (seed, substream name, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name,
                                 std::uint64_t index = 0) {
  std::uint64_t s = seed ^ hash_name(name);
  splitmix64(s);
  s ^= 0x6a09e667f3bcc909ULL + index * 0x9e3779b97f4a7c15ULL;
  std::uint64_t out = splitmix64(s);
  out ^= splitmix64(s);
  return out;
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view name,
                                   std::uint64_t index = 0) {
  return std::mt19937_64(derive_seed(seed, name, index));
}

}  // namespace grangerlab
