#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace toppo {

// Deterministic per-purpose RNG streams. Every consumer of randomness asks
// for a stream by name so that adding or removing draws in one part of the
// trainer cannot shift the sequences seen by another.
class RngSplitter {
 public:
  explicit RngSplitter(std::uint64_t master_seed) : master_(master_seed) {}

  std::mt19937_64 stream(std::string_view name) const {
    return std::mt19937_64(mix(master_ ^ fnv1a(name)));
  }

  // Stream further qualified by an index (seed fan-out, per-round eval).
  std::mt19937_64 stream(std::string_view name, std::uint64_t index) const {
    return std::mt19937_64(mix(mix(master_ ^ fnv1a(name)) + index));
  }

  std::uint64_t master() const { return master_; }

 private:
  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t master_;
};

inline double uniform_real(std::mt19937_64& g, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(g);
}

}  // namespace toppo
