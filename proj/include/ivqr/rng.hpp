#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ivqr::rng {

// SplitMix64 finalizer.
constexpr std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based child seed: independent of evaluation order.
constexpr std::uint64_t derive(std::uint64_t master, std::uint64_t index) {
  return mix(mix(master) ^ mix(index + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t tag(std::string_view name) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  return h;
}

inline std::mt19937_64 stream(std::uint64_t master, std::uint64_t index) {
  return std::mt19937_64(derive(master, index));
}

inline std::mt19937_64 stream(std::uint64_t master, std::string_view name) {
  return std::mt19937_64(derive(master, tag(name)));
}

}  // namespace ivqr::rng
