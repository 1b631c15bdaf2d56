#pragma once
// Deterministic random utilities. The std:: distribution objects are not
// bit-stable across standard library implementations, so uniform and normal
// draws are spelled out explicitly on top of mt19937_64 (whose sequence is
// fixed by the standard). stable_hash64 is the bucket hash for categorical
// features and must never change once datasets are hashed.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace mlcc {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Independent stream seed for (seed, stream). Used to decouple latent draws,
// per-row draws, shuffling, and parameter init from one user-facing seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x517cc1b727220a95ull));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform integer in [0, n). Plain modulo: the bias is negligible for the
  // n used here and the result is identical on every platform.
  std::uint64_t uniform_u64(std::uint64_t n) { return eng_() % n; }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// FNV-1a over (field index, raw value bytes). Stable across runs, platforms
// and compilers.
inline std::uint64_t stable_hash64(std::uint64_t field_index,
                                   std::string_view value) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](unsigned char byte) {
    h = (h ^ byte) * 1099511628211ull;
  };
  for (int i = 0; i < 8; ++i) {
    mix(static_cast<unsigned char>(field_index >> (8 * i)));
  }
  for (char c : value) {
    mix(static_cast<unsigned char>(c));
  }
  return h;
}

}  // namespace mlcc
