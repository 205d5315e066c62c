#pragma once

// Deterministic random-number utilities.
//
// Everything in the stack that consumes randomness goes through this header so
// that runs are bit-reproducible across platforms and so that tests can
// recompute any individual draw independently (the algorithms below are small
// enough to reimplement in a few lines of any scripting language; the unit
// tests do exactly that).
//
// std::mt19937 + std::*_distribution are deliberately avoided: the standard
// distributions are implementation-defined, which would tie golden outputs to
// a specific libstdc++ version.

#include <cmath>
#include <cstdint>

namespace ppai {

// SplitMix64 (public-domain reference algorithm). 64 bits of state, one
// multiply-xorshift chain per output.
struct SplitMix64 {
  std::uint64_t state = 0;

  SplitMix64() = default;
  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
};

// Derives a child seed from (parent seed, stream tag). Used to split one run
// seed into independent named substreams; chaining mix64 calls extends the
// key with more coordinates, e.g. mix64(mix64(seed, TAG), id).
inline std::uint64_t mix64(std::uint64_t seed, std::uint64_t tag) {
  SplitMix64 g(seed * 0x9E3779B97F4A7C15ull ^ tag);
  return g.next();
}

// Uniform double in [0, 1) with 53 random bits (the full double mantissa).
inline double uniform01(SplitMix64& g) {
  return static_cast<double>(g.next() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). n must be > 0. Plain modulo: the bias for the
// n values used here (<= a few thousand) is far below anything observable,
// and the simple rule keeps draws trivially reproducible elsewhere.
inline std::uint64_t uniform_below(SplitMix64& g, std::uint64_t n) {
  return g.next() % n;
}

// Exponential with the given rate via inversion; consumes one uniform.
inline double exponential(SplitMix64& g, double rate) {
  double u = uniform01(g);
  return -std::log1p(-u) / rate;
}

// Standard normal via Box-Muller, cosine branch only. Always consumes exactly
// two uniforms and returns one value; the sine partner is discarded so the
// draw count per call is fixed (no hidden cache to desynchronise streams).
inline double normal01(SplitMix64& g) {
  double u1 = 1.0 - uniform01(g);  // (0, 1]: keeps log() finite
  double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

// One-shot draws: build a throwaway generator from a composite key and take a
// single sample. Lets consumers (and test oracles) address any draw directly
// by its key without replaying a sequential stream.
inline double normal_at(std::uint64_t seed, std::uint64_t key) {
  SplitMix64 g(mix64(seed, key));
  return normal01(g);
}

inline double uniform_at(std::uint64_t seed, std::uint64_t key) {
  SplitMix64 g(mix64(seed, key));
  return uniform01(g);
}

}  // namespace ppai
