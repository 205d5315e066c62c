#pragma once

// Deterministic text encoder: signed feature hashing over a bag of tokens.
//
// The routing gate is encoder-agnostic (anything mapping text to a fixed
// R^d vector plugs in behind GateEncoder); this default keeps the stack
// dependency-free and bit-reproducible. Pipeline, in order:
//
//   1. lowercase ASCII 'A'-'Z' (bytes >= 0x80 pass through untouched),
//   2. tokenize on runs of non-alphanumeric bytes,
//   3. per token, bucket = FNV-1a-64(token, basis = FNV_BASIS ^ seed) mod d,
//   4. sign   = low bit of FNV-1a-64(token, basis = FNV_BASIS ^ (seed + GOLDEN)),
//      mapped 0 -> +1, 1 -> -1,
//   5. accumulate the signed counts, then l2-normalize.
//
// Repeated tokens accumulate before normalization, so token multiplicity
// changes only the scale, never the direction: encode("abc abc") ==
// encode("abc") after the final normalization.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ppai/errors.hpp"

namespace ppai {

class GateEncoder {
 public:
  virtual ~GateEncoder() = default;
  virtual int dim() const = 0;
  // Maps text to a unit-norm vector in R^dim. Throws EmptyQuery when the
  // text contains no alphanumeric token.
  virtual std::vector<double> encode(std::string_view text) const = 0;
};

class HashEncoder final : public GateEncoder {
 public:
  static constexpr std::uint64_t kFnvBasis = 14695981039346656037ull;
  static constexpr std::uint64_t kFnvPrime = 1099511628211ull;
  static constexpr std::uint64_t kSignSalt = 0x9E3779B97F4A7C15ull;

  HashEncoder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    require(dim >= 8, Errc::DimensionMismatch,
            "encoder dimension must be >= 8, got " + std::to_string(dim));
  }

  int dim() const override { return dim_; }
  std::uint64_t seed() const { return seed_; }

  static std::uint64_t fnv1a(std::string_view token, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : token) {
      h ^= static_cast<std::uint64_t>(c);
      h *= kFnvPrime;
    }
    return h;
  }

  static std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
      bool alnum = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
                   (c >= 'A' && c <= 'Z') || c >= 0x80;
      if (alnum) {
        cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a')
                                           : static_cast<char>(c));
      } else if (!cur.empty()) {
        tokens.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
  }

  std::vector<double> encode(std::string_view text) const override {
    std::vector<std::string> tokens = tokenize(text);
    require(!tokens.empty(), Errc::EmptyQuery, "no alphanumeric tokens in query text");

    std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
    for (const std::string& tok : tokens) {
      std::uint64_t bucket = fnv1a(tok, kFnvBasis ^ seed_) % static_cast<std::uint64_t>(dim_);
      std::uint64_t sign_bit = fnv1a(tok, kFnvBasis ^ (seed_ + kSignSalt)) & 1ull;
      v[bucket] += sign_bit ? -1.0 : 1.0;
    }

    double norm_sq = 0.0;
    for (double x : v) norm_sq += x * x;
    // All-cancel is possible only when every token pair annihilates; treat it
    // like an empty query since the direction is undefined.
    require(norm_sq > 0.0, Errc::EmptyQuery, "token signs cancelled to the zero vector");
    double inv = 1.0 / std::sqrt(norm_sq);
    for (double& x : v) x *= inv;
    return v;
  }

 private:
  int dim_;
  std::uint64_t seed_;
};

}  // namespace ppai
