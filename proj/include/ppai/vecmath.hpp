#pragma once

// Small dense-vector helpers shared across the stack. Plain std::vector
// storage, no BLAS: every dimension in play is tiny (tens), and keeping the
// arithmetic in one visible place makes runs bit-reproducible and lets test
// oracles recompute any quantity independently.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ppai/errors.hpp"

namespace ppai {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  require(a.size() == b.size(), Errc::DimensionMismatch,
          "dot: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

// Cosine similarity; the degenerate-norm threshold is shared by everything
// that normalizes (relevance, pair scores).
constexpr double kNormFloor = 1e-12;

inline double cosine(const Vec& a, const Vec& b) {
  double na = norm2(a), nb = norm2(b);
  require(na > kNormFloor && nb > kNormFloor, Errc::ZeroVector,
          "cosine of a (near-)zero vector");
  return dot(a, b) / (na * nb);
}

inline void l2_normalize(Vec& a) {
  double n = norm2(a);
  require(n > kNormFloor, Errc::ZeroVector, "cannot normalize a (near-)zero vector");
  double inv = 1.0 / n;
  for (double& x : a) x *= inv;
}

// Numerically stable softmax (max-shifted).
inline Vec softmax(const Vec& x) {
  require(!x.empty(), Errc::DimensionMismatch, "softmax of empty vector");
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  Vec out(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - m);
    sum += out[i];
  }
  double inv = 1.0 / sum;
  for (double& v : out) v *= inv;
  return out;
}

inline bool all_finite(const Vec& a) {
  for (double x : a) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline int argmax_index(const Vec& a) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(a.size()); ++i) {
    if (a[static_cast<std::size_t>(i)] > a[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

inline Vec one_hot(int index, int k) {
  require(index >= 0 && index < k, Errc::DimensionMismatch, "one_hot index out of range");
  Vec v(static_cast<std::size_t>(k), 0.0);
  v[static_cast<std::size_t>(index)] = 1.0;
  return v;
}

inline std::vector<double> linspace(double lo, double hi, int n) {
  require(n >= 1, Errc::ConfigInvalid, "linspace needs n >= 1");
  std::vector<double> out(static_cast<std::size_t>(n));
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  double step = (hi - lo) / static_cast<double>(n - 1);
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + step * i;
  out.back() = hi;  // pin the endpoint against accumulation error
  return out;
}

}  // namespace ppai
