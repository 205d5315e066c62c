#pragma once

// Query-agent gate: prototype-anchored relevance scoring.
//
// A query is encoded (ppai/encoder.hpp), projected by a small two-layer
// rectifier MLP into prototype space, and scored against K learned prototype
// vectors by cosine similarity. The raw cosine profile is sharpened into a
// sparse distribution (top-p selection, power alpha, renormalize), and the
// match between a query and an agent is the cosine between that sparse
// profile and the agent's per-prototype capability vector.
//
// Projector and prototypes are trained jointly by mini-batch gradient descent
// on KL(label ‖ softmax(cosines)). The backward pass is fully analytic and is
// pinned against central finite differences in the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ppai/encoder.hpp"
#include "ppai/errors.hpp"
#include "ppai/rng.hpp"
#include "ppai/vecmath.hpp"

namespace ppai::qagate {

using ppai::Vec;

// ---------------------------------------------------------------------------
// Parameter containers

// Two-layer MLP q -> W2·max(0, W1·q + b1) + b2, all row-major doubles.
struct Projector {
  int in_dim = 0;
  int hidden_dim = 0;
  int out_dim = 0;
  Vec w1;  // hidden_dim x in_dim
  Vec b1;  // hidden_dim
  Vec w2;  // out_dim x hidden_dim
  Vec b2;  // out_dim

  static Projector zeros(int in, int hidden, int out) {
    Projector p;
    p.in_dim = in;
    p.hidden_dim = hidden;
    p.out_dim = out;
    p.w1.assign(static_cast<std::size_t>(hidden) * in, 0.0);
    p.b1.assign(static_cast<std::size_t>(hidden), 0.0);
    p.w2.assign(static_cast<std::size_t>(out) * hidden, 0.0);
    p.b2.assign(static_cast<std::size_t>(out), 0.0);
    return p;
  }

  // Seeded Gaussian init scaled by 1/sqrt(fan-in); biases start at zero.
  static Projector seeded(int in, int hidden, int out, std::uint64_t seed) {
    Projector p = zeros(in, hidden, out);
    SplitMix64 gw1(mix64(seed, 1));
    double s1 = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : p.w1) w = normal01(gw1) * s1;
    SplitMix64 gw2(mix64(seed, 2));
    double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& w : p.w2) w = normal01(gw2) * s2;
    return p;
  }

  // Exact identity map built from a rectifier pair: hidden = [relu(q); relu(-q)],
  // output = relu(q) - relu(-q) = q. Used by the simulator's analytic gate.
  static Projector identity_passthrough(int d) {
    Projector p = zeros(d, 2 * d, d);
    for (int i = 0; i < d; ++i) {
      p.w1[static_cast<std::size_t>(i) * d + i] = 1.0;
      p.w1[static_cast<std::size_t>(i + d) * d + i] = -1.0;
      p.w2[static_cast<std::size_t>(i) * (2 * d) + i] = 1.0;
      p.w2[static_cast<std::size_t>(i) * (2 * d) + (i + d)] = -1.0;
    }
    return p;
  }

  void validate() const {
    require(in_dim > 0 && hidden_dim > 0 && out_dim > 0, Errc::DimensionMismatch,
            "projector dimensions must be positive");
    require(w1.size() == static_cast<std::size_t>(hidden_dim) * in_dim &&
                b1.size() == static_cast<std::size_t>(hidden_dim) &&
                w2.size() == static_cast<std::size_t>(out_dim) * hidden_dim &&
                b2.size() == static_cast<std::size_t>(out_dim),
            Errc::DimensionMismatch, "projector parameter shapes inconsistent");
    require(all_finite(w1) && all_finite(b1) && all_finite(w2) && all_finite(b2),
            Errc::SpecInvalid, "projector parameters must be finite");
  }
};

struct PrototypeSet {
  int k = 0;
  int dim = 0;
  Vec data;  // k x dim row-major

  static PrototypeSet zeros(int k, int dim) {
    PrototypeSet c;
    c.k = k;
    c.dim = dim;
    c.data.assign(static_cast<std::size_t>(k) * dim, 0.0);
    return c;
  }

  // Seeded spherical Gaussian rows, l2-normalized.
  static PrototypeSet seeded(int k, int dim, std::uint64_t seed) {
    PrototypeSet c = zeros(k, dim);
    SplitMix64 g(mix64(seed, 3));
    for (int r = 0; r < k; ++r) {
      double nsq = 0.0;
      double* row = &c.data[static_cast<std::size_t>(r) * dim];
      for (int j = 0; j < dim; ++j) {
        row[j] = normal01(g);
        nsq += row[j] * row[j];
      }
      double inv = 1.0 / std::sqrt(nsq);
      for (int j = 0; j < dim; ++j) row[j] *= inv;
    }
    c.validate();
    return c;
  }

  const double* row(int r) const { return &data[static_cast<std::size_t>(r) * dim]; }
  double* row(int r) { return &data[static_cast<std::size_t>(r) * dim]; }

  double row_norm(int r) const {
    const double* p = row(r);
    double s = 0.0;
    for (int j = 0; j < dim; ++j) s += p[j] * p[j];
    return std::sqrt(s);
  }

  void validate() const {
    require(k >= 2, Errc::SpecInvalid, "prototype count must be >= 2");
    require(dim > 0 && data.size() == static_cast<std::size_t>(k) * dim,
            Errc::DimensionMismatch, "prototype storage shape inconsistent");
    require(all_finite(data), Errc::SpecInvalid, "prototypes must be finite");
    for (int r = 0; r < k; ++r) {
      require(row_norm(r) > kNormFloor, Errc::ZeroVector,
              "prototype " + std::to_string(r) + " is (near) zero");
    }
  }
};

// ---------------------------------------------------------------------------
// Forward operations

inline Vec project(const Projector& p, const Vec& q) {
  require(static_cast<int>(q.size()) == p.in_dim, Errc::DimensionMismatch,
          "project: input dim " + std::to_string(q.size()) + " != " +
              std::to_string(p.in_dim));
  Vec hidden(static_cast<std::size_t>(p.hidden_dim));
  for (int i = 0; i < p.hidden_dim; ++i) {
    const double* wrow = &p.w1[static_cast<std::size_t>(i) * p.in_dim];
    double s = p.b1[static_cast<std::size_t>(i)];
    for (int j = 0; j < p.in_dim; ++j) s += wrow[j] * q[static_cast<std::size_t>(j)];
    hidden[static_cast<std::size_t>(i)] = s > 0.0 ? s : 0.0;
  }
  Vec out(static_cast<std::size_t>(p.out_dim));
  for (int i = 0; i < p.out_dim; ++i) {
    const double* wrow = &p.w2[static_cast<std::size_t>(i) * p.hidden_dim];
    double s = p.b2[static_cast<std::size_t>(i)];
    for (int j = 0; j < p.hidden_dim; ++j) s += wrow[j] * hidden[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = s;
  }
  return out;
}

// Raw relevance: cosine between the projected query and each prototype.
inline Vec relevance(const Projector& p, const PrototypeSet& c, const Vec& q) {
  require(c.dim == p.out_dim, Errc::DimensionMismatch,
          "prototype dim != projector output dim");
  Vec h = project(p, q);
  double hn = norm2(h);
  require(hn > kNormFloor, Errc::DegenerateProjection,
          "projected query has (near-)zero norm");
  Vec raw(static_cast<std::size_t>(c.k));
  for (int r = 0; r < c.k; ++r) {
    const double* crow = c.row(r);
    double d = 0.0, cn = 0.0;
    for (int j = 0; j < c.dim; ++j) {
      d += h[static_cast<std::size_t>(j)] * crow[j];
      cn += crow[j] * crow[j];
    }
    raw[static_cast<std::size_t>(r)] = d / (hn * std::sqrt(cn));
  }
  return raw;
}

// Number of prototypes retained by a top-p fraction: ceil(p*K), computed with
// a small epsilon so that exact-integer products (0.25*4, 0.23*100, ...) are
// not bumped up by floating-point noise.
inline int top_p_count(double p, int k) {
  require(p > 0.0 && p <= 1.0, Errc::ConfigInvalid, "top-p fraction must be in (0,1]");
  require(k >= 1, Errc::DimensionMismatch, "top_p_count needs k >= 1");
  int m = static_cast<int>(std::ceil(p * static_cast<double>(k) - 1e-9));
  return std::min(std::max(m, 1), k);
}

// Indices of the m largest values; ties broken toward the lower index.
inline std::vector<int> top_indices(const Vec& values, int m) {
  std::vector<int> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
  });
  idx.resize(static_cast<std::size_t>(m));
  return idx;
}

// Sparse sharpened relevance. Default behavior: clamp raw scores at 0, keep
// the ceil(p*K) largest, raise to alpha, renormalize; if every retained score
// clamps to 0, fall back to the uniform distribution over the retained set.
inline Vec mask(const Vec& raw, double alpha, double p) {
  require(alpha > 0.0, Errc::ConfigInvalid, "mask: alpha must be > 0");
  require(!raw.empty(), Errc::DimensionMismatch, "mask: empty relevance vector");
  int k = static_cast<int>(raw.size());
  int m = top_p_count(p, k);

  Vec clamped(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) clamped[i] = raw[i] > 0.0 ? raw[i] : 0.0;

  std::vector<int> keep = top_indices(clamped, m);
  Vec out(raw.size(), 0.0);
  double denom = 0.0;
  for (int i : keep) denom += std::pow(clamped[static_cast<std::size_t>(i)], alpha);
  if (denom <= 0.0) {
    // Uniform fallback: every retained score clamped to zero.
    for (int i : keep) out[static_cast<std::size_t>(i)] = 1.0 / static_cast<double>(m);
    return out;
  }
  for (int i : keep) {
    out[static_cast<std::size_t>(i)] = std::pow(clamped[static_cast<std::size_t>(i)], alpha) / denom;
  }
  return out;
}

// Unclamped variant of the sharpening rule: rejects non-positive retained
// scores instead of clamping (fractional powers are undefined there).
inline Vec mask_strict(const Vec& raw, double alpha, double p) {
  require(alpha > 0.0, Errc::ConfigInvalid, "mask: alpha must be > 0");
  require(!raw.empty(), Errc::DimensionMismatch, "mask: empty relevance vector");
  int m = top_p_count(p, static_cast<int>(raw.size()));
  std::vector<int> keep = top_indices(raw, m);
  for (int i : keep) {
    require(raw[static_cast<std::size_t>(i)] > 0.0, Errc::NonPositiveTopScores,
            "retained relevance score <= 0 at index " + std::to_string(i));
  }
  Vec out(raw.size(), 0.0);
  double denom = 0.0;
  for (int i : keep) denom += std::pow(raw[static_cast<std::size_t>(i)], alpha);
  for (int i : keep) {
    out[static_cast<std::size_t>(i)] = std::pow(raw[static_cast<std::size_t>(i)], alpha) / denom;
  }
  return out;
}

// Query-agent match: cosine between the sparse relevance profile and the
// agent's capability vector. Both are nonnegative, so the score lies in [0,1].
inline double score(const Vec& rel, const Vec& cap) {
  require(rel.size() == cap.size(), Errc::DimensionMismatch,
          "score: relevance and capability dimensions differ");
  return cosine(rel, cap);
}

// Measures a synthetic agent on K held-out batches: each query in batch k is
// answered correctly with probability truth[k], drawn one-shot from the
// seeded generator keyed by (batch, query index).
inline Vec evaluate_capability(const Vec& truth,
                               const std::vector<std::vector<std::string>>& validation_sets,
                               std::uint64_t rng_seed) {
  require(truth.size() == validation_sets.size(), Errc::DimensionMismatch,
          "one validation batch per prototype required");
  Vec values(truth.size(), 0.0);
  for (std::size_t k = 0; k < validation_sets.size(); ++k) {
    const auto& batch = validation_sets[k];
    require(!batch.empty(), Errc::EmptyBatch,
            "validation batch " + std::to_string(k) + " is empty");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      double u = uniform_at(rng_seed, mix64(static_cast<std::uint64_t>(k),
                                            static_cast<std::uint64_t>(i)));
      if (u < truth[k]) ++correct;
    }
    values[k] = static_cast<double>(correct) / static_cast<double>(batch.size());
  }
  return values;
}

// ---------------------------------------------------------------------------
// Training: KL(label ‖ softmax(cosines)) by mini-batch gradient descent.

// Full-batch loss at the given parameters (inputs are already-encoded unit
// vectors). Exposed separately so the finite-difference test can evaluate the
// loss as a pure function of the parameters.
inline double gate_loss(const Projector& p, const PrototypeSet& c,
                        const std::vector<Vec>& inputs,
                        const std::vector<Vec>& labels) {
  require(!inputs.empty(), Errc::EmptyBatch, "gate_loss: empty batch");
  require(inputs.size() == labels.size(), Errc::LabelDimensionMismatch,
          "gate_loss: inputs/labels length mismatch");
  double total = 0.0;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    require(static_cast<int>(labels[n].size()) == c.k, Errc::LabelDimensionMismatch,
            "label dimension != prototype count");
    Vec x = relevance(p, c, inputs[n]);
    Vec s = softmax(x);
    const Vec& y = labels[n];
    for (int k = 0; k < c.k; ++k) {
      double yk = y[static_cast<std::size_t>(k)];
      if (yk > 0.0) total += yk * (std::log(yk) - std::log(s[static_cast<std::size_t>(k)]));
    }
  }
  return total / static_cast<double>(inputs.size());
}

// Analytic gradient of gate_loss with respect to every parameter. Writes the
// batch-mean gradients into *gp / *gc (shapes mirror the parameters) and the
// batch-mean loss into *loss_out when non-null.
inline void gate_loss_grad(const Projector& p, const PrototypeSet& c,
                           const std::vector<Vec>& inputs,
                           const std::vector<Vec>& labels, Projector* gp,
                           PrototypeSet* gc, double* loss_out = nullptr) {
  require(!inputs.empty(), Errc::EmptyBatch, "gate_loss_grad: empty batch");
  require(inputs.size() == labels.size(), Errc::LabelDimensionMismatch,
          "gate_loss_grad: inputs/labels length mismatch");
  *gp = Projector::zeros(p.in_dim, p.hidden_dim, p.out_dim);
  *gc = PrototypeSet::zeros(c.k, c.dim);

  double total = 0.0;
  Vec pre(static_cast<std::size_t>(p.hidden_dim));
  Vec act(static_cast<std::size_t>(p.hidden_dim));
  Vec h(static_cast<std::size_t>(p.out_dim));
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    const Vec& q = inputs[n];
    const Vec& y = labels[n];
    require(static_cast<int>(q.size()) == p.in_dim, Errc::DimensionMismatch,
            "gate_loss_grad: input dim mismatch");
    require(static_cast<int>(y.size()) == c.k, Errc::LabelDimensionMismatch,
            "label dimension != prototype count");

    // Forward, keeping intermediates.
    for (int i = 0; i < p.hidden_dim; ++i) {
      const double* wrow = &p.w1[static_cast<std::size_t>(i) * p.in_dim];
      double s = p.b1[static_cast<std::size_t>(i)];
      for (int j = 0; j < p.in_dim; ++j) s += wrow[j] * q[static_cast<std::size_t>(j)];
      pre[static_cast<std::size_t>(i)] = s;
      act[static_cast<std::size_t>(i)] = s > 0.0 ? s : 0.0;
    }
    for (int i = 0; i < p.out_dim; ++i) {
      const double* wrow = &p.w2[static_cast<std::size_t>(i) * p.hidden_dim];
      double s = p.b2[static_cast<std::size_t>(i)];
      for (int j = 0; j < p.hidden_dim; ++j) s += wrow[j] * act[static_cast<std::size_t>(j)];
      h[static_cast<std::size_t>(i)] = s;
    }
    double hn = norm2(h);
    require(hn > kNormFloor, Errc::DegenerateProjection,
            "projected query collapsed to zero during training");

    Vec x(static_cast<std::size_t>(c.k));
    Vec cn(static_cast<std::size_t>(c.k));
    for (int k = 0; k < c.k; ++k) {
      const double* crow = c.row(k);
      double d = 0.0, nsq = 0.0;
      for (int j = 0; j < c.dim; ++j) {
        d += h[static_cast<std::size_t>(j)] * crow[j];
        nsq += crow[j] * crow[j];
      }
      cn[static_cast<std::size_t>(k)] = std::sqrt(nsq);
      x[static_cast<std::size_t>(k)] = d / (hn * cn[static_cast<std::size_t>(k)]);
    }
    Vec s = softmax(x);
    for (int k = 0; k < c.k; ++k) {
      double yk = y[static_cast<std::size_t>(k)];
      if (yk > 0.0) total += yk * (std::log(yk) - std::log(s[static_cast<std::size_t>(k)]));
    }

    // Backward. dL/dx_k = softmax_k - y_k. With u = h/‖h‖, v_k = c_k/‖c_k‖:
    //   dx_k/dh   = (v_k - x_k·u)/‖h‖
    //   dx_k/dc_k = (u   - x_k·v_k)/‖c_k‖
    Vec gh(static_cast<std::size_t>(p.out_dim), 0.0);
    for (int k = 0; k < c.k; ++k) {
      double gx = s[static_cast<std::size_t>(k)] - y[static_cast<std::size_t>(k)];
      const double* crow = c.row(k);
      double* gcrow = gc->row(k);
      double xk = x[static_cast<std::size_t>(k)];
      double inv_cn = 1.0 / cn[static_cast<std::size_t>(k)];
      for (int j = 0; j < c.dim; ++j) {
        double uj = h[static_cast<std::size_t>(j)] / hn;
        double vj = crow[j] * inv_cn;
        gh[static_cast<std::size_t>(j)] += gx * (vj - xk * uj) / hn;
        gcrow[j] += gx * (uj - xk * vj) * inv_cn;
      }
    }
    // Through the MLP: h = W2·a + b2, a = relu(pre), pre = W1·q + b1.
    for (int i = 0; i < p.out_dim; ++i) {
      double g = gh[static_cast<std::size_t>(i)];
      gp->b2[static_cast<std::size_t>(i)] += g;
      double* grow = &gp->w2[static_cast<std::size_t>(i) * p.hidden_dim];
      for (int j = 0; j < p.hidden_dim; ++j) grow[j] += g * act[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < p.hidden_dim; ++j) {
      if (pre[static_cast<std::size_t>(j)] <= 0.0) continue;  // rectifier gate (grad 0 at the kink)
      double ga = 0.0;
      for (int i = 0; i < p.out_dim; ++i) {
        ga += p.w2[static_cast<std::size_t>(i) * p.hidden_dim + j] * gh[static_cast<std::size_t>(i)];
      }
      gp->b1[static_cast<std::size_t>(j)] += ga;
      double* grow = &gp->w1[static_cast<std::size_t>(j) * p.in_dim];
      for (int i = 0; i < p.in_dim; ++i) grow[i] += ga * q[static_cast<std::size_t>(i)];
    }
  }

  double inv_m = 1.0 / static_cast<double>(inputs.size());
  for (double& g : gp->w1) g *= inv_m;
  for (double& g : gp->b1) g *= inv_m;
  for (double& g : gp->w2) g *= inv_m;
  for (double& g : gp->b2) g *= inv_m;
  for (double& g : gc->data) g *= inv_m;
  if (loss_out) *loss_out = total * inv_m;
}

struct TrainHyper {
  double learning_rate = 0.5;
  int epochs = 100;
  int batch_size = 16;
  std::uint64_t seed = 1;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // full-set loss after each epoch
};

// Joint training of projector + prototypes. `hidden_dim` defaults to d_p.
// Queries are encoded once up front; per-epoch example order is a seeded
// shuffle, so identical inputs and seeds give bitwise-identical parameters.
inline std::pair<Projector, PrototypeSet> train_gate(
    const std::vector<std::pair<std::string, Vec>>& labeled_queries, int k,
    int d_p, const TrainHyper& hyper, const GateEncoder& encoder,
    int hidden_dim = -1, TrainReport* report = nullptr) {
  require(!labeled_queries.empty(), Errc::EmptyTrainingSet, "no training examples");
  require(k >= 2, Errc::SpecInvalid, "prototype count must be >= 2");
  require(hyper.epochs >= 1 && hyper.batch_size >= 1 && hyper.learning_rate > 0.0,
          Errc::ConfigInvalid, "bad training hyperparameters");
  if (hidden_dim <= 0) hidden_dim = d_p;

  std::vector<Vec> inputs;
  std::vector<Vec> labels;
  inputs.reserve(labeled_queries.size());
  labels.reserve(labeled_queries.size());
  for (const auto& [text, label] : labeled_queries) {
    require(static_cast<int>(label.size()) == k, Errc::LabelDimensionMismatch,
            "label dimension != K");
    inputs.push_back(encoder.encode(text));
    labels.push_back(label);
  }

  Projector p = Projector::seeded(encoder.dim(), hidden_dim, d_p, hyper.seed);
  PrototypeSet c = PrototypeSet::seeded(k, d_p, hyper.seed);

  std::size_t n = inputs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  Projector gp;
  PrototypeSet gc;
  std::vector<Vec> bx, by;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    // Seeded Fisher-Yates shuffle, keyed by (seed, epoch).
    SplitMix64 g(mix64(mix64(hyper.seed, 4), static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_below(g, i + 1));
      std::swap(order[i], order[j]);
    }
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(hyper.batch_size)) {
      std::size_t stop = std::min(n, start + static_cast<std::size_t>(hyper.batch_size));
      bx.clear();
      by.clear();
      for (std::size_t i = start; i < stop; ++i) {
        bx.push_back(inputs[order[i]]);
        by.push_back(labels[order[i]]);
      }
      gate_loss_grad(p, c, bx, by, &gp, &gc);
      double lr = hyper.learning_rate;
      for (std::size_t i = 0; i < p.w1.size(); ++i) p.w1[i] -= lr * gp.w1[i];
      for (std::size_t i = 0; i < p.b1.size(); ++i) p.b1[i] -= lr * gp.b1[i];
      for (std::size_t i = 0; i < p.w2.size(); ++i) p.w2[i] -= lr * gp.w2[i];
      for (std::size_t i = 0; i < p.b2.size(); ++i) p.b2[i] -= lr * gp.b2[i];
      for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] -= lr * gc.data[i];
    }
    if (report) report->epoch_loss.push_back(gate_loss(p, c, inputs, labels));
  }
  return {std::move(p), std::move(c)};
}

// ---------------------------------------------------------------------------
// Trained-gate bundle

struct Gate {
  HashEncoder encoder{8, 0};
  Projector proj;
  PrototypeSet protos;
  double alpha = 2.0;
  double top_p = 0.25;

  Vec raw_relevance(std::string_view text) const {
    return relevance(proj, protos, encoder.encode(text));
  }
  Vec masked_relevance(std::string_view text) const {
    return mask(raw_relevance(text), alpha, top_p);
  }
};

}  // namespace ppai::qagate
