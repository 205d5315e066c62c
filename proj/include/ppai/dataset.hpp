#pragma once

// Training-data IO and synthetic corpora for the gate.
//
// File format: newline-delimited JSON, one {"text": ..., "label": [K floats]}
// record per line.

#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ppai/errors.hpp"
#include "ppai/jsonio.hpp"
#include "ppai/qagate.hpp"
#include "ppai/rng.hpp"
#include "ppai/vecmath.hpp"

namespace ppai::qagate {

using LabeledQuery = std::pair<std::string, Vec>;

inline std::vector<LabeledQuery> parse_training_text(const std::string& text,
                                                     const std::string& origin,
                                                     int expect_k = -1) {
  std::vector<LabeledQuery> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string where = origin + ":" + std::to_string(lineno);
    json j = parse_json(line, where);
    std::string q = require_string(j, "text", where);
    Vec label = require_double_array(j, "label", where);
    if (expect_k >= 0 && static_cast<int>(label.size()) != expect_k) {
      fail(Errc::LabelDimensionMismatch,
           where + ": label has " + std::to_string(label.size()) +
               " entries, expected " + std::to_string(expect_k));
    }
    if (expect_k < 0) expect_k = static_cast<int>(label.size());
    out.emplace_back(std::move(q), std::move(label));
  }
  require(!out.empty(), Errc::EmptyTrainingSet, origin + ": no training records");
  return out;
}

inline std::vector<LabeledQuery> read_training_file(const std::string& path,
                                                    int expect_k = -1) {
  return parse_training_text(read_text_file(path), path, expect_k);
}

inline void write_training_file(const std::string& path,
                                const std::vector<LabeledQuery>& data) {
  std::string out;
  for (const auto& [text, label] : data) {
    json j;
    j["text"] = text;
    j["label"] = label;
    out += canonical_dump(j);
    out += '\n';
  }
  write_text_file(path, out);
}

// Synthetic corpus of K well-separated token clusters: every query of
// cluster c contains the unique marker token of c plus a few filler tokens
// drawn from a shared vocabulary. Labels are one-hot on the cluster.
struct ClusterCorpusConfig {
  int k = 8;
  int per_cluster = 100;
  int fillers_per_query = 3;
  int filler_vocab = 32;
  std::uint64_t seed = 1;
};

inline std::string cluster_marker(int c) { return "topic" + std::to_string(c); }

inline std::vector<LabeledQuery> make_cluster_corpus(const ClusterCorpusConfig& cfg) {
  require(cfg.k >= 2 && cfg.per_cluster >= 1, Errc::ConfigInvalid,
          "cluster corpus needs k >= 2, per_cluster >= 1");
  std::vector<LabeledQuery> out;
  out.reserve(static_cast<std::size_t>(cfg.k) * cfg.per_cluster);
  SplitMix64 g(mix64(cfg.seed, 5));
  for (int c = 0; c < cfg.k; ++c) {
    for (int i = 0; i < cfg.per_cluster; ++i) {
      std::string text = cluster_marker(c);
      for (int f = 0; f < cfg.fillers_per_query; ++f) {
        text += " word" + std::to_string(uniform_below(g, static_cast<std::uint64_t>(cfg.filler_vocab)));
      }
      out.emplace_back(std::move(text), one_hot(c, cfg.k));
    }
  }
  return out;
}

// Fraction of queries whose highest raw relevance lands on the labeled
// cluster (sharpening preserves the argmax, so raw scores suffice).
inline double argmax_accuracy(const Projector& p, const PrototypeSet& c,
                              const GateEncoder& enc,
                              const std::vector<LabeledQuery>& data) {
  require(!data.empty(), Errc::EmptyTrainingSet, "no evaluation examples");
  std::size_t hits = 0;
  for (const auto& [text, label] : data) {
    Vec raw = relevance(p, c, enc.encode(text));
    if (argmax_index(raw) == argmax_index(label)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace ppai::qagate
