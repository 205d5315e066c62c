#pragma once

// Gossip capability registry.
//
// Each node keeps a local view of every agent's advertised capability vector.
// Views converge under churn via push-only gossip: every round, each node
// with pending records sends them to `fanout` random peers; a record that
// changes a receiver's state joins that receiver's pending set
// (forward-if-new). A record keeps being forwarded until a round in which it
// changes no state anywhere; one-shot forwarding would strand a few nodes
// with high probability (a random fanout-out digraph leaves ~N*exp(-fanout)
// nodes unreachable), whereas forward-until-no-effect reaches everyone except
// for a rare sampling fluke, and drops every copy of a record one round after
// saturation. Merging is last-writer-wins on per-agent logical timestamps
// with deterministic tie rules (DELETE beats non-DELETE, otherwise keep the
// existing entry), which makes `apply` commutative and idempotent over
// well-formed record multisets — any delivery order yields the same view.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ppai/errors.hpp"
#include "ppai/jsonio.hpp"
#include "ppai/rng.hpp"
#include "ppai/vecmath.hpp"

namespace ppai::registry {

using AgentId = std::uint64_t;

enum class Flag { Join, Update, Delete };

inline const char* flag_name(Flag f) {
  switch (f) {
    case Flag::Join: return "JOIN";
    case Flag::Update: return "UPDATE";
    case Flag::Delete: return "DELETE";
  }
  return "?";
}

inline Flag flag_from_name(const std::string& s, const std::string& origin) {
  if (s == "JOIN") return Flag::Join;
  if (s == "UPDATE") return Flag::Update;
  if (s == "DELETE") return Flag::Delete;
  fail(Errc::ParseError, origin + ": unknown flag '" + s + "'");
}

struct CapabilityRecord {
  AgentId agent = 0;
  std::uint64_t ts = 0;  // per-agent logical counter, strictly increasing
  Flag flag = Flag::Update;
  Vec cap;  // empty iff flag == Delete

  bool operator==(const CapabilityRecord&) const = default;

  void validate() const {
    if (flag == Flag::Delete) {
      require(cap.empty(), Errc::SpecInvalid, "DELETE record must not carry a capability");
      return;
    }
    require(!cap.empty(), Errc::SpecInvalid, "JOIN/UPDATE record needs a capability vector");
    bool any_positive = false;
    for (double x : cap) {
      require(std::isfinite(x) && x >= 0.0 && x <= 1.0, Errc::SpecInvalid,
              "capability entries must lie in [0,1]");
      if (x > 0.0) any_positive = true;
    }
    require(any_positive, Errc::SpecInvalid, "capability must not be the zero vector");
  }

  // Wire format: canonical JSON {agent, cap|null, flag, ts} — byte-stable.
  json to_json() const {
    json j;
    j["agent"] = agent;
    if (flag == Flag::Delete) {
      j["cap"] = nullptr;
    } else {
      j["cap"] = cap;
    }
    j["flag"] = flag_name(flag);
    j["ts"] = ts;
    return j;
  }

  static CapabilityRecord from_json(const json& j, const std::string& origin = "record") {
    CapabilityRecord r;
    r.agent = require_uint(j, "agent", origin);
    r.ts = require_uint(j, "ts", origin);
    r.flag = flag_from_name(require_string(j, "flag", origin), origin);
    const json& cap = require_field(j, "cap", origin);
    if (!cap.is_null()) {
      r.cap.reserve(cap.size());
      for (const auto& v : cap) {
        require(v.is_number(), Errc::ParseError, origin + ": cap must contain numbers");
        r.cap.push_back(v.get<double>());
      }
    }
    r.validate();
    return r;
  }

  std::string wire() const { return canonical_dump(to_json()); }
};

struct RegistryView {
  std::map<AgentId, std::pair<Vec, std::uint64_t>> live;  // agent -> (cap, ts)
  std::map<AgentId, std::uint64_t> tombstones;            // agent -> ts

  bool operator==(const RegistryView&) const = default;

  // Highest timestamp stored for an agent, or 0 if unknown (timestamps of
  // real records start at 1).
  std::uint64_t known_ts(AgentId a) const {
    auto l = live.find(a);
    if (l != live.end()) return l->second.second;
    auto t = tombstones.find(a);
    if (t != tombstones.end()) return t->second;
    return 0;
  }

  bool is_live(AgentId a) const { return live.count(a) != 0; }
};

// Last-writer-wins merge decision: would this record mutate the view?
// Ties on the timestamp: DELETE beats non-DELETE, anything else keeps the
// existing entry. Stale records never take.
inline bool would_change(const RegistryView& view, const CapabilityRecord& rec) {
  rec.validate();
  bool live = view.live.count(rec.agent) != 0;
  bool have = live || view.tombstones.count(rec.agent) != 0;
  std::uint64_t cur_ts = view.known_ts(rec.agent);
  if (!have || rec.ts > cur_ts) return true;
  if (rec.ts < cur_ts) return false;
  // Equal timestamps: a DELETE displaces a live entry; everything else
  // (DELETE over tombstone, non-DELETE over anything) is a no-op.
  return rec.flag == Flag::Delete && live;
}

// Merge one record into a view. Returns true iff the view changed (stale
// records are ignored silently).
inline bool apply(RegistryView& view, const CapabilityRecord& rec) {
  if (!would_change(view, rec)) return false;
  if (rec.flag == Flag::Delete) {
    view.live.erase(rec.agent);
    view.tombstones[rec.agent] = rec.ts;
  } else {
    view.tombstones.erase(rec.agent);
    view.live[rec.agent] = {rec.cap, rec.ts};
  }
  return true;
}

// ---------------------------------------------------------------------------
// Gossip

struct GossipNode {
  RegistryView view;
  std::vector<CapabilityRecord> outbox;
};

// Originates a record at one node: merge into the local view and queue it
// for dissemination if it changed anything.
inline bool inject(std::vector<GossipNode>& nodes, std::size_t at,
                   const CapabilityRecord& rec) {
  bool changed = apply(nodes[at].view, rec);
  if (changed) nodes[at].outbox.push_back(rec);
  return changed;
}

// `fanout` distinct peers of `sender` among n nodes, sampled by partial
// Fisher-Yates from a generator keyed by (round seed, sender).
inline std::vector<std::size_t> sample_peers(std::size_t n, std::size_t sender,
                                             int fanout, std::uint64_t round_seed) {
  std::vector<std::size_t> peers;
  peers.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (j != sender) peers.push_back(j);
  }
  SplitMix64 g(mix64(round_seed, static_cast<std::uint64_t>(sender)));
  for (int t = 0; t < fanout; ++t) {
    std::size_t pick = static_cast<std::size_t>(t) +
                       static_cast<std::size_t>(uniform_below(
                           g, static_cast<std::uint64_t>(peers.size() - static_cast<std::size_t>(t))));
    std::swap(peers[static_cast<std::size_t>(t)], peers[pick]);
  }
  peers.resize(static_cast<std::size_t>(fanout));
  return peers;
}

// Identity of a record on the wire; well-formed multisets carry at most one
// record per key, so keying dedup and retention on it is lossless.
using RecordKey = std::tuple<AgentId, std::uint64_t, int>;

inline RecordKey record_key(const CapabilityRecord& rec) {
  return {rec.agent, rec.ts, static_cast<int>(rec.flag)};
}

// One synchronous gossip round: every node's pending records are sent to
// `fanout` seeded-random distinct peers; receivers merge and queue exactly
// the records that changed their state (forward-if-new). Outboxes are
// snapshotted up front, so records received this round travel next round.
// Duplicate suppression by (agent, ts, flag) falls out of idempotent apply:
// a record can change a given view at most once, so it enters a given
// node's pending set at most once.
//
// Retention rule: a sender keeps a pending record across rounds until a
// round in which that record changed no state anywhere in the network; at
// that point every copy of it is dropped. Since a record can mutate each of
// the n views at most once, total state changes are finite, so every record
// is eventually dropped and the network quiesces.
inline void gossip_round(std::vector<GossipNode>& nodes, int fanout,
                         std::uint64_t round_seed) {
  std::size_t n = nodes.size();
  require(fanout >= 1 && static_cast<std::size_t>(fanout) <= n - 1, Errc::FanoutTooLarge,
          "fanout " + std::to_string(fanout) + " invalid for " + std::to_string(n) + " nodes");

  struct Send {
    std::size_t sender;
    std::vector<std::size_t> peers;
    std::vector<CapabilityRecord> records;
  };
  std::vector<Send> plan;
  for (std::size_t i = 0; i < n; ++i) {
    if (nodes[i].outbox.empty()) continue;
    plan.push_back({i, sample_peers(n, i, fanout, round_seed), std::move(nodes[i].outbox)});
    nodes[i].outbox.clear();
  }
  std::vector<std::vector<CapabilityRecord>> inbox(n);  // records new to each receiver
  std::set<RecordKey> effective;                        // keys that changed some view this round
  for (const Send& s : plan) {
    for (std::size_t peer : s.peers) {
      for (const CapabilityRecord& rec : s.records) {
        if (apply(nodes[peer].view, rec)) {
          inbox[peer].push_back(rec);
          effective.insert(record_key(rec));
        }
      }
    }
  }
  // Rebuild pending sets: senders retain the records that still did work
  // somewhere; fresh arrivals (all of which did work) are appended.
  for (const Send& s : plan) {
    for (const CapabilityRecord& rec : s.records) {
      if (effective.count(record_key(rec)) != 0) nodes[s.sender].outbox.push_back(rec);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (CapabilityRecord& rec : inbox[i]) nodes[i].outbox.push_back(std::move(rec));
  }
}

inline bool consistent(const std::vector<GossipNode>& nodes) {
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (!(nodes[i].view == nodes[0].view)) return false;
  }
  return true;
}

inline bool quiescent(const std::vector<GossipNode>& nodes) {
  for (const GossipNode& n : nodes) {
    if (!n.outbox.empty()) return false;
  }
  return true;
}

struct ConvergenceSummary {
  int median = 0;
  int p99 = 0;
  int stalled = 0;          // trials that quiesced before reaching all nodes
  std::vector<int> rounds;  // per-trial counts (stalled trials recorded at the cap)
};

// Measurement harness: per trial, inject one record at a random node of a
// fresh N-node network and count gossip rounds until every view is equal.
// A trial that goes quiescent while some node is still uninformed (possible
// but rare under forward-until-no-effect: all senders must simultaneously
// draw already-informed peers) is recorded at the round cap so it lands in
// the upper tail of the distribution rather than aborting the measurement.
inline ConvergenceSummary rounds_to_convergence(int n, int fanout, int trials,
                                                std::uint64_t rng_seed) {
  require(n >= 2, Errc::ConfigInvalid, "need at least 2 nodes");
  require(trials >= 1, Errc::ConfigInvalid, "need at least 1 trial");
  ConvergenceSummary out;
  out.rounds.reserve(static_cast<std::size_t>(trials));
  for (int trial = 0; trial < trials; ++trial) {
    std::uint64_t trial_seed = mix64(rng_seed, static_cast<std::uint64_t>(trial));
    std::vector<GossipNode> nodes(static_cast<std::size_t>(n));
    SplitMix64 g(mix64(trial_seed, 0xA11C));
    auto origin = static_cast<std::size_t>(uniform_below(g, static_cast<std::uint64_t>(n)));
    CapabilityRecord rec{static_cast<AgentId>(origin), 1, Flag::Join, Vec{1.0}};
    inject(nodes, origin, rec);

    int rounds = 0;
    const int round_cap = 50 * n + 100;  // backstop far beyond any plausible run
    bool converged = true;
    while (!consistent(nodes)) {
      if (quiescent(nodes) || rounds >= round_cap) {
        converged = false;
        break;
      }
      ++rounds;
      gossip_round(nodes, fanout, mix64(trial_seed, static_cast<std::uint64_t>(rounds)));
    }
    if (!converged) ++out.stalled;
    out.rounds.push_back(converged ? rounds : round_cap);
  }
  std::vector<int> sorted = out.rounds;
  std::sort(sorted.begin(), sorted.end());
  auto nearest_rank = [&](double q) {
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(sorted.size())));
    rank = std::max<std::size_t>(rank, 1);
    return sorted[rank - 1];
  };
  out.median = nearest_rank(0.50);
  out.p99 = nearest_rank(0.99);
  return out;
}

}  // namespace ppai::registry
