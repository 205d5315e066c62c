#pragma once
// Deterministic discrete-event simulator for the full routing stack.
//
// A population of agents doubles as the user base: every agent serves a FIFO
// queue of queries and issues queries of its own. A global Poisson process
// generates arrivals; each arrival is attributed to a uniformly chosen live
// agent, classified into one of K synthetic topic clusters, scored by an
// analytically constructed relevance gate, and routed with the Bayesian
// congestion-aware scheduler using the issuer's own (possibly stale)
// registry view and private beliefs. Chosen targets receive the query after
// a link delay, serve it at an exponential (or fixed) rate, and the outcome
// is Bernoulli in the target's ground-truth skill for the query's cluster.
//
// Everything observable is a pure function of the config: event ordering is
// a strict (time, sequence) min-heap, every stochastic draw comes from a
// named substream or a keyed one-shot generator, and no unordered container
// is iterated anywhere. Two runs of the same config produce byte-identical
// query logs and summaries.
//
// Registry views are copy-on-write snapshots: all users start from one
// shared bootstrap view, and a view is cloned only when a gossip delivery
// actually changes it, so churn-free populations share a single view no
// matter how large the network is. Gossip ticks run the same synchronous
// push round as the registry layer (retention until a record changes no
// state anywhere), rebuilt here over the shared snapshots.
//
// Churn semantics: a DELETE retires the agent from issuing and advertises a
// tombstone from the agent's own node; queries already queued or in flight
// toward it still complete (queues drain, nothing is stranded), and other
// users stop routing to it as the tombstone reaches their views. A JOIN
// (re)announces the agent's capability and resumes issuing; an UPDATE only
// re-advertises. Records originate at the churning agent and spread through
// the normal gossip ticks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <memory>
#include <ostream>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ppai/dataset.hpp"
#include "ppai/encoder.hpp"
#include "ppai/errors.hpp"
#include "ppai/jsonio.hpp"
#include "ppai/qagate.hpp"
#include "ppai/registry.hpp"
#include "ppai/rng.hpp"
#include "ppai/scheduler.hpp"
#include "ppai/vecmath.hpp"

namespace ppai::sim {

using registry::AgentId;
using registry::CapabilityRecord;
using registry::Flag;
using registry::RegistryView;

// ---------------------------------------------------------------------------
// Standalone network/observation operations

// One-way time to move `size_bits` over a link: fixed propagation delay plus
// serialization at `bandwidth` bits/second. Local handoffs are the caller's
// special case (they cost 0 and never touch a link).
inline double transfer_time(double size_bits, double link_delay, double bandwidth) {
  require(std::isfinite(size_bits) && size_bits >= 0.0, Errc::ConfigInvalid,
          "transfer size must be >= 0 bits");
  require(std::isfinite(link_delay) && link_delay >= 0.0, Errc::ConfigInvalid,
          "link delay must be >= 0");
  require(std::isfinite(bandwidth) && bandwidth > 0.0, Errc::ConfigInvalid,
          "link bandwidth must be > 0");
  return link_delay + size_bits / bandwidth;
}

// Inputs for one state observation of a candidate agent, assembled by the
// engine at routing time and kept public so the observation model can be
// recomputed independently of a running simulation.
struct ObserveInputs {
  double mu_true = 1.0;        // configured service rate of the agent
  int arrivals_in_window = 0;  // enqueues at the agent within the window
  double window = 1.0;         // trailing-window length, seconds, > 0
  double sigma = 0.0;          // std of the Gaussian noise on mu, >= 0
  std::uint64_t noise_seed = 0;  // substream seed for the noise draw
  std::uint64_t noise_key = 0;   // one-shot key (query, agent) for the draw
  double t_trans = 0.0;          // transfer time user -> agent, seconds
  double inference_time_base = 0.0;  // fixed per-query compute floor, seconds
};

// The noisy state feedback a candidate reports at decision time:
//   lambda_obs = windowed arrival rate (0 when the window saw nothing),
//   mu_obs     = true service rate + seeded Gaussian noise, clamped at 0,
//   t_infer    = base compute time + 1/mu as estimated from mu_obs,
//   t_trans    = passed through.
// The noise draw is a keyed one-shot, so the same (seed, key) reproduces the
// same observation with no generator state involved.
inline sched::Observation observe(const ObserveInputs& in) {
  require(std::isfinite(in.window) && in.window > 0.0, Errc::ConfigInvalid,
          "observation window must be > 0");
  require(in.arrivals_in_window >= 0, Errc::ConfigInvalid, "arrival count must be >= 0");
  require(std::isfinite(in.mu_true) && in.mu_true > 0.0, Errc::ConfigInvalid,
          "true service rate must be > 0");
  require(std::isfinite(in.sigma) && in.sigma >= 0.0, Errc::ConfigInvalid,
          "observation noise sigma must be >= 0");
  sched::Observation o;
  o.lambda_obs = static_cast<double>(in.arrivals_in_window) / in.window;
  o.mu_obs = std::max(0.0, in.mu_true + in.sigma * normal_at(in.noise_seed, in.noise_key));
  o.t_infer = in.inference_time_base + 1.0 / std::max(o.mu_obs, 1e-6);
  o.t_trans = in.t_trans;
  o.validate();
  return o;
}

// ---------------------------------------------------------------------------
// Configuration

struct ChurnEvent {
  double time = 0.0;
  AgentId agent = 0;
  Flag flag = Flag::Update;
  Vec cap;  // advertised capability for JOIN/UPDATE; empty = advertise truth

  static ChurnEvent from_json(const json& j, const std::string& origin) {
    reject_unknown(j, {"time", "agent", "flag", "cap"}, origin);
    ChurnEvent e;
    e.time = require_number(j, "time", origin);
    e.agent = require_uint(j, "agent", origin);
    e.flag = registry::flag_from_name(require_string(j, "flag", origin), origin);
    if (j.contains("cap")) e.cap = require_double_array(j, "cap", origin);
    return e;
  }

  json to_json() const {
    json j;
    j["time"] = time;
    j["agent"] = agent;
    j["flag"] = registry::flag_name(flag);
    if (!cap.empty()) j["cap"] = cap;
    return j;
  }
};

struct GossipConfig {
  int fanout = 3;
  double interval = 0.1;  // seconds between synchronous gossip rounds
};

// Routing policy: the full utility-maximizing scheduler, or one of the two
// reference baselines it is compared against — pinning every query to one
// designated agent, and greedily taking the best advertised-skill match with
// no congestion term (equivalent to beta = 0 with no candidate threshold).
enum class RoutingPolicy { Utility, ForcedSingle, GreedyScore };

inline const char* routing_policy_name(RoutingPolicy p) {
  switch (p) {
    case RoutingPolicy::Utility: return "utility";
    case RoutingPolicy::ForcedSingle: return "forced_single";
    case RoutingPolicy::GreedyScore: return "greedy_score";
  }
  return "utility";
}

inline RoutingPolicy routing_policy_from_name(const std::string& s, const std::string& origin) {
  if (s == "utility") return RoutingPolicy::Utility;
  if (s == "forced_single") return RoutingPolicy::ForcedSingle;
  if (s == "greedy_score") return RoutingPolicy::GreedyScore;
  fail(Errc::ParseError, origin + ": unknown routing policy '" + s + "'");
}

struct RoutingConfig {
  RoutingPolicy policy = RoutingPolicy::Utility;
  AgentId forced_agent = 0;  // only meaningful under ForcedSingle
};

struct GridConfig {
  double mu_min = 1.0, mu_max = 20.0;
  int n_mu = 8;
  double lambda_min = 0.0, lambda_max = 20.0;
  int n_lambda = 8;

  sched::TypeGrid build() const {
    return sched::TypeGrid::linear(mu_min, mu_max, n_mu, lambda_min, lambda_max, n_lambda);
  }
};

struct SchedulerConfig {
  double theta_s = 0.2;            // relevance threshold for candidates
  double beta = 1e-3;              // congestion weight in the utility
  double delta = 0.01;             // load-prediction horizon, seconds
  double sigma = 0.5;              // observation noise std (world + belief model)
  double observation_window = 1.0; // trailing window for lambda_obs, seconds
  GridConfig grid;

  sched::RoutingParams routing_params() const {
    sched::RoutingParams p;
    p.theta_s = theta_s;
    p.beta = beta;
    p.delta = delta;
    p.sigma = sigma;
    return p;
  }
};

struct SimConfig {
  int n_agents = 0;
  std::vector<Vec> agent_truth_profiles;  // n_agents rows, K in [0,1] each
  double arrival_rate_lambda = 0.0;       // global Poisson rate, queries/s
  std::vector<double> service_rate_mu;    // per agent, queries/s, > 0
  double duration = 0.0;                  // simulated horizon, seconds
  std::uint64_t seed = 0;

  double inference_time_base = 0.0;  // seconds added to every service estimate
  double link_delay = 0.005;         // seconds, one-way
  double link_bandwidth = 2e9;       // bits/second
  double query_size_bits = 65536.0;  // 8 KiB per query on the wire
  bool deterministic_service = false;  // service takes exactly 1/mu (test mode)

  double churn_rate = 0.0;               // generated toggle events/second
  std::vector<ChurnEvent> churn_schedule;  // explicit events, any order
  GossipConfig gossip;
  SchedulerConfig scheduler;
  RoutingConfig routing;

  int n_clusters() const {
    return agent_truth_profiles.empty() ? 0
                                        : static_cast<int>(agent_truth_profiles[0].size());
  }

  void validate() const {
    require(n_agents >= 1, Errc::ConfigInvalid, "n_agents must be >= 1");
    require(static_cast<int>(agent_truth_profiles.size()) == n_agents, Errc::ConfigInvalid,
            "need one truth profile per agent");
    int k = n_clusters();
    require(k >= 2, Errc::ConfigInvalid, "truth profiles need >= 2 clusters");
    for (const Vec& row : agent_truth_profiles) {
      require(static_cast<int>(row.size()) == k, Errc::DimensionMismatch,
              "truth profiles must share one width");
      bool any = false;
      for (double x : row) {
        require(std::isfinite(x) && x >= 0.0 && x <= 1.0, Errc::ConfigInvalid,
                "truth entries must lie in [0,1]");
        if (x > 0.0) any = true;
      }
      require(any, Errc::ConfigInvalid, "truth profile must not be the zero vector");
    }
    require(std::isfinite(arrival_rate_lambda) && arrival_rate_lambda > 0.0,
            Errc::ConfigInvalid, "arrival rate must be > 0");
    require(static_cast<int>(service_rate_mu.size()) == n_agents, Errc::ConfigInvalid,
            "need one service rate per agent");
    for (double m : service_rate_mu) {
      require(std::isfinite(m) && m > 0.0, Errc::ConfigInvalid, "service rates must be > 0");
    }
    require(std::isfinite(duration) && duration > 0.0, Errc::ConfigInvalid,
            "duration must be > 0");
    require(std::isfinite(inference_time_base) && inference_time_base >= 0.0,
            Errc::ConfigInvalid, "inference_time_base must be >= 0");
    require(std::isfinite(query_size_bits) && query_size_bits >= 0.0, Errc::ConfigInvalid,
            "query_size_bits must be >= 0");
    require(std::isfinite(link_delay) && link_delay >= 0.0, Errc::ConfigInvalid,
            "link_delay must be >= 0");
    require(std::isfinite(link_bandwidth) && link_bandwidth > 0.0, Errc::ConfigInvalid,
            "link_bandwidth must be > 0");
    require(std::isfinite(churn_rate) && churn_rate >= 0.0, Errc::ConfigInvalid,
            "churn_rate must be >= 0");
    for (const ChurnEvent& e : churn_schedule) {
      require(std::isfinite(e.time) && e.time >= 0.0, Errc::ConfigInvalid,
              "churn event time must be >= 0");
      require(e.agent < static_cast<AgentId>(n_agents), Errc::ConfigInvalid,
              "churn event names an agent outside the population");
      if (e.flag == Flag::Delete) {
        require(e.cap.empty(), Errc::ConfigInvalid, "DELETE churn must not carry a capability");
      } else if (!e.cap.empty()) {
        require(static_cast<int>(e.cap.size()) == k, Errc::DimensionMismatch,
                "churn capability width != cluster count");
      }
    }
    require(gossip.fanout >= 1, Errc::ConfigInvalid, "gossip fanout must be >= 1");
    if (n_agents >= 2) {
      require(gossip.fanout <= n_agents - 1, Errc::FanoutTooLarge,
              "gossip fanout must be <= n_agents - 1");
    }
    require(std::isfinite(gossip.interval) && gossip.interval > 0.0, Errc::ConfigInvalid,
            "gossip interval must be > 0");
    if (routing.policy == RoutingPolicy::ForcedSingle) {
      require(routing.forced_agent < static_cast<AgentId>(n_agents), Errc::ConfigInvalid,
              "forced_agent outside the population");
    }
    require(scheduler.observation_window > 0.0, Errc::ConfigInvalid,
            "observation window must be > 0");
    scheduler.routing_params().validate();
    scheduler.grid.build();  // throws on a bad grid
  }

  static SimConfig from_json(const json& j, const std::string& origin = "sim config") {
    reject_unknown(j,
                   {"n_agents", "agent_truth_profiles", "arrival_rate_lambda",
                    "service_rate_mu", "duration", "seed", "inference_time_base",
                    "link_delay", "link_bandwidth", "query_size_bits",
                    "deterministic_service", "churn_rate", "churn_schedule", "gossip",
                    "scheduler", "routing"},
                   origin);
    SimConfig c;
    c.n_agents = static_cast<int>(require_uint(j, "n_agents", origin));
    const json& profiles = require_field(j, "agent_truth_profiles", origin);
    require(profiles.is_array(), Errc::ParseError, origin + ": truth profiles must be an array");
    for (std::size_t i = 0; i < profiles.size(); ++i) {
      const json& row = profiles[i];
      require(row.is_array(), Errc::ParseError, origin + ": truth profile must be an array");
      Vec v;
      v.reserve(row.size());
      for (const auto& x : row) {
        require(x.is_number(), Errc::ParseError, origin + ": truth entries must be numbers");
        v.push_back(x.get<double>());
      }
      c.agent_truth_profiles.push_back(std::move(v));
    }
    c.arrival_rate_lambda = require_number(j, "arrival_rate_lambda", origin);
    const json& mu = require_field(j, "service_rate_mu", origin);
    if (mu.is_number()) {
      c.service_rate_mu.assign(static_cast<std::size_t>(std::max(c.n_agents, 0)),
                               mu.get<double>());
    } else {
      c.service_rate_mu = require_double_array(j, "service_rate_mu", origin);
    }
    c.duration = require_number(j, "duration", origin);
    c.seed = require_uint(j, "seed", origin);
    if (j.contains("inference_time_base"))
      c.inference_time_base = require_number(j, "inference_time_base", origin);
    if (j.contains("link_delay")) c.link_delay = require_number(j, "link_delay", origin);
    if (j.contains("link_bandwidth"))
      c.link_bandwidth = require_number(j, "link_bandwidth", origin);
    if (j.contains("query_size_bits"))
      c.query_size_bits = require_number(j, "query_size_bits", origin);
    if (j.contains("deterministic_service"))
      c.deterministic_service = require_bool(j, "deterministic_service", origin);
    if (j.contains("churn_rate")) c.churn_rate = require_number(j, "churn_rate", origin);
    if (j.contains("churn_schedule")) {
      const json& sched_j = j["churn_schedule"];
      require(sched_j.is_array(), Errc::ParseError, origin + ": churn_schedule must be an array");
      for (const auto& e : sched_j) {
        c.churn_schedule.push_back(ChurnEvent::from_json(e, origin + ".churn_schedule"));
      }
    }
    if (j.contains("gossip")) {
      const json& g = j["gossip"];
      reject_unknown(g, {"fanout", "interval"}, origin + ".gossip");
      if (g.contains("fanout")) c.gossip.fanout = static_cast<int>(require_uint(g, "fanout", origin));
      if (g.contains("interval")) c.gossip.interval = require_number(g, "interval", origin);
    }
    if (j.contains("routing")) {
      const json& r = j["routing"];
      reject_unknown(r, {"policy", "forced_agent"}, origin + ".routing");
      if (r.contains("policy"))
        c.routing.policy = routing_policy_from_name(require_string(r, "policy", origin), origin);
      if (r.contains("forced_agent"))
        c.routing.forced_agent = require_uint(r, "forced_agent", origin);
    }
    if (j.contains("scheduler")) {
      const json& s = j["scheduler"];
      reject_unknown(s, {"theta_s", "beta", "delta", "sigma", "observation_window", "grid"},
                     origin + ".scheduler");
      if (s.contains("theta_s")) c.scheduler.theta_s = require_number(s, "theta_s", origin);
      if (s.contains("beta")) c.scheduler.beta = require_number(s, "beta", origin);
      if (s.contains("delta")) c.scheduler.delta = require_number(s, "delta", origin);
      if (s.contains("sigma")) c.scheduler.sigma = require_number(s, "sigma", origin);
      if (s.contains("observation_window"))
        c.scheduler.observation_window = require_number(s, "observation_window", origin);
      if (s.contains("grid")) {
        const json& g = s["grid"];
        reject_unknown(g, {"mu_min", "mu_max", "n_mu", "lambda_min", "lambda_max", "n_lambda"},
                       origin + ".scheduler.grid");
        GridConfig& gc = c.scheduler.grid;
        if (g.contains("mu_min")) gc.mu_min = require_number(g, "mu_min", origin);
        if (g.contains("mu_max")) gc.mu_max = require_number(g, "mu_max", origin);
        if (g.contains("n_mu")) gc.n_mu = static_cast<int>(require_uint(g, "n_mu", origin));
        if (g.contains("lambda_min")) gc.lambda_min = require_number(g, "lambda_min", origin);
        if (g.contains("lambda_max")) gc.lambda_max = require_number(g, "lambda_max", origin);
        if (g.contains("n_lambda"))
          gc.n_lambda = static_cast<int>(require_uint(g, "n_lambda", origin));
      }
    }
    c.validate();
    return c;
  }

  json to_json() const {
    json j;
    j["n_agents"] = n_agents;
    j["agent_truth_profiles"] = agent_truth_profiles;
    j["arrival_rate_lambda"] = arrival_rate_lambda;
    j["service_rate_mu"] = service_rate_mu;
    j["duration"] = duration;
    j["seed"] = seed;
    j["inference_time_base"] = inference_time_base;
    j["link_delay"] = link_delay;
    j["link_bandwidth"] = link_bandwidth;
    j["query_size_bits"] = query_size_bits;
    j["deterministic_service"] = deterministic_service;
    j["churn_rate"] = churn_rate;
    json sched_j = json::array();
    for (const ChurnEvent& e : churn_schedule) sched_j.push_back(e.to_json());
    j["churn_schedule"] = std::move(sched_j);
    j["gossip"] = json{{"fanout", gossip.fanout}, {"interval", gossip.interval}};
    j["routing"] = json{{"policy", routing_policy_name(routing.policy)},
                        {"forced_agent", routing.forced_agent}};
    j["scheduler"] =
        json{{"theta_s", scheduler.theta_s},
             {"beta", scheduler.beta},
             {"delta", scheduler.delta},
             {"sigma", scheduler.sigma},
             {"observation_window", scheduler.observation_window},
             {"grid", json{{"mu_min", scheduler.grid.mu_min},
                           {"mu_max", scheduler.grid.mu_max},
                           {"n_mu", scheduler.grid.n_mu},
                           {"lambda_min", scheduler.grid.lambda_min},
                           {"lambda_max", scheduler.grid.lambda_max},
                           {"n_lambda", scheduler.grid.n_lambda}}}};
    return j;
  }
};

// Specialist population generator: agent i majors in cluster i mod K with
// skill `specialist` and carries `off` elsewhere, plus seeded jitter in
// [0, jitter) per entry (clamped into [0,1]). With n_agents > n_clusters the
// population contains near-duplicate specialists whose advertised scores
// differ only by the jitter — the regime where congestion pressure in the
// utility actually changes routing.
inline std::vector<Vec> make_specialist_profiles(int n_agents, int n_clusters,
                                                 double specialist, double off,
                                                 double jitter, std::uint64_t seed) {
  require(n_agents >= 1 && n_clusters >= 2, Errc::ConfigInvalid,
          "specialist population needs n_agents >= 1, n_clusters >= 2");
  require(specialist > 0.0 && specialist <= 1.0 && off >= 0.0 && off <= 1.0,
          Errc::ConfigInvalid, "skill levels must lie in (0,1] / [0,1]");
  require(std::isfinite(jitter) && jitter >= 0.0, Errc::ConfigInvalid,
          "jitter must be >= 0");
  SplitMix64 g(mix64(seed, 0x5EC1A1157ULL));
  std::vector<Vec> out(static_cast<std::size_t>(n_agents));
  for (int i = 0; i < n_agents; ++i) {
    Vec row(static_cast<std::size_t>(n_clusters));
    for (int k = 0; k < n_clusters; ++k) {
      double base = (k == i % n_clusters) ? specialist : off;
      row[static_cast<std::size_t>(k)] = std::clamp(base + jitter * uniform01(g), 0.0, 1.0);
    }
    out[static_cast<std::size_t>(i)] = std::move(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Events, per-query log records, summary

enum class EventKind { Arrival, TransferDone, ServiceDone, GossipTick, Churn };

struct SimEvent {
  double time = 0.0;
  std::uint64_t seq = 0;  // global push counter; (time, seq) is a total order
  EventKind kind = EventKind::Arrival;
  std::uint64_t qid = 0;       // TransferDone / ServiceDone
  AgentId agent = 0;           // ServiceDone
  std::size_t churn_index = 0; // Churn
};

struct QueryRecord {
  std::uint64_t id = 0;
  AgentId origin = 0;
  int cluster = 0;  // index of the 1 in the one-hot ground-truth label
  double issue_time = 0.0;
  AgentId target = 0;
  double enqueue_time = 0.0;
  double service_start = 0.0;
  double completion_time = 0.0;
  bool correct = false;

  // One NDJSON line; the label is materialized as the one-hot mix over the
  // K workload clusters.
  json to_json(int n_clusters) const {
    Vec label(static_cast<std::size_t>(n_clusters), 0.0);
    label[static_cast<std::size_t>(cluster)] = 1.0;
    json j;
    j["id"] = id;
    j["origin"] = origin;
    j["true_label"] = label;
    j["issue_time"] = issue_time;
    j["target"] = target;
    j["enqueue_time"] = enqueue_time;
    j["service_start"] = service_start;
    j["completion_time"] = completion_time;
    j["correct"] = correct;
    return j;
  }
};

struct MetricsSummary {
  std::uint64_t issued = 0;
  std::uint64_t completed = 0;
  std::uint64_t in_flight = 0;  // issued - completed at the horizon
  double avg_accuracy = 0.0;     // fraction correct among completed
  double avg_process_time = 0.0; // mean (completion - issue) among completed
  double assignment_entropy = 0.0;  // Shannon entropy (nats) of target shares
  std::uint64_t skipped_arrivals = 0;  // arrivals with no live agent to issue from
  std::vector<std::uint64_t> per_agent_routed;     // targets chosen at issue time
  std::vector<std::uint64_t> per_agent_completed;  // targets that finished serving

  json to_json() const {
    json j;
    j["issued"] = issued;
    j["completed"] = completed;
    j["in_flight"] = in_flight;
    j["avg_accuracy"] = avg_accuracy;
    j["avg_process_time"] = avg_process_time;
    j["assignment_entropy"] = assignment_entropy;
    j["skipped_arrivals"] = skipped_arrivals;
    j["per_agent_routed"] = per_agent_routed;
    j["per_agent_completed"] = per_agent_completed;
    return j;
  }
};

struct SimResult {
  MetricsSummary metrics;
  std::vector<QueryRecord> records;  // completed queries, completion order
  int n_clusters = 0;
};

inline void write_records_ndjson(std::ostream& os, const SimResult& r) {
  for (const QueryRecord& rec : r.records) {
    os << canonical_dump(rec.to_json(r.n_clusters)) << '\n';
  }
}

inline void write_records_ndjson(const std::string& path, const SimResult& r) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), Errc::IoError, "cannot open for writing: " + path);
  write_records_ndjson(os, r);
  require(os.good(), Errc::IoError, "write failed: " + path);
}

// ---------------------------------------------------------------------------
// Engine

namespace detail {

// Named substream tags under the run seed. Sequential streams cover draws
// whose order is fixed by the event loop itself; keyed one-shots cover draws
// that must be reproducible per (query, agent) regardless of event order.
inline constexpr std::uint64_t kSubArrivals = 0xD1;  // inter-arrival gaps
inline constexpr std::uint64_t kSubOrigin = 0xD2;    // issuing-user choice
inline constexpr std::uint64_t kSubCluster = 0xD3;   // query topic cluster
inline constexpr std::uint64_t kSubFiller = 0xD4;    // filler-text variant
inline constexpr std::uint64_t kSubService = 0xD5;   // service durations
inline constexpr std::uint64_t kSubCorrect = 0xD6;   // keyed: outcome coin
inline constexpr std::uint64_t kSubObsNoise = 0xD7;  // keyed: mu_obs noise
inline constexpr std::uint64_t kSubGossip = 0xD8;    // per-tick round seeds
inline constexpr std::uint64_t kSubChurn = 0xD9;     // generated churn

inline constexpr int kFillerVariants = 8;

// The workload's relevance gate, built analytically instead of trained: the
// identity projector over a 64-dim hashed token space with one prototype per
// cluster (the embedding of that cluster's marker token). A query of cluster
// c is the marker plus two variant-specific filler tokens, so its masked
// relevance concentrates on prototype c by construction. All (cluster,
// variant) relevance vectors are precomputed; arrivals index the table.
struct Workload {
  int n_clusters = 0;
  std::vector<Vec> rel_table;  // [cluster * kFillerVariants + variant]

  static Workload build(int k) {
    require(k >= 2, Errc::ConfigInvalid, "workload needs >= 2 clusters");
    qagate::Gate gate;
    gate.encoder = HashEncoder(64, 5);
    gate.proj = qagate::Projector::identity_passthrough(64);
    gate.protos.k = k;
    gate.protos.dim = 64;
    gate.protos.data.clear();
    for (int c = 0; c < k; ++c) {
      Vec e = gate.encoder.encode(qagate::cluster_marker(c));
      gate.protos.data.insert(gate.protos.data.end(), e.begin(), e.end());
    }
    Workload w;
    w.n_clusters = k;
    w.rel_table.reserve(static_cast<std::size_t>(k * kFillerVariants));
    for (int c = 0; c < k; ++c) {
      for (int f = 0; f < kFillerVariants; ++f) {
        std::string text = qagate::cluster_marker(c) + " fizz" + std::to_string(f) +
                           " buzz" + std::to_string(f);
        w.rel_table.push_back(gate.masked_relevance(text));
      }
    }
    return w;
  }

  const Vec& relevance(int cluster, int variant) const {
    return rel_table[static_cast<std::size_t>(cluster * kFillerVariants + variant)];
  }
};

}  // namespace detail

class Simulator {
 public:
  explicit Simulator(SimConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    workload_ = detail::Workload::build(cfg_.n_clusters());
  }

  SimResult run() {
    setup();
    while (!heap_.empty()) {
      SimEvent ev = heap_.top();
      if (ev.time > cfg_.duration) break;
      heap_.pop();
      now_ = ev.time;
      switch (ev.kind) {
        case EventKind::Arrival: on_arrival(); break;
        case EventKind::TransferDone: on_transfer_done(ev.qid); break;
        case EventKind::ServiceDone: on_service_done(ev.agent, ev.qid); break;
        case EventKind::GossipTick: on_gossip_tick(); break;
        case EventKind::Churn: on_churn(churn_plan_[ev.churn_index]); break;
      }
    }
    return finish();
  }

 private:
  struct QueryState {
    AgentId origin = 0;
    int cluster = 0;
    int variant = 0;
    AgentId target = 0;
    double issue_time = 0.0;
    double enqueue_time = 0.0;
    double service_start = 0.0;
    double completion_time = 0.0;
    bool correct = false;
    bool completed = false;
  };

  struct UserNode {
    std::shared_ptr<const RegistryView> view;
    std::vector<CapabilityRecord> outbox;
    sched::BeliefStore beliefs;
  };

  struct AgentRuntime {
    std::deque<std::uint64_t> fifo;   // waiting queries, FIFO
    bool busy = false;
    std::deque<double> window_arrivals;  // enqueue times for lambda_obs
  };

  struct EventOrder {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      if (a.time != b.time) return a.time > b.time;
      return a.seq > b.seq;
    }
  };

  void push_event(double time, EventKind kind, std::uint64_t qid = 0, AgentId agent = 0,
                  std::size_t churn_index = 0) {
    heap_.push(SimEvent{time, next_seq_++, kind, qid, agent, churn_index});
  }

  void setup() {
    int n = cfg_.n_agents;
    arrivals_g_ = SplitMix64(mix64(cfg_.seed, detail::kSubArrivals));
    origin_g_ = SplitMix64(mix64(cfg_.seed, detail::kSubOrigin));
    cluster_g_ = SplitMix64(mix64(cfg_.seed, detail::kSubCluster));
    filler_g_ = SplitMix64(mix64(cfg_.seed, detail::kSubFiller));
    service_g_ = SplitMix64(mix64(cfg_.seed, detail::kSubService));
    correct_seed_ = mix64(cfg_.seed, detail::kSubCorrect);
    obs_seed_ = mix64(cfg_.seed, detail::kSubObsNoise);
    gossip_seed_ = mix64(cfg_.seed, detail::kSubGossip);

    grid_ = std::make_shared<const sched::TypeGrid>(cfg_.scheduler.grid.build());

    // Bootstrap: everyone starts knowing everyone's advertised capability
    // (= truth profile) at logical time 1, sharing one view snapshot.
    auto boot = std::make_shared<RegistryView>();
    ts_counter_.assign(static_cast<std::size_t>(n), 1);
    for (int a = 0; a < n; ++a) {
      boot->live[static_cast<AgentId>(a)] = {cfg_.agent_truth_profiles[static_cast<std::size_t>(a)],
                                             1};
    }
    users_.clear();
    users_.resize(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
      users_[static_cast<std::size_t>(a)].view = boot;
      users_[static_cast<std::size_t>(a)].beliefs = sched::BeliefStore(grid_);
    }
    agents_.assign(static_cast<std::size_t>(n), AgentRuntime{});
    alive_.assign(static_cast<std::size_t>(n), 1);
    queries_.clear();
    records_.clear();
    issued_ = 0;
    skipped_no_live_agent_ = 0;
    now_ = 0.0;
    next_seq_ = 0;
    next_gossip_tick_ = 1;
    heap_ = {};

    build_churn_plan();
    for (std::size_t i = 0; i < churn_plan_.size(); ++i) {
      if (churn_plan_[i].time <= cfg_.duration) {
        push_event(churn_plan_[i].time, EventKind::Churn, 0, 0, i);
      }
    }
    if (n >= 2 && cfg_.gossip.interval <= cfg_.duration) {
      push_event(cfg_.gossip.interval, EventKind::GossipTick);
    }
    double first = exponential(arrivals_g_, cfg_.arrival_rate_lambda);
    if (first <= cfg_.duration) push_event(first, EventKind::Arrival);
  }

  // Explicit schedule entries plus generated rate-driven churn, merged into
  // one time-sorted plan. Generated churn toggles a uniformly drawn agent:
  // alive agents (never the last one) get a DELETE, departed agents rejoin
  // with their truth capability.
  void build_churn_plan() {
    churn_plan_ = cfg_.churn_schedule;
    if (cfg_.churn_rate > 0.0) {
      SplitMix64 g(mix64(cfg_.seed, detail::kSubChurn));
      std::vector<char> projected(static_cast<std::size_t>(cfg_.n_agents), 1);
      int alive_count = cfg_.n_agents;
      double t = 0.0;
      while (true) {
        t += exponential(g, cfg_.churn_rate);
        if (t > cfg_.duration) break;
        auto a = static_cast<AgentId>(uniform_below(g, static_cast<std::uint64_t>(cfg_.n_agents)));
        if (projected[a]) {
          if (alive_count <= 1) continue;  // never depopulate the network
          projected[a] = 0;
          --alive_count;
          churn_plan_.push_back({t, a, Flag::Delete, {}});
        } else {
          projected[a] = 1;
          ++alive_count;
          churn_plan_.push_back({t, a, Flag::Join, {}});
        }
      }
    }
    std::stable_sort(churn_plan_.begin(), churn_plan_.end(),
                     [](const ChurnEvent& x, const ChurnEvent& y) { return x.time < y.time; });
  }

  // --- event handlers ------------------------------------------------------

  void on_arrival() {
    // Schedule the successor first so the arrival stream is one fixed
    // sequence regardless of what this arrival does.
    double next = now_ + exponential(arrivals_g_, cfg_.arrival_rate_lambda);
    if (next <= cfg_.duration) push_event(next, EventKind::Arrival);

    std::vector<AgentId> live_users;
    live_users.reserve(alive_.size());
    for (std::size_t a = 0; a < alive_.size(); ++a) {
      if (alive_[a]) live_users.push_back(static_cast<AgentId>(a));
    }
    std::uint64_t origin_draw = uniform_below(origin_g_, std::max<std::uint64_t>(1, live_users.size()));
    auto cluster = static_cast<int>(uniform_below(cluster_g_, static_cast<std::uint64_t>(workload_.n_clusters)));
    auto variant = static_cast<int>(uniform_below(filler_g_, detail::kFillerVariants));
    if (live_users.empty()) {
      ++skipped_no_live_agent_;  // draws above stay consumed: one per arrival
      return;
    }
    AgentId user = live_users[origin_draw];

    std::uint64_t qid = queries_.size();
    QueryState q;
    q.origin = user;
    q.cluster = cluster;
    q.variant = variant;
    q.issue_time = now_;

    q.target = route_query(user, qid, cluster, variant);
    double p_correct =
        cfg_.agent_truth_profiles[static_cast<std::size_t>(q.target)][static_cast<std::size_t>(cluster)];
    q.correct = uniform_at(correct_seed_, qid) < p_correct;

    double t_trans = (q.target == user)
                         ? 0.0
                         : transfer_time(cfg_.query_size_bits, cfg_.link_delay, cfg_.link_bandwidth);
    queries_.push_back(q);
    ++issued_;
    push_event(now_ + t_trans, EventKind::TransferDone, qid);
  }

  AgentId route_query(AgentId user, std::uint64_t qid, int cluster, int variant) {
    if (cfg_.routing.policy == RoutingPolicy::ForcedSingle) return cfg_.routing.forced_agent;
    UserNode& u = users_[static_cast<std::size_t>(user)];
    if (u.view->live.empty()) return user;  // everyone tombstoned: serve locally
    if (cfg_.routing.policy == RoutingPolicy::GreedyScore) {
      // Highest advertised-skill match in the user's view, ties to the
      // lowest id; no congestion term, no candidate threshold.
      const Vec& rel = workload_.relevance(cluster, variant);
      AgentId best_agent = user;
      double best = -1.0;
      for (const auto& [agent, entry] : u.view->live) {
        double s = qagate::score(rel, entry.first);
        if (s > best) {
          best = s;
          best_agent = agent;
        }
      }
      return best_agent;
    }
    auto observe_fn = [&](AgentId a) {
      ObserveInputs in;
      in.mu_true = cfg_.service_rate_mu[static_cast<std::size_t>(a)];
      in.arrivals_in_window = window_count(a);
      in.window = cfg_.scheduler.observation_window;
      in.sigma = cfg_.scheduler.sigma;
      in.noise_seed = obs_seed_;
      in.noise_key = mix64(qid, a);
      in.t_trans = (a == user) ? 0.0
                               : transfer_time(cfg_.query_size_bits, cfg_.link_delay,
                                               cfg_.link_bandwidth);
      in.inference_time_base = cfg_.inference_time_base;
      return observe(in);
    };
    sched::RoutingDecision d =
        sched::route(user, workload_.relevance(cluster, variant), *u.view, u.beliefs,
                     observe_fn, cfg_.scheduler.routing_params());
    return d.chosen;
  }

  int window_count(AgentId a) {
    auto& w = agents_[static_cast<std::size_t>(a)].window_arrivals;
    double cutoff = now_ - cfg_.scheduler.observation_window;
    while (!w.empty() && w.front() <= cutoff) w.pop_front();
    return static_cast<int>(w.size());
  }

  void on_transfer_done(std::uint64_t qid) {
    QueryState& q = queries_[qid];
    q.enqueue_time = now_;
    AgentRuntime& a = agents_[static_cast<std::size_t>(q.target)];
    a.window_arrivals.push_back(now_);
    if (a.busy) {
      a.fifo.push_back(qid);
    } else {
      start_service(q.target, qid);
    }
  }

  void start_service(AgentId agent, std::uint64_t qid) {
    AgentRuntime& a = agents_[static_cast<std::size_t>(agent)];
    a.busy = true;
    QueryState& q = queries_[qid];
    q.service_start = now_;
    double mu = cfg_.service_rate_mu[static_cast<std::size_t>(agent)];
    double dur = cfg_.deterministic_service ? 1.0 / mu : exponential(service_g_, mu);
    push_event(now_ + dur, EventKind::ServiceDone, qid, agent);
  }

  void on_service_done(AgentId agent, std::uint64_t qid) {
    QueryState& q = queries_[qid];
    q.completion_time = now_;
    q.completed = true;
    require(q.issue_time <= q.enqueue_time && q.enqueue_time <= q.service_start &&
                q.service_start <= q.completion_time,
            Errc::SpecInvalid, "query lifecycle timestamps out of order");
    records_.push_back(QueryRecord{qid, q.origin, q.cluster, q.issue_time, q.target,
                                   q.enqueue_time, q.service_start, q.completion_time,
                                   q.correct});
    AgentRuntime& a = agents_[static_cast<std::size_t>(agent)];
    a.busy = false;
    if (!a.fifo.empty()) {
      std::uint64_t next = a.fifo.front();
      a.fifo.pop_front();
      start_service(agent, next);
    }
  }

  // One synchronous gossip round over the copy-on-write views, with the same
  // plan/deliver/retain shape as the registry layer: pending records go to
  // fanout seeded peers, receivers clone-and-merge only on actual change,
  // and a record stays pending somewhere until a round in which it changed
  // no view at all.
  void on_gossip_tick() {
    std::uint64_t tick = next_gossip_tick_++;
    double next_time = cfg_.gossip.interval * static_cast<double>(tick + 1);
    if (next_time <= cfg_.duration) push_event(next_time, EventKind::GossipTick);

    std::size_t n = users_.size();
    struct Send {
      std::size_t sender;
      std::vector<std::size_t> peers;
      std::vector<CapabilityRecord> records;
    };
    std::vector<Send> plan;
    std::uint64_t round_seed = mix64(gossip_seed_, tick);
    for (std::size_t i = 0; i < n; ++i) {
      if (users_[i].outbox.empty()) continue;
      plan.push_back({i, registry::sample_peers(n, i, cfg_.gossip.fanout, round_seed),
                      std::move(users_[i].outbox)});
      users_[i].outbox.clear();
    }
    if (plan.empty()) return;

    std::vector<std::vector<CapabilityRecord>> inbox(n);
    std::set<registry::RecordKey> effective;
    for (const Send& s : plan) {
      for (std::size_t peer : s.peers) {
        for (const CapabilityRecord& rec : s.records) {
          if (deliver(peer, rec)) {
            inbox[peer].push_back(rec);
            effective.insert(registry::record_key(rec));
          }
        }
      }
    }
    for (const Send& s : plan) {
      for (const CapabilityRecord& rec : s.records) {
        if (effective.count(registry::record_key(rec)) != 0) {
          users_[s.sender].outbox.push_back(rec);
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (CapabilityRecord& rec : inbox[i]) users_[i].outbox.push_back(std::move(rec));
    }
  }

  // Copy-on-write merge into one user's view snapshot.
  bool deliver(std::size_t user, const CapabilityRecord& rec) {
    UserNode& u = users_[user];
    if (!registry::would_change(*u.view, rec)) return false;
    auto next = std::make_shared<RegistryView>(*u.view);
    registry::apply(*next, rec);
    u.view = std::move(next);
    return true;
  }

  void on_churn(const ChurnEvent& e) {
    auto idx = static_cast<std::size_t>(e.agent);
    CapabilityRecord rec;
    rec.agent = e.agent;
    rec.ts = ++ts_counter_[idx];
    rec.flag = e.flag;
    if (e.flag == Flag::Delete) {
      alive_[idx] = 0;
    } else {
      rec.cap = e.cap.empty() ? cfg_.agent_truth_profiles[idx] : e.cap;
      if (e.flag == Flag::Join) alive_[idx] = 1;
    }
    rec.validate();
    if (deliver(idx, rec)) users_[idx].outbox.push_back(rec);
  }

  // --- summary --------------------------------------------------------------

  SimResult finish() {
    MetricsSummary m;
    m.issued = issued_;
    m.completed = records_.size();
    m.in_flight = issued_ - m.completed;
    m.skipped_arrivals = skipped_no_live_agent_;
    m.per_agent_routed.assign(static_cast<std::size_t>(cfg_.n_agents), 0);
    m.per_agent_completed.assign(static_cast<std::size_t>(cfg_.n_agents), 0);
    for (const QueryState& q : queries_) {
      ++m.per_agent_routed[static_cast<std::size_t>(q.target)];
    }
    double correct = 0.0;
    double total_time = 0.0;
    for (const QueryRecord& r : records_) {
      ++m.per_agent_completed[static_cast<std::size_t>(r.target)];
      if (r.correct) correct += 1.0;
      total_time += r.completion_time - r.issue_time;
    }
    if (m.completed > 0) {
      m.avg_accuracy = correct / static_cast<double>(m.completed);
      m.avg_process_time = total_time / static_cast<double>(m.completed);
      double h = 0.0;
      for (std::uint64_t c : m.per_agent_completed) {
        if (c == 0) continue;
        double p = static_cast<double>(c) / static_cast<double>(m.completed);
        h -= p * std::log(p);
      }
      m.assignment_entropy = h;
    }
    SimResult out;
    out.metrics = std::move(m);
    out.records = std::move(records_);
    out.n_clusters = workload_.n_clusters;
    return out;
  }

  SimConfig cfg_;
  detail::Workload workload_;

  std::shared_ptr<const sched::TypeGrid> grid_;
  std::vector<UserNode> users_;
  std::vector<AgentRuntime> agents_;
  std::vector<char> alive_;
  std::vector<std::uint64_t> ts_counter_;
  std::vector<ChurnEvent> churn_plan_;

  std::priority_queue<SimEvent, std::vector<SimEvent>, EventOrder> heap_;
  std::vector<QueryState> queries_;
  std::vector<QueryRecord> records_;
  std::uint64_t issued_ = 0;
  std::uint64_t skipped_no_live_agent_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_gossip_tick_ = 1;
  double now_ = 0.0;

  SplitMix64 arrivals_g_, origin_g_, cluster_g_, filler_g_, service_g_;
  std::uint64_t correct_seed_ = 0, obs_seed_ = 0, gossip_seed_ = 0;
};

inline SimResult run_simulation(const SimConfig& cfg) { return Simulator(cfg).run(); }

}  // namespace ppai::sim
