#pragma once

// Congestion-aware routing under incomplete information.
//
// Each user keeps, per candidate agent, a discrete belief over that agent's
// private type (service rate mu, arrival rate lambda) on a finite grid.
// A routing decision (one query) runs:
//
//   1. candidate set = live agents whose relevance/capability score clears
//      theta_s, plus the local agent as a guaranteed fallback;
//   2. per candidate: request a fresh observation, Bayes-update the belief
//      with independent Gaussian likelihoods on (lambda_obs, mu_obs);
//   3. cost of delegation = expected queue load (belief-weighted, clamped
//      to [0,1]) + inference time + transfer time;
//   4. utility = score - beta * cost; pick the argmax, lowest id on ties.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "ppai/errors.hpp"
#include "ppai/qagate.hpp"
#include "ppai/registry.hpp"
#include "ppai/vecmath.hpp"

namespace ppai::sched {

using registry::AgentId;
using registry::RegistryView;

struct AgentType {
  double mu = 1.0;      // service rate, queries/second, > 0
  double lambda = 0.0;  // arrival rate, queries/second, >= 0
};

struct TypeGrid {
  std::vector<double> mu_values;      // sorted ascending, all > 0
  std::vector<double> lambda_values;  // sorted ascending, all >= 0

  static TypeGrid linear(double mu_min, double mu_max, int n_mu, double lambda_min,
                         double lambda_max, int n_lambda) {
    TypeGrid g;
    g.mu_values = linspace(mu_min, mu_max, n_mu);
    g.lambda_values = linspace(lambda_min, lambda_max, n_lambda);
    g.validate();
    return g;
  }

  int n_cells() const {
    return static_cast<int>(mu_values.size() * lambda_values.size());
  }

  // Cell index layout: mu-major, idx = mu_index * n_lambda + lambda_index.
  AgentType cell(int idx) const {
    int nl = static_cast<int>(lambda_values.size());
    return {mu_values[static_cast<std::size_t>(idx / nl)],
            lambda_values[static_cast<std::size_t>(idx % nl)]};
  }

  void validate() const {
    require(!mu_values.empty() && !lambda_values.empty(), Errc::ConfigInvalid,
            "type grid must be nonempty");
    for (double m : mu_values) {
      require(m > 0.0 && std::isfinite(m), Errc::ConfigInvalid, "grid mu values must be > 0");
    }
    for (double l : lambda_values) {
      require(l >= 0.0 && std::isfinite(l), Errc::ConfigInvalid, "grid lambda values must be >= 0");
    }
    require(std::is_sorted(mu_values.begin(), mu_values.end()) &&
                std::is_sorted(lambda_values.begin(), lambda_values.end()),
            Errc::ConfigInvalid, "grid values must be sorted");
  }
};

struct Belief {
  std::shared_ptr<const TypeGrid> grid;
  Vec mass;  // one entry per grid cell, simplex

  static Belief uniform(std::shared_ptr<const TypeGrid> grid) {
    Belief b;
    int n = grid->n_cells();
    b.grid = std::move(grid);
    b.mass.assign(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
    return b;
  }

  void validate() const {
    require(grid != nullptr, Errc::ConfigInvalid, "belief without a grid");
    require(static_cast<int>(mass.size()) == grid->n_cells(), Errc::DimensionMismatch,
            "belief mass size != grid cells");
    double sum = 0.0;
    for (double m : mass) {
      require(m >= 0.0, Errc::SpecInvalid, "belief mass must be nonnegative");
      sum += m;
    }
    require(std::abs(sum - 1.0) <= 1e-9, Errc::SpecInvalid, "belief mass must sum to 1");
  }
};

struct Observation {
  double lambda_obs = 0.0;
  double mu_obs = 0.0;
  double t_infer = 0.0;  // seconds
  double t_trans = 0.0;  // seconds

  void validate() const {
    require(std::isfinite(lambda_obs) && std::isfinite(mu_obs) && std::isfinite(t_infer) &&
                std::isfinite(t_trans),
            Errc::SpecInvalid, "observation fields must be finite");
    require(lambda_obs >= 0.0 && mu_obs >= 0.0 && t_infer >= 0.0 && t_trans >= 0.0,
            Errc::SpecInvalid, "observation fields must be nonnegative");
  }
};

// Bayes update with independent Gaussian likelihoods on (lambda_obs, mu_obs),
// computed in log space with a max shift so extreme observations cannot
// underflow a well-defined posterior. Cells with zero prior stay at zero.
// If every cell's weight still collapses (all log-weights -inf), the prior
// is returned unchanged and *degenerate is set — the documented
// DegenerateLikelihood fallback.
inline Belief update_belief(const Belief& b, const Observation& obs, double sigma,
                            bool* degenerate = nullptr) {
  require(sigma > 0.0, Errc::ConfigInvalid, "sigma must be > 0");
  obs.validate();
  if (degenerate) *degenerate = false;

  const TypeGrid& grid = *b.grid;
  std::size_t n = b.mass.size();
  Vec logw(n, -std::numeric_limits<double>::infinity());
  double shift = -std::numeric_limits<double>::infinity();
  const double log_norm = -std::log(sigma) - 0.5 * std::log(2.0 * 3.14159265358979323846);
  for (std::size_t i = 0; i < n; ++i) {
    if (b.mass[i] <= 0.0) continue;
    AgentType t = grid.cell(static_cast<int>(i));
    double dl = (obs.lambda_obs - t.lambda) / sigma;
    double dm = (obs.mu_obs - t.mu) / sigma;
    double ll = 2.0 * log_norm - 0.5 * (dl * dl + dm * dm);
    logw[i] = std::log(b.mass[i]) + ll;
    if (logw[i] > shift) shift = logw[i];
  }
  if (!std::isfinite(shift)) {
    if (degenerate) *degenerate = true;
    return b;  // fall back to the prior unchanged
  }

  Belief out;
  out.grid = b.grid;
  out.mass.assign(n, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(logw[i])) continue;
    out.mass[i] = std::exp(logw[i] - shift);
    sum += out.mass[i];
  }
  double inv = 1.0 / sum;
  for (double& m : out.mass) m *= inv;
  return out;
}

// Expected queue load over the belief: per cell, rho + delta*(lambda - mu)
// clamped into [0, 1], then mass-weighted. delta is the prediction horizon
// in seconds (drift term).
inline double expected_load(const Belief& b, double delta) {
  require(delta > 0.0, Errc::ConfigInvalid, "delta must be > 0");
  const TypeGrid& grid = *b.grid;
  double total = 0.0;
  for (std::size_t i = 0; i < b.mass.size(); ++i) {
    if (b.mass[i] <= 0.0) continue;
    AgentType t = grid.cell(static_cast<int>(i));
    double cell_load = t.lambda / t.mu + delta * (t.lambda - t.mu);
    cell_load = std::min(1.0, std::max(0.0, cell_load));
    total += b.mass[i] * cell_load;
  }
  return total;
}

// Per-term weights for the cost sum; defaults reproduce the plain
// load + t_infer + t_trans formula, the knobs exist for sensitivity studies.
using CodWeights = std::array<double, 3>;
inline constexpr CodWeights kDefaultCodWeights{1.0, 1.0, 1.0};

inline double cost_of_delegation(const Belief& b, const Observation& obs, double delta,
                                 const CodWeights& w = kDefaultCodWeights) {
  return w[0] * expected_load(b, delta) + w[1] * obs.t_infer + w[2] * obs.t_trans;
}

inline double utility(double score, double cod, double beta) {
  require(beta >= 0.0, Errc::ConfigInvalid, "beta must be >= 0");
  return score - beta * cod;
}

// ---------------------------------------------------------------------------
// Routing

struct RoutingParams {
  double theta_s = 0.3;  // relevance threshold for the candidate set, > 0
  double beta = 1e-3;    // congestion weight in the utility
  double delta = 0.01;   // load-prediction horizon, seconds
  double sigma = 0.5;    // observation-noise std for belief updates
  CodWeights cod_weights = kDefaultCodWeights;

  void validate() const {
    require(theta_s > 0.0, Errc::ConfigInvalid, "theta_s must be > 0");
    require(beta >= 0.0, Errc::ConfigInvalid, "beta must be >= 0");
    require(delta > 0.0, Errc::ConfigInvalid, "delta must be > 0");
    require(sigma > 0.0, Errc::ConfigInvalid, "sigma must be > 0");
  }
};

struct RoutingDecision {
  AgentId chosen = 0;
  std::map<AgentId, double> utilities;  // one entry per candidate
  std::vector<AgentId> candidates;      // ascending
};

// Per-user belief table with lazy uniform initialization.
struct BeliefStore {
  std::shared_ptr<const TypeGrid> grid;
  std::map<AgentId, Belief> by_agent;

  explicit BeliefStore(std::shared_ptr<const TypeGrid> g = nullptr) : grid(std::move(g)) {}

  Belief& get_or_init(AgentId a) {
    auto it = by_agent.find(a);
    if (it == by_agent.end()) it = by_agent.emplace(a, Belief::uniform(grid)).first;
    return it->second;
  }
};

// One routing decision. `observe` is invoked once per candidate at decision
// time (freshness is the caller's concern); candidate beliefs are updated in
// place. An agent missing from the live view (possible only for the local
// fallback) scores 0.
template <typename ObsFn>
  requires std::is_invocable_r_v<Observation, ObsFn&, AgentId>
RoutingDecision route(AgentId user, const Vec& rel, const RegistryView& view,
                      BeliefStore& beliefs, ObsFn&& observe, const RoutingParams& params) {
  params.validate();
  require(!view.live.empty(), Errc::NoLiveAgents, "registry view has no live agents");

  RoutingDecision d;
  for (const auto& [agent, entry] : view.live) {
    double s = qagate::score(rel, entry.first);
    if (s >= params.theta_s || agent == user) {
      d.candidates.push_back(agent);
    }
  }
  if (!view.is_live(user)) {
    d.candidates.push_back(user);  // local fallback even without a view entry
    std::sort(d.candidates.begin(), d.candidates.end());
  }

  bool first = true;
  double best = 0.0;
  for (AgentId agent : d.candidates) {
    double s = 0.0;
    auto it = view.live.find(agent);
    if (it != view.live.end()) s = qagate::score(rel, it->second.first);

    Observation obs = observe(agent);
    Belief& b = beliefs.get_or_init(agent);
    b = update_belief(b, obs, params.sigma);
    double cod = cost_of_delegation(b, obs, params.delta, params.cod_weights);
    double u = utility(s, cod, params.beta);
    d.utilities[agent] = u;
    if (first || u > best) {  // strict >: ties keep the lowest id
      first = false;
      best = u;
      d.chosen = agent;
    }
  }
  return d;
}

// Convenience overload taking pre-collected per-agent observations.
inline RoutingDecision route(AgentId user, const Vec& rel, const RegistryView& view,
                             BeliefStore& beliefs,
                             const std::map<AgentId, Observation>& obs,
                             const RoutingParams& params) {
  return route(
      user, rel, view, beliefs,
      [&obs](AgentId a) -> Observation {
        auto it = obs.find(a);
        require(it != obs.end(), Errc::ConfigInvalid,
                "no observation provided for agent " + std::to_string(a));
        return it->second;
      },
      params);
}

}  // namespace ppai::sched
