#pragma once

// Brute-force game-theory oracles for small routing games.
//
// Users pick agents; utilities either come from a fixed per-(user, agent)
// table (FIXED mode, separable) or from negated affine congestion costs
// a_j * n_j + b_j where n_j is the number of users on agent j (AFFINE mode).
// Everything here favors auditability over speed: exhaustive profile
// enumeration, exhaustive unilateral-deviation Nash checks, round-robin
// best-response dynamics with a potential trace, and a Bayesian price of
// anarchy estimator over random affine realizations. The enumeration and
// Nash-audit cores are generic over an arbitrary profile-dependent utility
// callable so that tests can drive them with games outside the two declared
// modes (e.g. matching pennies, which has no pure equilibrium — neither a
// separable table nor a congestion game can express it).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ppai/errors.hpp"
#include "ppai/jsonio.hpp"
#include "ppai/rng.hpp"
#include "ppai/scheduler.hpp"
#include "ppai/vecmath.hpp"

namespace ppai::game {

// z[i] = index of the agent chosen by user i, in [0, n_agents).
using StrategyProfile = std::vector<int>;

enum class Mode { Fixed, AffineCongestion };

inline const char* mode_name(Mode m) {
  return m == Mode::Fixed ? "FIXED" : "AFFINE_CONGESTION";
}

struct GameInstance {
  Mode mode = Mode::Fixed;
  int n_users = 0;
  int n_agents = 0;
  std::vector<Vec> utility_table;  // FIXED: [user][agent]
  Vec a, b;                        // AFFINE: cost on agent j is a[j]*n_j + b[j]

  static GameInstance fixed(std::vector<Vec> table) {
    GameInstance g;
    g.mode = Mode::Fixed;
    g.n_users = static_cast<int>(table.size());
    g.n_agents = table.empty() ? 0 : static_cast<int>(table[0].size());
    g.utility_table = std::move(table);
    g.validate();
    return g;
  }

  static GameInstance affine(int n_users, Vec a, Vec b) {
    GameInstance g;
    g.mode = Mode::AffineCongestion;
    g.n_users = n_users;
    g.n_agents = static_cast<int>(a.size());
    g.a = std::move(a);
    g.b = std::move(b);
    g.validate();
    return g;
  }

  void validate() const {
    require(n_users >= 1, Errc::ConfigInvalid, "game needs at least one user");
    require(n_agents >= 1, Errc::ConfigInvalid, "game needs at least one agent");
    if (mode == Mode::Fixed) {
      require(static_cast<int>(utility_table.size()) == n_users, Errc::DimensionMismatch,
              "utility table must have one row per user");
      for (const Vec& row : utility_table) {
        require(static_cast<int>(row.size()) == n_agents, Errc::DimensionMismatch,
                "utility table row size != agent count");
        require(all_finite(row), Errc::ConfigInvalid, "utilities must be finite");
      }
    } else {
      require(static_cast<int>(a.size()) == n_agents && static_cast<int>(b.size()) == n_agents,
              Errc::DimensionMismatch, "affine coefficient size != agent count");
      for (int j = 0; j < n_agents; ++j) {
        require(std::isfinite(a[static_cast<std::size_t>(j)]) &&
                    std::isfinite(b[static_cast<std::size_t>(j)]),
                Errc::ConfigInvalid, "affine coefficients must be finite");
        require(a[static_cast<std::size_t>(j)] >= 0.0 && b[static_cast<std::size_t>(j)] >= 0.0,
                Errc::ConfigInvalid, "affine coefficients must be nonnegative");
      }
    }
  }

  void validate_profile(const StrategyProfile& z) const {
    require(static_cast<int>(z.size()) == n_users, Errc::DimensionMismatch,
            "profile length != user count");
    for (int zi : z) {
      require(zi >= 0 && zi < n_agents, Errc::ConfigInvalid, "profile entry out of range");
    }
  }

  // U(i, z_i | z): in FIXED mode a table lookup; in AFFINE mode the negated
  // congestion cost of the chosen agent at the load induced by z (including
  // user i itself).
  double utility(int user, const StrategyProfile& z) const {
    int j = z[static_cast<std::size_t>(user)];
    if (mode == Mode::Fixed) {
      return utility_table[static_cast<std::size_t>(user)][static_cast<std::size_t>(j)];
    }
    int n_j = 0;
    for (int zi : z) {
      if (zi == j) ++n_j;
    }
    return -(a[static_cast<std::size_t>(j)] * static_cast<double>(n_j) +
             b[static_cast<std::size_t>(j)]);
  }
};

// Per-agent user counts induced by a profile.
inline std::vector<int> loads(const StrategyProfile& z, int n_agents) {
  std::vector<int> n(static_cast<std::size_t>(n_agents), 0);
  for (int zi : z) ++n[static_cast<std::size_t>(zi)];
  return n;
}

// Phi(z) = sum_i U(i, z_i | z). An exact potential in FIXED mode only; in
// AFFINE mode the exact-potential check below documents the violation.
inline double potential(const GameInstance& g, const StrategyProfile& z) {
  g.validate_profile(z);
  double phi = 0.0;
  for (int i = 0; i < g.n_users; ++i) phi += g.utility(i, z);
  return phi;
}

// Total cost borne by the users: sum of affine costs in AFFINE mode, and
// the negated welfare in FIXED mode (so that minimizing cost is maximizing
// welfare in both conventions).
inline double social_cost(const GameInstance& g, const StrategyProfile& z) {
  g.validate_profile(z);
  if (g.mode == Mode::Fixed) return -potential(g, z);
  double total = 0.0;
  for (int i = 0; i < g.n_users; ++i) total -= g.utility(i, z);
  return total;
}

// ---------------------------------------------------------------------------
// Generic enumeration core
//
// UtilFn: double(int user, const StrategyProfile& z), evaluated at z[user].

inline constexpr std::uint64_t kEnumerationBound = 10'000'000;

inline std::uint64_t profile_count(int n_users, int n_agents) {
  std::uint64_t total = 1;
  for (int i = 0; i < n_users; ++i) {
    if (total > kEnumerationBound) break;  // already over; avoid overflow
    total *= static_cast<std::uint64_t>(n_agents);
  }
  return total;
}

// A profile is (weak) Nash iff no user has a strictly improving unilateral
// deviation.
template <typename UtilFn>
bool is_nash(int n_users, int n_agents, const StrategyProfile& z, UtilFn&& u) {
  StrategyProfile probe = z;
  for (int i = 0; i < n_users; ++i) {
    double current = u(i, probe);
    int original = probe[static_cast<std::size_t>(i)];
    for (int j = 0; j < n_agents; ++j) {
      if (j == original) continue;
      probe[static_cast<std::size_t>(i)] = j;
      if (u(i, probe) > current) {
        return false;
      }
    }
    probe[static_cast<std::size_t>(i)] = original;
  }
  return true;
}

// All profiles in lexicographic order (user 0 most significant), invoking
// visit(z) on each. Guarded by the enumeration bound.
template <typename VisitFn>
void for_each_profile(int n_users, int n_agents, VisitFn&& visit) {
  require(profile_count(n_users, n_agents) <= kEnumerationBound, Errc::InstanceTooLarge,
          "profile space exceeds the enumeration bound");
  StrategyProfile z(static_cast<std::size_t>(n_users), 0);
  while (true) {
    visit(const_cast<const StrategyProfile&>(z));
    int i = n_users - 1;
    while (i >= 0 && z[static_cast<std::size_t>(i)] == n_agents - 1) {
      z[static_cast<std::size_t>(i)] = 0;
      --i;
    }
    if (i < 0) return;
    ++z[static_cast<std::size_t>(i)];
  }
}

template <typename UtilFn>
std::vector<StrategyProfile> enumerate_nash(int n_users, int n_agents, UtilFn&& u) {
  std::vector<StrategyProfile> found;
  for_each_profile(n_users, n_agents, [&](const StrategyProfile& z) {
    if (is_nash(n_users, n_agents, z, u)) found.push_back(z);
  });
  return found;
}

// ---------------------------------------------------------------------------
// Exact-potential check

struct DeviationWitness {
  StrategyProfile from;
  int user = 0;
  int to_agent = 0;
  double delta_phi = 0.0;
  double delta_u = 0.0;
};

struct PotentialReport {
  Mode mode = Mode::Fixed;
  int trials = 0;
  double max_violation = 0.0;
  bool exact = true;  // max_violation <= tolerance
  std::optional<DeviationWitness> witness;

  json to_json() const {
    json j;
    j["mode"] = mode_name(mode);
    j["trials"] = trials;
    j["max_violation"] = max_violation;
    j["exact"] = exact;
    return j;
  }
};

inline constexpr double kPotentialTolerance = 1e-9;

// Random profiles, random unilateral deviations: compares Phi(z') - Phi(z)
// against the deviator's utility change. In FIXED mode the two agree
// identically; in AFFINE mode Phi as defined is not an exact potential and
// the report carries the first witnessing deviation.
inline PotentialReport check_exact_potential(const GameInstance& g, int trials,
                                             std::uint64_t rng_seed) {
  g.validate();
  require(trials >= 1, Errc::ConfigInvalid, "need at least one trial");
  PotentialReport report;
  report.mode = g.mode;
  report.trials = trials;
  SplitMix64 rng(rng_seed);
  for (int t = 0; t < trials; ++t) {
    StrategyProfile z(static_cast<std::size_t>(g.n_users));
    for (int i = 0; i < g.n_users; ++i) {
      z[static_cast<std::size_t>(i)] =
          static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(g.n_agents)));
    }
    int user = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(g.n_users)));
    if (g.n_agents < 2) continue;  // no deviation possible
    int from = z[static_cast<std::size_t>(user)];
    int to = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(g.n_agents - 1)));
    if (to >= from) ++to;

    double phi_before = potential(g, z);
    double u_before = g.utility(user, z);
    StrategyProfile z2 = z;
    z2[static_cast<std::size_t>(user)] = to;
    double delta_phi = potential(g, z2) - phi_before;
    double delta_u = g.utility(user, z2) - u_before;
    double violation = std::abs(delta_phi - delta_u);
    if (violation > report.max_violation) {
      report.max_violation = violation;
      if (violation > kPotentialTolerance && !report.witness) {
        report.witness = DeviationWitness{z, user, to, delta_phi, delta_u};
      }
    }
  }
  report.exact = report.max_violation <= kPotentialTolerance;
  return report;
}

// ---------------------------------------------------------------------------
// Best-response dynamics

struct DynamicsResult {
  StrategyProfile profile;
  Vec phi_trace;  // Phi at start, then after every applied change
  bool converged = false;
  int passes = 0;          // full round-robin passes performed (incl. the final quiet one)
  int changing_passes = 0; // passes that applied at least one change
};

// Round-robin best response with inertia: a user moves only when some agent
// strictly improves on the current utility, and then to the lowest-index
// argmax. Terminates when a full pass changes nothing (a weak Nash profile
// is therefore a fixed point). In FIXED mode every applied change strictly
// increases Phi, so termination is guaranteed; max_iters bounds the pass
// count regardless.
inline DynamicsResult best_response_dynamics(const GameInstance& g, StrategyProfile z0,
                                             int max_iters) {
  g.validate();
  g.validate_profile(z0);
  require(max_iters >= 1, Errc::ConfigInvalid, "max_iters must be >= 1");

  DynamicsResult result;
  result.profile = std::move(z0);
  result.phi_trace.push_back(potential(g, result.profile));
  for (int pass = 0; pass < max_iters; ++pass) {
    ++result.passes;
    bool any_change = false;
    for (int i = 0; i < g.n_users; ++i) {
      double current = g.utility(i, result.profile);
      int original = result.profile[static_cast<std::size_t>(i)];
      int best_agent = original;
      double best_util = current;
      for (int j = 0; j < g.n_agents; ++j) {
        if (j == original) continue;
        result.profile[static_cast<std::size_t>(i)] = j;
        double u = g.utility(i, result.profile);
        // Strict improvement over the incumbent keeps ties on the incumbent;
        // strict > against the best improver keeps ties on the lowest index.
        if (u > best_util) {
          best_util = u;
          best_agent = j;
        }
      }
      result.profile[static_cast<std::size_t>(i)] = best_agent;
      if (best_agent != original) {
        any_change = true;
        result.phi_trace.push_back(potential(g, result.profile));
      }
    }
    if (any_change) {
      ++result.changing_passes;
    } else {
      result.converged = true;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Exhaustive equilibrium enumeration

struct EquilibriaResult {
  std::vector<StrategyProfile> nash;  // lexicographic order
  StrategyProfile max_phi_profile;
  StrategyProfile min_social_cost_profile;
  double max_phi = -std::numeric_limits<double>::infinity();
  double min_social_cost = std::numeric_limits<double>::infinity();
};

inline EquilibriaResult brute_force_equilibria(const GameInstance& g) {
  g.validate();
  EquilibriaResult out;
  auto u = [&g](int user, const StrategyProfile& z) { return g.utility(user, z); };
  for_each_profile(g.n_users, g.n_agents, [&](const StrategyProfile& z) {
    double phi = potential(g, z);
    if (phi > out.max_phi) {
      out.max_phi = phi;
      out.max_phi_profile = z;
    }
    double cost = social_cost(g, z);
    if (cost < out.min_social_cost) {
      out.min_social_cost = cost;
      out.min_social_cost_profile = z;
    }
    if (is_nash(g.n_users, g.n_agents, z, u)) out.nash.push_back(z);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Bayesian price of anarchy over random affine realizations

// Distribution over affine congestion realizations: user count uniform in
// [1, max_users], coefficients uniform in the stated ranges. a_min > 0 keeps
// realizations generic (ties have probability zero); the degenerate a = 0
// case is covered by its own deterministic test.
struct AffineFamily {
  int max_users = 4;
  int n_agents = 3;
  double a_min = 0.1;
  double a_max = 2.0;
  double b_min = 0.0;
  double b_max = 2.0;

  void validate() const {
    require(max_users >= 1 && n_agents >= 1, Errc::ConfigInvalid, "family sizes must be >= 1");
    require(a_min >= 0.0 && a_max >= a_min && b_min >= 0.0 && b_max >= b_min,
            Errc::ConfigInvalid, "family coefficient ranges invalid");
  }

  GameInstance draw(std::uint64_t seed) const {
    SplitMix64 g(seed);
    int users = 1 + static_cast<int>(uniform_below(g, static_cast<std::uint64_t>(max_users)));
    Vec a(static_cast<std::size_t>(n_agents));
    Vec b(static_cast<std::size_t>(n_agents));
    for (int j = 0; j < n_agents; ++j) {
      a[static_cast<std::size_t>(j)] = a_min + (a_max - a_min) * uniform01(g);
      b[static_cast<std::size_t>(j)] = b_min + (b_max - b_min) * uniform01(g);
    }
    return GameInstance::affine(users, std::move(a), std::move(b));
  }
};

struct BpoaSummary {
  int draws = 0;
  double mean_ratio = 0.0;
  double max_ratio = 0.0;

  json to_json() const {
    json j;
    j["draws"] = draws;
    j["bpoa_mean"] = mean_ratio;
    j["bpoa_max"] = max_ratio;
    return j;
  }
};

// Worst pure-Nash social cost over the optimal social cost for one
// realization. An optimum at (numerically) zero cost forces every
// equilibrium to zero cost as well, so the ratio is 1 by convention.
inline double anarchy_ratio(const GameInstance& g) {
  require(g.mode == Mode::AffineCongestion, Errc::ConfigInvalid,
          "anarchy ratio is defined for affine congestion instances");
  EquilibriaResult eq = brute_force_equilibria(g);
  require(!eq.nash.empty(), Errc::NoEquilibriumFound,
          "no pure equilibrium in an affine congestion instance");
  double worst = -std::numeric_limits<double>::infinity();
  for (const StrategyProfile& z : eq.nash) {
    worst = std::max(worst, social_cost(g, z));
  }
  if (eq.min_social_cost <= 1e-12) return 1.0;
  return worst / eq.min_social_cost;
}

// Per draw: realize an instance, enumerate equilibria, take worst-Nash over
// optimum; summarizes mean and max across draws.
inline BpoaSummary bpoa(const AffineFamily& family, int draws, std::uint64_t rng_seed) {
  family.validate();
  require(draws >= 1, Errc::ConfigInvalid, "need at least one draw");
  BpoaSummary out;
  out.draws = draws;
  double sum = 0.0;
  for (int d = 0; d < draws; ++d) {
    GameInstance g = family.draw(mix64(rng_seed, static_cast<std::uint64_t>(d)));
    double ratio = anarchy_ratio(g);
    sum += ratio;
    out.max_ratio = std::max(out.max_ratio, ratio);
  }
  out.mean_ratio = sum / static_cast<double>(draws);
  return out;
}

// ---------------------------------------------------------------------------
// Belief convergence trials

// Sequential Bayes from a uniform prior against i.i.d. Gaussian observations
// of the true type; returns the posterior mass on the true cell after each
// observation. Grid axes must be separated by at least 2*sigma so distinct
// cells are identifiable. Drawn rates are clamped at zero (they feed the
// same nonnegative-rate observation type the scheduler uses); with the
// required spacing a clamped draw is a >=4-sigma event and does not affect
// identification.
inline Vec belief_convergence_trial(const sched::AgentType& true_type,
                                    std::shared_ptr<const sched::TypeGrid> grid, double sigma,
                                    int n_obs, std::uint64_t rng_seed) {
  require(sigma > 0.0, Errc::ConfigInvalid, "sigma must be > 0");
  require(n_obs >= 1, Errc::ConfigInvalid, "need at least one observation");
  grid->validate();
  auto check_spacing = [&](const std::vector<double>& axis) {
    for (std::size_t i = 1; i < axis.size(); ++i) {
      require(axis[i] - axis[i - 1] >= 2.0 * sigma, Errc::ConfigInvalid,
              "grid spacing below the 2-sigma identifiability floor");
    }
  };
  check_spacing(grid->mu_values);
  check_spacing(grid->lambda_values);

  int true_cell = -1;
  for (int c = 0; c < grid->n_cells(); ++c) {
    sched::AgentType t = grid->cell(c);
    if (t.mu == true_type.mu && t.lambda == true_type.lambda) {
      true_cell = c;
      break;
    }
  }
  require(true_cell >= 0, Errc::ConfigInvalid, "true type is not a grid cell");

  sched::Belief belief = sched::Belief::uniform(std::move(grid));
  SplitMix64 g(rng_seed);
  Vec trace;
  trace.reserve(static_cast<std::size_t>(n_obs));
  for (int k = 0; k < n_obs; ++k) {
    sched::Observation obs;
    obs.lambda_obs = std::max(0.0, true_type.lambda + sigma * normal01(g));
    obs.mu_obs = std::max(0.0, true_type.mu + sigma * normal01(g));
    belief = sched::update_belief(belief, obs, sigma);
    trace.push_back(belief.mass[static_cast<std::size_t>(true_cell)]);
  }
  return trace;
}

}  // namespace ppai::game
