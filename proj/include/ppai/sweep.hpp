#pragma once
// Parameter sweeps over the simulator: one isolated run per (value, seed)
// pair, executed by a small worker pool, aggregated into a CSV (schema
// comment in row 1, rows sorted by value then seed) plus per-value means and
// Spearman rank trends. Every output is a pure function of the sweep spec:
// workers write into preassigned slots, so thread scheduling cannot reorder
// or perturb anything.
//
// The swept parameter is applied to a copy of the base config:
//   arrival_lambda -> arrival_rate_lambda
//   beta           -> scheduler.beta
//   churn_rate     -> churn_rate
//   n_agents       -> population size; truth profiles and service rates are
//                     tiled from the base config (agent i inherits row
//                     i mod base_n), so every scale keeps the same skill mix.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ppai/errors.hpp"
#include "ppai/jsonio.hpp"
#include "ppai/simnet.hpp"

namespace ppai::sweep {

enum class Parameter { ArrivalLambda, Beta, NAgents, ChurnRate };

inline const char* parameter_name(Parameter p) {
  switch (p) {
    case Parameter::ArrivalLambda: return "arrival_lambda";
    case Parameter::Beta: return "beta";
    case Parameter::NAgents: return "n_agents";
    case Parameter::ChurnRate: return "churn_rate";
  }
  return "arrival_lambda";
}

inline Parameter parameter_from_name(const std::string& s, const std::string& origin) {
  if (s == "arrival_lambda") return Parameter::ArrivalLambda;
  if (s == "beta") return Parameter::Beta;
  if (s == "n_agents") return Parameter::NAgents;
  if (s == "churn_rate") return Parameter::ChurnRate;
  fail(Errc::ParseError, origin + ": unknown sweep parameter '" + s + "'");
}

struct SweepSpec {
  Parameter parameter = Parameter::ArrivalLambda;
  std::vector<double> values;
  sim::SimConfig base_config;
  std::vector<std::uint64_t> seeds;

  void validate() const {
    require(!values.empty(), Errc::SpecInvalid, "sweep needs at least one value");
    require(!seeds.empty(), Errc::SpecInvalid, "sweep needs at least one seed");
    for (double v : values) {
      require(std::isfinite(v), Errc::SpecInvalid, "sweep values must be finite");
      if (parameter == Parameter::NAgents) {
        require(v >= 1.0 && v == std::floor(v), Errc::SpecInvalid,
                "n_agents sweep values must be positive integers");
      }
    }
    base_config.validate();
  }

  static SweepSpec from_json(const json& j, const std::string& origin = "sweep spec") {
    reject_unknown(j, {"parameter", "values", "base_config", "seeds"}, origin);
    SweepSpec s;
    s.parameter = parameter_from_name(require_string(j, "parameter", origin), origin);
    s.values = require_double_array(j, "values", origin);
    const json& seeds = require_field(j, "seeds", origin);
    require(seeds.is_array(), Errc::ParseError, origin + ": seeds must be an array");
    for (const auto& v : seeds) {
      require(v.is_number_integer() || v.is_number_unsigned(), Errc::ParseError,
              origin + ": seeds must be integers");
      s.seeds.push_back(v.get<std::uint64_t>());
    }
    s.base_config = sim::SimConfig::from_json(require_field(j, "base_config", origin),
                                              origin + ".base_config");
    s.validate();
    return s;
  }

  json to_json() const {
    json j;
    j["parameter"] = parameter_name(parameter);
    j["values"] = values;
    j["seeds"] = seeds;
    j["base_config"] = base_config.to_json();
    return j;
  }
};

// The concrete simulator config for one sweep point.
inline sim::SimConfig config_for(const SweepSpec& spec, double value, std::uint64_t seed) {
  sim::SimConfig cfg = spec.base_config;
  cfg.seed = seed;
  switch (spec.parameter) {
    case Parameter::ArrivalLambda: cfg.arrival_rate_lambda = value; break;
    case Parameter::Beta: cfg.scheduler.beta = value; break;
    case Parameter::ChurnRate: cfg.churn_rate = value; break;
    case Parameter::NAgents: {
      int n = static_cast<int>(value);
      int base_n = spec.base_config.n_agents;
      cfg.n_agents = n;
      cfg.agent_truth_profiles.resize(static_cast<std::size_t>(n));
      cfg.service_rate_mu.resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        cfg.agent_truth_profiles[static_cast<std::size_t>(i)] =
            spec.base_config.agent_truth_profiles[static_cast<std::size_t>(i % base_n)];
        cfg.service_rate_mu[static_cast<std::size_t>(i)] =
            spec.base_config.service_rate_mu[static_cast<std::size_t>(i % base_n)];
      }
      break;
    }
  }
  cfg.validate();
  return cfg;
}

struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  double avg_accuracy = 0.0;
  double avg_process_time = 0.0;
  double assignment_entropy = 0.0;
  std::vector<std::uint64_t> per_agent_completed;
};

// Spearman rank correlation with average ranks on ties. A side with zero
// rank variance (all values tied) carries no ordering information; the
// correlation is defined as 0 in that case.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, Errc::SpecInvalid,
          "spearman needs two equal-length samples of size >= 2");
  std::vector<double> rx = average_ranks(x);
  std::vector<double> ry = average_ranks(y);
  double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = rx[i] - mx, dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

struct TrendSummary {
  std::string parameter;
  std::vector<double> values;             // ascending, one per sweep value
  std::vector<double> mean_accuracy;      // per value, across seeds
  std::vector<double> mean_process_time;  // per value, across seeds
  std::vector<double> mean_entropy;       // per value, across seeds
  double spearman_accuracy = 0.0;      // rank corr of mean accuracy vs value
  double spearman_process_time = 0.0;  // rank corr of mean time vs value
  double spearman_entropy = 0.0;       // rank corr of mean entropy vs value

  json to_json() const {
    json j;
    j["parameter"] = parameter;
    j["values"] = values;
    j["mean_accuracy"] = mean_accuracy;
    j["mean_process_time"] = mean_process_time;
    j["mean_entropy"] = mean_entropy;
    j["spearman_accuracy"] = spearman_accuracy;
    j["spearman_process_time"] = spearman_process_time;
    j["spearman_entropy"] = spearman_entropy;
    return j;
  }
};

struct SweepResult {
  std::vector<SweepRow> rows;  // sorted by (value index, seed index)
  TrendSummary trends;
};

// Runs every (value, seed) combination, fanning the independent simulations
// across `n_threads` workers (0 = hardware concurrency). Each worker claims
// tasks off a shared counter and writes into that task's preassigned slot,
// so the aggregate is identical no matter how the pool is scheduled.
inline SweepResult run_sweep(const SweepSpec& spec, int n_threads = 0) {
  spec.validate();
  // Canonical output order regardless of how the spec listed things.
  std::vector<double> values = spec.values;
  std::vector<std::uint64_t> seeds = spec.seeds;
  std::sort(values.begin(), values.end());
  std::sort(seeds.begin(), seeds.end());
  struct Task {
    std::size_t value_idx;
    std::size_t seed_idx;
  };
  std::vector<Task> tasks;
  for (std::size_t v = 0; v < values.size(); ++v) {
    for (std::size_t s = 0; s < seeds.size(); ++s) tasks.push_back({v, s});
  }
  std::vector<SweepRow> rows(tasks.size());

  unsigned hw = std::thread::hardware_concurrency();
  std::size_t pool = n_threads > 0 ? static_cast<std::size_t>(n_threads)
                                   : std::max<std::size_t>(1, hw == 0 ? 1 : hw);
  pool = std::min(pool, tasks.size());

  std::atomic<std::size_t> cursor{0};
  auto worker = [&]() {
    while (true) {
      std::size_t t = cursor.fetch_add(1);
      if (t >= tasks.size()) break;
      double value = values[tasks[t].value_idx];
      std::uint64_t seed = seeds[tasks[t].seed_idx];
      sim::SimResult r = sim::run_simulation(config_for(spec, value, seed));
      rows[t] = SweepRow{value,
                         seed,
                         r.metrics.avg_accuracy,
                         r.metrics.avg_process_time,
                         r.metrics.assignment_entropy,
                         std::move(r.metrics.per_agent_completed)};
    }
  };
  if (pool <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(pool);
    for (std::size_t i = 0; i < pool; ++i) threads.emplace_back(worker);
    for (std::thread& th : threads) th.join();
  }

  SweepResult out;
  out.rows = std::move(rows);
  out.trends.parameter = parameter_name(spec.parameter);
  double n_seeds = static_cast<double>(seeds.size());
  for (std::size_t v = 0; v < values.size(); ++v) {
    double acc = 0.0, time = 0.0, ent = 0.0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const SweepRow& row = out.rows[v * seeds.size() + s];
      acc += row.avg_accuracy;
      time += row.avg_process_time;
      ent += row.assignment_entropy;
    }
    out.trends.values.push_back(values[v]);
    out.trends.mean_accuracy.push_back(acc / n_seeds);
    out.trends.mean_process_time.push_back(time / n_seeds);
    out.trends.mean_entropy.push_back(ent / n_seeds);
  }
  if (values.size() >= 2) {
    out.trends.spearman_accuracy = spearman(out.trends.values, out.trends.mean_accuracy);
    out.trends.spearman_process_time = spearman(out.trends.values, out.trends.mean_process_time);
    out.trends.spearman_entropy = spearman(out.trends.values, out.trends.mean_entropy);
  }
  return out;
}

// CSV with a versioned schema comment in row 1 and a column header in row 2,
// one row per (value, seed) in sweep order. Per-agent counts are joined with
// ';' so the file stays one cell per column.
inline std::string to_csv(const SweepResult& r) {
  std::ostringstream os;
  os << "# schema: ppai-sweep-v1\n";
  os << "value,seed,avg_accuracy,avg_process_time,assignment_entropy,per_agent_completed\n";
  for (const SweepRow& row : r.rows) {
    os << json(row.value).dump() << ',' << row.seed << ',' << json(row.avg_accuracy).dump()
       << ',' << json(row.avg_process_time).dump() << ','
       << json(row.assignment_entropy).dump() << ',';
    for (std::size_t i = 0; i < row.per_agent_completed.size(); ++i) {
      if (i > 0) os << ';';
      os << row.per_agent_completed[i];
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace ppai::sweep
