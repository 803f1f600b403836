// Copyright 2026 The pooltrace Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Experiment grid runner.
//
// A grid is (sparsity level x seed) timelines crossed with pool counts and
// decoders. Every random stream is derived from the master seed and a cell
// key, so a cell's output does not depend on which other cells run. All
// decoders of one model see the same measurements on a given day.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "pooltrace/epidemic_sim.hpp"
#include "pooltrace/gamp.hpp"
#include "pooltrace/graph_analysis.hpp"
#include "pooltrace/io.hpp"
#include "pooltrace/measurement.hpp"
#include "pooltrace/metrics.hpp"
#include "pooltrace/pool_design.hpp"
#include "pooltrace/sparse_decoders.hpp"

namespace pooltrace {

enum class Algo { ct, family, bernoulli, comp, comp_lasso, comp_sqrt_glasso, comp_sqrt_oglasso };

inline const char* to_string(Algo a) {
  switch (a) {
    case Algo::ct: return "ct";
    case Algo::family: return "family";
    case Algo::bernoulli: return "bernoulli";
    case Algo::comp: return "comp";
    case Algo::comp_lasso: return "comp-lasso";
    case Algo::comp_sqrt_glasso: return "comp-sqrt-glasso";
    case Algo::comp_sqrt_oglasso: return "comp-sqrt-oglasso";
  }
  return "?";
}

inline Algo algo_from_string(std::string_view s) {
  for (auto a : {Algo::ct, Algo::family, Algo::bernoulli, Algo::comp, Algo::comp_lasso, Algo::comp_sqrt_glasso,
                 Algo::comp_sqrt_oglasso})
    if (s == to_string(a)) return a;
  throw ConfigError("unknown algo '" + std::string(s) + "'");
}

inline NoiseModel model_of(Algo a) {
  return a == Algo::ct || a == Algo::family || a == Algo::bernoulli ? NoiseModel::m1 : NoiseModel::m2;
}

inline NoiseModel noise_model_from_string(std::string_view s) {
  if (s == "m1") return NoiseModel::m1;
  if (s == "m2") return NoiseModel::m2;
  throw ConfigError("unknown model '" + std::string(s) + "'");
}

inline GroupMode group_mode_from_string(std::string_view s) {
  if (s == to_string(GroupMode::maximal_cliques)) return GroupMode::maximal_cliques;
  if (s == to_string(GroupMode::clique_communities)) return GroupMode::clique_communities;
  throw ConfigError("unknown group mode '" + std::string(s) + "'");
}

inline bool uses_rho(Algo a) { return a == Algo::comp_lasso || a == Algo::comp_sqrt_glasso || a == Algo::comp_sqrt_oglasso; }

struct SparsityLevel {
  std::string label;
  double target = 0;  // nominal window-averaged sparsity
  double alpha = 0;   // cross-household contact rate producing it
};

// Alphas calibrated by bisection on ten held-out seeds to the window
// sparsities reported for the four contact levels.
inline std::vector<SparsityLevel> default_sparsity_levels() {
  return {{"2.12%", 0.0212, 0.4692}, {"3.98%", 0.0398, 1.4967}, {"6.01%", 0.0601, 1.9815}, {"8.86%", 0.0886, 2.6877}};
}

struct ExperimentGrid {
  SimConfig sim;  // alpha and rng_seed are set per timeline
  std::vector<SparsityLevel> levels = default_sparsity_levels();
  std::vector<int> m_values{150, 300, 375};
  std::vector<Algo> algos{Algo::ct, Algo::family, Algo::comp, Algo::comp_lasso, Algo::comp_sqrt_glasso,
                          Algo::comp_sqrt_oglasso};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::uint64_t master_seed = 2020;
  int window_length = 50;
  int day_stride = 1;  // ignored by the contact-tracing decoder, which needs every day

  // Startup information for the contact-tracing decoder: a nested fraction
  // of the population gets `startup_value` instead of its true status.
  std::vector<double> p_excluded{0.0};
  double startup_value = 0.05;
  bool hard_carryover = false;  // feed thresholded posteriors forward instead of soft ones

  M1Params m1;
  M2Params m2;
  double tau = 0.2;

  GampOptions gamp;
  CtOptions ct;
  FamilyPrior family_init{0.05, 0.5};
  double bernoulli_init = 0.05;

  SolverOptions solver{3000, 1e-5, false};
  std::vector<double> rho_grid_lasso{1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 1e-2};
  std::vector<double> rho_grid_sqrt{0.01, 0.03, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.8};
  std::map<Algo, double> rho_fixed;  // skips calibration for these decoders
  std::uint64_t calibration_seed = 1000003;
  int calibration_stride = 2;

  // Unset: maximal cliques on disjoint-clique graphs, 3-clique communities
  // on almost-clique graphs.
  std::optional<GroupMode> oglasso_mode;
  int group_window = 8;  // days of contacts aggregated for grouping, ending on the test day

  bool write_roc = false;

  GroupMode oglasso_groups() const {
    if (oglasso_mode) return *oglasso_mode;
    return sim.graph_mode == GraphMode::disjoint_cliques ? GroupMode::maximal_cliques : GroupMode::clique_communities;
  }

  void validate() const {
    sim.validate();
    m1.validate();
    m2.validate();
    if (levels.empty()) throw ConfigError("grid: no sparsity levels");
    for (const auto& l : levels)
      if (!(l.alpha >= 0) || l.label.empty()) throw ConfigError("grid: bad sparsity level");
    if (m_values.empty() || algos.empty() || seeds.empty()) throw ConfigError("grid: empty m_values, algos or seeds");
    if (window_length < 1) throw ConfigError("grid: window_length must be >= 1");
    if (day_stride < 1 || calibration_stride < 1) throw ConfigError("grid: strides must be >= 1");
    if (group_window < 1) throw ConfigError("grid: group_window must be >= 1");
    if (!(tau >= 0)) throw ConfigError("grid: tau must be >= 0");
    if (!(startup_value >= 0 && startup_value <= 1)) throw ConfigError("grid: startup_value must lie in [0,1]");
    for (double p : p_excluded)
      if (!(p >= 0 && p <= 1)) throw ConfigError("grid: p_excluded values must lie in [0,1]");
    if (p_excluded.empty()) throw ConfigError("grid: p_excluded must not be empty");
    for (const auto* g : {&rho_grid_lasso, &rho_grid_sqrt})
      for (double r : *g)
        if (!(r > 0)) throw ConfigError("grid: rho values must be > 0");
    for (auto [a, r] : rho_fixed)
      if (!(r > 0) || !uses_rho(a)) throw ConfigError("grid: bad fixed rho");
  }
};

// ---------------------------------------------------------------------------
// JSON

inline Json to_json(const ExperimentGrid& g) {
  Json levels = Json::array();
  for (const auto& l : g.levels) levels.push_back({{"label", l.label}, {"target", l.target}, {"alpha", l.alpha}});
  Json algos = Json::array();
  for (auto a : g.algos) algos.push_back(to_string(a));
  Json fixed = Json::object();
  for (auto [a, r] : g.rho_fixed) fixed[to_string(a)] = r;
  return Json{{"sim", to_json(g.sim)},
              {"levels", levels},
              {"m_values", g.m_values},
              {"algos", algos},
              {"seeds", g.seeds},
              {"master_seed", g.master_seed},
              {"window_length", g.window_length},
              {"day_stride", g.day_stride},
              {"p_excluded", g.p_excluded},
              {"startup_value", g.startup_value},
              {"hard_carryover", g.hard_carryover},
              {"m1", {{"p_fp", g.m1.p_fp}, {"p_fn", g.m1.p_fn}}},
              {"m2", {{"q", g.m2.q}, {"sigma2", g.m2.sigma2}}},
              {"tau", g.tau},
              {"gamp",
               {{"max_iterations", g.gamp.max_iterations},
                {"tol", g.gamp.tol},
                {"damping", g.gamp.damping},
                {"max_reestimates", g.gamp.max_reestimates}}},
              {"si_window", g.ct.si_window},
              {"solver", {{"max_iterations", g.solver.max_iterations}, {"tol", g.solver.tol}}},
              {"rho_grid_lasso", g.rho_grid_lasso},
              {"rho_grid_sqrt", g.rho_grid_sqrt},
              {"rho_fixed", fixed},
              {"calibration_seed", g.calibration_seed},
              {"calibration_stride", g.calibration_stride},
              {"oglasso_mode", to_string(g.oglasso_groups())},
              {"group_window", g.group_window},
              {"write_roc", g.write_roc}};
}

inline ExperimentGrid grid_from_json(const Json& j, ExperimentGrid g = {}) {
  using detail::get_if;
  detail::check_keys(j,
                     {"sim", "levels", "m_values", "algos", "seeds", "master_seed", "window_length", "day_stride",
                      "p_excluded", "startup_value", "hard_carryover", "m1", "m2", "tau", "gamp", "si_window", "solver",
                      "rho_grid_lasso", "rho_grid_sqrt", "rho_fixed", "calibration_seed", "calibration_stride",
                      "oglasso_mode", "group_window", "write_roc"},
                     "experiment");
  try {
    if (j.contains("sim")) g.sim = sim_config_from_json(j.at("sim"), g.sim);
    if (j.contains("levels")) {
      g.levels.clear();
      for (const auto& l : j.at("levels")) {
        detail::check_keys(l, {"label", "target", "alpha"}, "levels[]");
        g.levels.push_back({l.at("label").get<std::string>(), l.value("target", 0.0), l.at("alpha").get<double>()});
      }
    }
    get_if(j, "m_values", g.m_values);
    if (j.contains("algos")) {
      g.algos.clear();
      for (const auto& a : j.at("algos")) g.algos.push_back(algo_from_string(a.get<std::string>()));
    }
    get_if(j, "seeds", g.seeds);
    get_if(j, "master_seed", g.master_seed);
    get_if(j, "window_length", g.window_length);
    get_if(j, "day_stride", g.day_stride);
    get_if(j, "p_excluded", g.p_excluded);
    get_if(j, "startup_value", g.startup_value);
    get_if(j, "hard_carryover", g.hard_carryover);
    if (j.contains("m1")) {
      detail::check_keys(j.at("m1"), {"p_fp", "p_fn"}, "m1");
      get_if(j.at("m1"), "p_fp", g.m1.p_fp);
      get_if(j.at("m1"), "p_fn", g.m1.p_fn);
    }
    if (j.contains("m2")) {
      detail::check_keys(j.at("m2"), {"q", "sigma2"}, "m2");
      get_if(j.at("m2"), "q", g.m2.q);
      get_if(j.at("m2"), "sigma2", g.m2.sigma2);
    }
    get_if(j, "tau", g.tau);
    if (j.contains("gamp")) {
      const auto& o = j.at("gamp");
      detail::check_keys(o, {"max_iterations", "tol", "damping", "max_reestimates"}, "gamp");
      get_if(o, "max_iterations", g.gamp.max_iterations);
      get_if(o, "tol", g.gamp.tol);
      get_if(o, "damping", g.gamp.damping);
      get_if(o, "max_reestimates", g.gamp.max_reestimates);
      if (!(g.gamp.damping >= 0 && g.gamp.damping < 1)) throw ConfigError("gamp.damping must lie in [0,1)");
    }
    if (j.contains("si_window")) {
      get_if(j, "si_window", g.ct.si_window);
      if (g.ct.si_window < 1) throw ConfigError("si_window must be >= 1");
      g.ct.floor = stray_prior_floor(g.sim.p1, g.ct.si_window);
    }
    if (j.contains("solver")) {
      detail::check_keys(j.at("solver"), {"max_iterations", "tol"}, "solver");
      get_if(j.at("solver"), "max_iterations", g.solver.max_iterations);
      get_if(j.at("solver"), "tol", g.solver.tol);
    }
    get_if(j, "rho_grid_lasso", g.rho_grid_lasso);
    get_if(j, "rho_grid_sqrt", g.rho_grid_sqrt);
    if (j.contains("rho_fixed")) {
      g.rho_fixed.clear();
      for (auto it = j.at("rho_fixed").begin(); it != j.at("rho_fixed").end(); ++it)
        g.rho_fixed[algo_from_string(it.key())] = it.value().get<double>();
    }
    get_if(j, "calibration_seed", g.calibration_seed);
    get_if(j, "calibration_stride", g.calibration_stride);
    if (j.contains("oglasso_mode")) g.oglasso_mode = group_mode_from_string(j.at("oglasso_mode").get<std::string>());
    get_if(j, "group_window", g.group_window);
    get_if(j, "write_roc", g.write_roc);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------
// Building blocks shared with the CLI

/// Households as a partition: a node shared by two households stays in the
/// first one.
inline std::vector<std::vector<int>> household_partition(const std::vector<std::vector<int>>& households, int n) {
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<int>> out;
  for (const auto& h : households) {
    std::vector<int> f;
    for (int v : h)
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        f.push_back(v);
      }
    if (!f.empty()) out.push_back(std::move(f));
  }
  for (int v = 0; v < n; ++v)
    if (!seen[static_cast<std::size_t>(v)]) out.push_back({v});
  return out;
}

/// Contact graph over days [day - window + 1, day], clipped at day 0.
inline Graph contact_window_graph(const ContactTimeline& tl, int day, int window) {
  const int first = std::max(0, day - window + 1);
  return aggregate_contacts(tl.config.n, std::span<const DayGraph>(tl.daily_graphs).subspan(
                                             static_cast<std::size_t>(first), static_cast<std::size_t>(day - first + 1)));
}

struct M2Decode {
  std::vector<double> x_hat;  // viral-load estimates in measurement units
  std::vector<std::uint8_t> calls;
  std::vector<int> negatives;  // COMP definite negatives
  int iterations = 0;
  bool converged = true;
  bool has_estimate = false;  // false for plain COMP
};

/// COMP followed by the chosen estimator on the reduced problem. The reduced
/// measurements are scaled to unit maximum before solving so one rho grid
/// serves every load scale; estimates are scaled back.
inline M2Decode decode_m2(const PoolingMatrix& a, std::span<const double> y, Algo algo, double rho,
                          const GroupStructure* groups, double tau, const SolverOptions& opt) {
  if (model_of(algo) != NoiseModel::m2) throw ConfigError(std::string("decode_m2: ") + to_string(algo) + " is not an M2 decoder");
  M2Decode out;
  out.negatives = comp(a, y);
  out.x_hat.assign(static_cast<std::size_t>(a.n), 0.0);
  if (algo == Algo::comp) {
    out.calls.assign(static_cast<std::size_t>(a.n), 1);
    for (int j : out.negatives) out.calls[static_cast<std::size_t>(j)] = 0;
    return out;
  }
  out.has_estimate = true;
  const auto red = reduce_problem(a, y, out.negatives);
  if (!red.empty() && red.y.size() > 0) {
    const double scale = red.y.maxCoeff();
    const Eigen::VectorXd ys = red.y / scale;
    SolveResult r;
    if (algo == Algo::comp_lasso) {
      r = lasso_nonneg(red.a, ys, rho, opt);
    } else {
      if (!groups) throw StructuralError("decode_m2: group decoders need a group structure");
      const auto g = groups->restrict_to(red.kept_columns, a.n);
      if (algo == Algo::comp_sqrt_glasso) {
        if (g.overlapping) throw StructuralError("decode_m2: comp-sqrt-glasso needs disjoint groups");
        r = sqrt_glasso(red.a, ys, g, rho, opt);
      } else {
        r = sqrt_oglasso(red.a, ys, g, rho, opt);
      }
    }
    out.x_hat = red.scatter(r.x * scale);
    out.iterations = r.iterations;
    out.converged = r.converged;
  }
  out.calls = threshold_positives(out.x_hat, tau);
  return out;
}

/// Sequential contact-tracing decoding over consecutive days. `startup`
/// holds the infection estimates of the si_window days before `first`.
struct CtRun {
  std::vector<std::vector<double>> posteriors;
  std::vector<double> lambdas;
  std::vector<int> iterations;
  std::vector<std::string> errors;  // empty when the day decoded
};

// ---------------------------------------------------------------------------
// Results

struct ResultRow {
  int day = 0;
  std::string level;
  double sparsity = 0;      // nominal level sparsity
  double day_sparsity = 0;  // realised fraction infected on this day
  int m = 0;
  NoiseModel model = NoiseModel::m1;
  Algo algo = Algo::ct;
  std::uint64_t seed = 0;
  std::optional<double> p_excluded;
  MetricsReport metrics;
  double rho = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct CellInfo {
  std::string level;
  int m = 0;
  Algo algo = Algo::ct;
  std::uint64_t seed = 0;
  std::optional<double> p_excluded;
  double threshold = std::numeric_limits<double>::quiet_NaN();
  double rho = std::numeric_limits<double>::quiet_NaN();
  bool roc_monotone = true;
  bool roc_degenerate = false;
  int failed_days = 0;
  std::string error;
};

struct TimelineInfo {
  std::string level;
  std::uint64_t seed = 0;
  double alpha = 0;
  DayRange window;
  double window_sparsity = 0;
  std::string error;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<CellInfo> cells;
  std::vector<TimelineInfo> timelines;
  std::map<std::tuple<std::string, int, Algo>, double> rho_choice;
  std::vector<std::string> roc_csv_rows;  // filled when write_roc is set

  int failed_cells() const {
    return static_cast<int>(std::count_if(cells.begin(), cells.end(), [](const CellInfo& c) {
      return !c.error.empty() || c.failed_days > 0;
    }));
  }
};

namespace detail {

inline std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline int level_index(const ExperimentGrid& g, const std::string& label) {
  for (std::size_t i = 0; i < g.levels.size(); ++i)
    if (g.levels[i].label == label) return static_cast<int>(i);
  return -1;
}

inline int algo_rank(Algo a) { return static_cast<int>(a); }

}  // namespace detail

inline std::string results_csv(const ExperimentResult& r) {
  std::string s =
      "day,sparsity,m,model,algo,seed,fnr,fpr,rrmse,mcc,threshold,rho,level,p_excluded,day_sparsity,tp,fp,tn,fn,error\n";
  for (const auto& row : r.rows) {
    const auto& mt = row.metrics;
    const bool ok = row.error.empty();
    s += std::to_string(row.day) + ',' + format_double(row.sparsity) + ',' + std::to_string(row.m) + ',' +
         to_string(row.model) + ',' + to_string(row.algo) + ',' + std::to_string(row.seed) + ',' +
         (ok ? detail::opt_field(mt.fnr) : "") + ',' + (ok ? detail::opt_field(mt.fpr) : "") + ',' +
         (ok ? detail::opt_field(mt.rrmse) : "") + ',' + (ok ? format_double(mt.mcc) : "") + ',' +
         (std::isnan(mt.threshold) ? "" : format_double(mt.threshold)) + ',' +
         (std::isnan(row.rho) ? "" : format_double(row.rho)) + ',' + row.level + ',' +
         detail::opt_field(row.p_excluded) + ',' + format_double(row.day_sparsity) + ',' +
         (ok ? std::to_string(mt.counts.tp) + ',' + std::to_string(mt.counts.fp) + ',' + std::to_string(mt.counts.tn) +
                   ',' + std::to_string(mt.counts.fn)
             : ",,,") +
         ',' + row.error + '\n';
  }
  return s;
}

struct SummaryRow {
  std::string level;
  double sparsity = 0;
  int m = 0;
  NoiseModel model = NoiseModel::m1;
  Algo algo = Algo::ct;
  std::optional<double> p_excluded;
  std::optional<std::uint64_t> seed;  // empty: all seeds
  int days = 0;
  int fnr_excluded_days = 0;
  std::optional<double> fnr, fpr, rrmse;
  double mcc = 0;
  double total = 0;  // fnr + fpr
  std::optional<double> pooled_fnr, pooled_fpr;
};

/// Per-(cell, seed) means of the per-day metrics plus an all-seeds row per
/// cell. Null FNR days are excluded from the FNR mean and counted.
inline std::vector<SummaryRow> summarize(const ExperimentResult& r) {
  using Key = std::tuple<NoiseModel, Algo, std::string, int, double, std::uint64_t, bool>;
  std::map<Key, std::vector<const ResultRow*>> groups;
  for (const auto& row : r.rows) {
    if (!row.error.empty()) continue;
    const double p = row.p_excluded.value_or(-1);
    groups[{row.model, row.algo, row.level, row.m, p, row.seed, false}].push_back(&row);
    groups[{row.model, row.algo, row.level, row.m, p, 0, true}].push_back(&row);
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, rows] : groups) {
    SummaryRow s;
    const auto& first = *rows.front();
    s.level = first.level;
    s.sparsity = first.sparsity;
    s.m = first.m;
    s.model = first.model;
    s.algo = first.algo;
    s.p_excluded = first.p_excluded;
    if (!std::get<6>(key)) s.seed = first.seed;
    s.days = static_cast<int>(rows.size());
    double fnr = 0, fpr = 0, rr = 0, mc = 0;
    int nfnr = 0, nfpr = 0, nrr = 0;
    Confusion pooled;
    for (const auto* row : rows) {
      const auto& mt = row->metrics;
      if (mt.fnr) fnr += *mt.fnr, ++nfnr;
      else ++s.fnr_excluded_days;
      if (mt.fpr) fpr += *mt.fpr, ++nfpr;
      if (mt.rrmse) rr += *mt.rrmse, ++nrr;
      mc += mt.mcc;
      pooled.tp += mt.counts.tp;
      pooled.fp += mt.counts.fp;
      pooled.tn += mt.counts.tn;
      pooled.fn += mt.counts.fn;
    }
    if (nfnr) s.fnr = fnr / nfnr;
    if (nfpr) s.fpr = fpr / nfpr;
    if (nrr) s.rrmse = rr / nrr;
    s.mcc = mc / static_cast<double>(rows.size());
    s.total = s.fnr.value_or(0) + s.fpr.value_or(0);
    s.pooled_fnr = pooled.fnr();
    s.pooled_fpr = pooled.fpr();
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string s =
      "model,algo,level,sparsity,m,p_excluded,seed,days,fnr_excluded_days,fnr,fpr,total,rrmse,mcc,pooled_fnr,pooled_fpr\n";
  for (const auto& r : rows)
    s += std::string(to_string(r.model)) + ',' + to_string(r.algo) + ',' + r.level + ',' + format_double(r.sparsity) +
         ',' + std::to_string(r.m) + ',' + detail::opt_field(r.p_excluded) + ',' +
         (r.seed ? std::to_string(*r.seed) : "all") + ',' + std::to_string(r.days) + ',' +
         std::to_string(r.fnr_excluded_days) + ',' + detail::opt_field(r.fnr) + ',' + detail::opt_field(r.fpr) + ',' +
         format_double(r.total) + ',' + detail::opt_field(r.rrmse) + ',' + format_double(r.mcc) + ',' +
         detail::opt_field(r.pooled_fnr) + ',' + detail::opt_field(r.pooled_fpr) + '\n';
  return s;
}

// ---------------------------------------------------------------------------
// Runner

class ExperimentRunner {
 public:
  using Logger = std::function<void(const std::string&)>;

  explicit ExperimentRunner(ExperimentGrid grid, Logger log = {}) : g_(std::move(grid)), log_(std::move(log)) {
    g_.validate();
  }

  ExperimentResult run() {
    ExperimentResult res;
    std::vector<Algo> m1, m2;
    for (auto a : g_.algos) (model_of(a) == NoiseModel::m1 ? m1 : m2).push_back(a);

    for (const auto& level : g_.levels) {
      if (!m2.empty()) calibrate_rho(level, m2, res);
      for (auto seed : g_.seeds) {
        TimelineInfo info{level.label, seed, level.alpha, {}, 0, {}};
        ContactTimeline tl;
        try {
          tl = simulate(level, seed);
          info.window = test_window(tl);
          info.window_sparsity = mean_sparsity(tl, info.window);
        } catch (const Error& e) {
          info.error = e.what();
          res.timelines.push_back(info);
          for (int m : g_.m_values)
            for (auto a : g_.algos) res.cells.push_back({level.label, m, a, seed, {}, NAN, NAN, true, false, 0, e.what()});
          continue;
        }
        res.timelines.push_back(info);
        log("level " + level.label + " seed " + std::to_string(seed) + ": window " + std::to_string(info.window.first) +
            ".." + std::to_string(info.window.last) + ", sparsity " + format_double(info.window_sparsity));
        GroupCache groups;
        for (int m : g_.m_values) {
          PoolingMatrix a;
          try {
            a = kirkman_matrix(m, g_.sim.n);
          } catch (const Error& e) {
            for (auto al : g_.algos)
              res.cells.push_back({level.label, m, al, seed, {}, NAN, NAN, true, false, 0, std::string("skipped: ") + e.what()});
            continue;
          }
          const auto sa = a.to_sparse();
          for (auto al : m1) {
            if (al == Algo::ct) {
              for (double p : g_.p_excluded) run_m1_cell(tl, info, level, seed, a, sa, al, p, res);
            } else {
              run_m1_cell(tl, info, level, seed, a, sa, al, std::nullopt, res);
            }
          }
          if (!m2.empty()) run_m2_cells(tl, info, level, seed, a, m2, groups, res);
        }
      }
    }
    sort_rows(res);
    return res;
  }

  const ExperimentGrid& grid() const { return g_; }

  ContactTimeline simulate(const SparsityLevel& level, std::uint64_t seed) const {
    SimConfig c = g_.sim;
    c.alpha = level.alpha;
    // The level is deliberately not part of the seed: seed s at every level
    // shares its random streams, so per-seed comparisons across levels are
    // paired.
    c.rng_seed = derive_seed(g_.master_seed, hash_string("timeline"), seed);
    return run_simulation(c);
  }

  /// Peak-centred window, moved right when needed so the startup SI period
  /// fits before it.
  DayRange test_window(const ContactTimeline& tl) const {
    auto w = select_test_window(tl, g_.window_length);
    const int si = g_.ct.si_window;
    if (w.first < si) {
      w.first = si;
      w.last = si + g_.window_length - 1;
      if (w.last >= tl.days()) throw NoPeakError("test window does not fit after the startup period");
    }
    return w;
  }

  std::uint64_t measurement_seed(const std::string& level, std::uint64_t seed, int m, NoiseModel model, int day) const {
    return derive_seed(g_.master_seed, hash_string("measure"), hash_string(level), seed, static_cast<std::uint64_t>(m),
                       static_cast<std::uint64_t>(model), static_cast<std::uint64_t>(day));
  }

  /// Startup estimates for the contact-tracing decoder: truth with a nested
  /// random subset of size round(p n) replaced by the startup value.
  std::vector<std::vector<double>> startup_estimates(const ContactTimeline& tl, const std::string& level,
                                                     std::uint64_t seed, DayRange w, double p) const {
    const int n = tl.config.n;
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(g_.master_seed, hash_string("startup"), hash_string(level), seed));
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto excluded = static_cast<std::size_t>(std::llround(p * n));
    std::vector<std::vector<double>> out;
    for (int d = w.first - g_.ct.si_window; d < w.first; ++d) {
      const auto x = tl.infected_indicator(d);
      std::vector<double> e(x.begin(), x.end());
      for (std::size_t k = 0; k < excluded; ++k) e[static_cast<std::size_t>(perm[k])] = g_.startup_value;
      out.push_back(std::move(e));
    }
    return out;
  }

  /// Runs the contact-tracing decoder over the window with the given tests.
  CtRun run_ct(const ContactTimeline& tl, const Eigen::SparseMatrix<double>& a, DayRange w,
               const std::vector<std::vector<double>>& startup, const std::vector<std::vector<std::uint8_t>>& tests) const {
    const int si = g_.ct.si_window;
    CtHistory hist(tl.config.n);
    for (int k = 0; k < si; ++k) {
      const int d = w.first - si + k;
      hist.set_day(d, tl.daily_graphs[static_cast<std::size_t>(d)], startup[static_cast<std::size_t>(k)]);
    }
    CtRun run;
    double lambda = g_.ct.lambda_default;
    for (int d = w.first; d <= w.last; ++d) {
      const auto& y = tests[static_cast<std::size_t>(d - w.first)];
      std::vector<double> post(static_cast<std::size_t>(tl.config.n), 0.0);
      std::string err;
      int iters = 0;
      try {
        CtDenoiser den(hist.evidence_for(d, g_.ct), g_.ct, lambda);
        const auto st = run_gamp(a, y, g_.m1, den, g_.gamp);
        post = st.x_hat;
        iters = st.iteration;
        if (!den.flat()) lambda = den.lambda();
      } catch (const DivergenceError& e) {
        err = e.what();
        post = e.last_state().x_hat;
      } catch (const Error& e) {
        err = e.what();
      }
      std::vector<double> carry = post;
      if (g_.hard_carryover)
        for (auto& p : carry) p = p >= 0.5 ? 1.0 : 0.0;
      hist.set_day(d, tl.daily_graphs[static_cast<std::size_t>(d)], std::move(carry));
      run.posteriors.push_back(std::move(post));
      run.lambdas.push_back(lambda);
      run.iterations.push_back(iters);
      run.errors.push_back(std::move(err));
    }
    return run;
  }

 private:
  using GroupCache = std::map<int, std::pair<GroupStructure, GroupStructure>>;  // day -> (disjoint, oglasso)

  void log(const std::string& s) const {
    if (log_) log_(s);
  }

  std::vector<int> strided_days(DayRange w, int stride) const {
    std::vector<int> days;
    for (int d = w.first; d <= w.last; d += stride) days.push_back(d);
    return days;
  }

  const std::pair<GroupStructure, GroupStructure>& groups_for(const ContactTimeline& tl, int day, GroupCache& cache) const {
    auto it = cache.find(day);
    if (it != cache.end()) return it->second;
    // Disjoint groups are the known family partition; overlapping groups are
    // inferred from the contact graph.
    GroupStructure families;
    families.groups = household_partition(tl.households, tl.config.n);
    const auto graph = contact_window_graph(tl, day, g_.group_window);
    return cache.emplace(day, std::make_pair(std::move(families), derive_groups(graph, g_.oglasso_groups()))).first->second;
  }

  std::vector<std::uint8_t> m1_tests(const ContactTimeline& tl, const PoolingMatrix& a, const std::string& level,
                                     std::uint64_t seed, int day) const {
    Rng rng(measurement_seed(level, seed, a.m, NoiseModel::m1, day));
    return measure_m1(a, tl.infected_indicator(day), g_.m1, rng);
  }

  std::vector<double> m2_tests(const ContactTimeline& tl, const PoolingMatrix& a, const std::string& level,
                               std::uint64_t seed, int day) const {
    Rng rng(measurement_seed(level, seed, a.m, NoiseModel::m2, day));
    return measure_m2(a, tl.viral_loads(day), g_.m2, rng);
  }

  double day_sparsity(const ContactTimeline& tl, int day) const {
    return static_cast<double>(tl.active_infections(day)) / tl.config.n;
  }

  void run_m1_cell(const ContactTimeline& tl, const TimelineInfo& info, const SparsityLevel& level, std::uint64_t seed,
                   const PoolingMatrix& a, const Eigen::SparseMatrix<double>& sa, Algo algo, std::optional<double> p,
                   ExperimentResult& res) const {
    CellInfo cell{level.label, a.m, algo, seed, p, NAN, NAN, true, false, 0, {}};
    const auto w = info.window;
    const auto days = algo == Algo::ct ? strided_days(w, 1) : strided_days(w, g_.day_stride);
    std::vector<std::vector<std::uint8_t>> tests;
    for (int d : days) tests.push_back(m1_tests(tl, a, level.label, seed, d));

    std::vector<std::vector<double>> post(days.size());
    std::vector<std::string> errors(days.size());
    if (algo == Algo::ct) {
      auto run = run_ct(tl, sa, w, startup_estimates(tl, level.label, seed, w, p.value_or(0)), tests);
      post = std::move(run.posteriors);
      errors = std::move(run.errors);
    } else {
      const auto families = household_partition(tl.households, tl.config.n);
      for (std::size_t k = 0; k < days.size(); ++k) {
        try {
          GampState st;
          if (algo == Algo::family) {
            FamilyDenoiser den(tl.config.n, families, g_.family_init);
            st = run_gamp(sa, tests[k], g_.m1, den, g_.gamp);
          } else {
            BernoulliDenoiser den(g_.bernoulli_init);
            st = run_gamp(sa, tests[k], g_.m1, den, g_.gamp);
          }
          post[k] = std::move(st.x_hat);
        } catch (const Error& e) {
          errors[k] = e.what();
        }
      }
    }

    // One ROC per cell over the decoded days; its operating point is the
    // threshold applied to every day.
    std::vector<double> scores;
    std::vector<std::uint8_t> truth;
    for (std::size_t k = 0; k < days.size(); ++k) {
      if (!errors[k].empty()) continue;
      const auto x = tl.infected_indicator(days[k]);
      scores.insert(scores.end(), post[k].begin(), post[k].end());
      truth.insert(truth.end(), x.begin(), x.end());
    }
    double threshold = std::numeric_limits<double>::infinity();
    if (!scores.empty()) {
      const auto roc = roc_sweep(scores, truth);
      threshold = roc.operating_point().threshold;
      cell.roc_monotone = roc_is_monotone(roc);
      cell.roc_degenerate = roc.degenerate;
      if (g_.write_roc)
        for (const auto& pt : roc.points)
          res.roc_csv_rows.push_back(level.label + ',' + std::to_string(a.m) + ',' + to_string(algo) + ',' +
                                     std::to_string(seed) + ',' + detail::opt_field(p) + ',' +
                                     format_double(pt.threshold) + ',' + format_double(pt.fpr) + ',' +
                                     format_double(pt.fnr));
    }
    cell.threshold = threshold;

    for (std::size_t k = 0; k < days.size(); ++k) {
      ResultRow row;
      row.day = days[k];
      row.level = level.label;
      row.sparsity = level.target;
      row.day_sparsity = day_sparsity(tl, days[k]);
      row.m = a.m;
      row.model = NoiseModel::m1;
      row.algo = algo;
      row.seed = seed;
      row.p_excluded = p;
      row.error = errors[k];
      if (row.error.empty()) {
        std::vector<std::uint8_t> calls(post[k].size());
        for (std::size_t i = 0; i < calls.size(); ++i) calls[i] = post[k][i] >= threshold ? 1 : 0;
        row.metrics = compute_metrics(tl.infected_indicator(days[k]), calls, {}, {}, threshold);
      } else {
        ++cell.failed_days;
        row.metrics.threshold = threshold;
      }
      res.rows.push_back(std::move(row));
    }
    res.cells.push_back(cell);
  }

  double rho_for(const std::string& level, int m, Algo algo, const ExperimentResult& res) const {
    if (!uses_rho(algo)) return NAN;
    if (auto it = g_.rho_fixed.find(algo); it != g_.rho_fixed.end()) return it->second;
    auto it = res.rho_choice.find({level, m, algo});
    if (it == res.rho_choice.end()) throw StructuralError("no calibrated rho");
    return it->second;
  }

  /// Picks rho per (level, m, decoder) on a held-out timeline by the mean
  /// FNR + FPR over strided window days.
  void calibrate_rho(const SparsityLevel& level, const std::vector<Algo>& algos, ExperimentResult& res) const {
    std::vector<Algo> todo;
    for (auto a : algos)
      if (uses_rho(a) && !g_.rho_fixed.count(a)) todo.push_back(a);
    if (todo.empty()) return;
    ContactTimeline tl;
    DayRange w;
    try {
      tl = simulate(level, g_.calibration_seed);
      w = test_window(tl);
    } catch (const Error& e) {
      log("rho calibration for " + level.label + " failed: " + e.what() + "; using grid midpoints");
      for (int m : g_.m_values)
        for (auto a : todo) {
          const auto& grid = a == Algo::comp_lasso ? g_.rho_grid_lasso : g_.rho_grid_sqrt;
          res.rho_choice[{level.label, m, a}] = grid[grid.size() / 2];
        }
      return;
    }
    const auto days = strided_days(w, g_.calibration_stride);
    GroupCache groups;
    for (int m : g_.m_values) {
      PoolingMatrix a;
      try {
        a = kirkman_matrix(m, g_.sim.n);
      } catch (const Error&) {
        continue;
      }
      std::vector<std::vector<double>> ys;
      for (int d : days) ys.push_back(m2_tests(tl, a, level.label, g_.calibration_seed, d));
      for (auto algo : todo) {
        const auto& grid = algo == Algo::comp_lasso ? g_.rho_grid_lasso : g_.rho_grid_sqrt;
        double best = std::numeric_limits<double>::infinity(), best_rho = grid.front();
        for (double rho : grid) {
          double total = 0;
          for (std::size_t k = 0; k < days.size(); ++k) {
            const auto& gp = groups_for(tl, days[k], groups);
            const auto* gs = algo == Algo::comp_sqrt_glasso ? &gp.first : &gp.second;
            try {
              const auto dec = decode_m2(a, ys[k], algo, rho, gs, g_.tau, g_.solver);
              const auto c = confusion(tl.infected_indicator(days[k]), dec.calls);
              total += c.fnr().value_or(0) + c.fpr().value_or(0);
            } catch (const Error&) {
              total += 2;
            }
          }
          if (total < best - 1e-12) {
            best = total;
            best_rho = rho;
          }
        }
        res.rho_choice[{level.label, m, algo}] = best_rho;
        log("rho " + level.label + " m=" + std::to_string(m) + " " + to_string(algo) + ": " + format_double(best_rho));
      }
    }
  }

  void run_m2_cells(const ContactTimeline& tl, const TimelineInfo& info, const SparsityLevel& level,
                    std::uint64_t seed, const PoolingMatrix& a, const std::vector<Algo>& algos, GroupCache& groups,
                    ExperimentResult& res) const {
    std::vector<CellInfo> cells;
    std::vector<double> rhos;
    for (auto algo : algos) {
      CellInfo c{level.label, a.m, algo, seed, std::nullopt, g_.tau, NAN, true, false, 0, {}};
      double rho = NAN;
      try {
        rho = rho_for(level.label, a.m, algo, res);
      } catch (const Error& e) {
        c.error = e.what();
      }
      c.rho = rho;
      cells.push_back(c);
      rhos.push_back(rho);
    }
    for (int d : strided_days(info.window, g_.day_stride)) {
      const auto y = m2_tests(tl, a, level.label, seed, d);
      const auto x = tl.infected_indicator(d);
      const auto loads = tl.viral_loads(d);
      for (std::size_t k = 0; k < algos.size(); ++k) {
        if (!cells[k].error.empty()) continue;
        ResultRow row;
        row.day = d;
        row.level = level.label;
        row.sparsity = level.target;
        row.day_sparsity = day_sparsity(tl, d);
        row.m = a.m;
        row.model = NoiseModel::m2;
        row.algo = algos[k];
        row.seed = seed;
        row.rho = rhos[k];
        try {
          const GroupStructure* gs = nullptr;
          if (algos[k] == Algo::comp_sqrt_glasso) gs = &groups_for(tl, d, groups).first;
          if (algos[k] == Algo::comp_sqrt_oglasso) gs = &groups_for(tl, d, groups).second;
          const auto dec = decode_m2(a, y, algos[k], rhos[k], gs, g_.tau, g_.solver);
          row.metrics = dec.has_estimate ? compute_metrics(x, dec.calls, loads, dec.x_hat, g_.tau)
                                         : compute_metrics(x, dec.calls);
        } catch (const Error& e) {
          row.error = e.what();
          ++cells[k].failed_days;
        }
        res.rows.push_back(std::move(row));
      }
    }
    res.cells.insert(res.cells.end(), cells.begin(), cells.end());
  }

  void sort_rows(ExperimentResult& res) const {
    auto key = [&](const ResultRow& r) {
      return std::make_tuple(static_cast<int>(r.model), detail::algo_rank(r.algo), detail::level_index(g_, r.level), r.m,
                             r.p_excluded.value_or(-1), r.seed, r.day);
    };
    std::stable_sort(res.rows.begin(), res.rows.end(), [&](const ResultRow& a, const ResultRow& b) { return key(a) < key(b); });
  }

  ExperimentGrid g_;
  Logger log_;
};

inline Json manifest_json(const ExperimentGrid& g, const ExperimentResult& r) {
  Json timelines = Json::array();
  for (const auto& t : r.timelines)
    timelines.push_back({{"level", t.level},
                         {"seed", t.seed},
                         {"alpha", t.alpha},
                         {"window", {t.window.first, t.window.last}},
                         {"window_sparsity", t.window_sparsity},
                         {"error", t.error}});
  Json cells = Json::array();
  for (const auto& c : r.cells) {
    Json j{{"level", c.level},
           {"m", c.m},
           {"algo", to_string(c.algo)},
           {"seed", c.seed},
           {"failed_days", c.failed_days},
           {"error", c.error}};
    if (c.p_excluded) j["p_excluded"] = *c.p_excluded;
    if (!std::isnan(c.threshold)) j["threshold"] = format_double(c.threshold);
    if (!std::isnan(c.rho)) j["rho"] = c.rho;
    if (model_of(c.algo) == NoiseModel::m1) {
      j["roc_monotone"] = c.roc_monotone;
      j["roc_degenerate"] = c.roc_degenerate;
    }
    cells.push_back(std::move(j));
  }
  Json rho = Json::array();
  for (const auto& [k, v] : r.rho_choice)
    rho.push_back({{"level", std::get<0>(k)}, {"m", std::get<1>(k)}, {"algo", to_string(std::get<2>(k))}, {"rho", v}});
  return Json{{"format", "pooltrace-experiment"},
              {"config", to_json(g)},
              {"rows", r.rows.size()},
              {"failed_cells", r.failed_cells()},
              {"rho_calibration", rho},
              {"timelines", timelines},
              {"cells", cells}};
}

/// Writes results.csv, summary.csv, manifest.json (and roc.csv when asked).
inline void write_experiment(const fs::path& dir, const ExperimentGrid& g, const ExperimentResult& r) {
  fs::create_directories(dir);
  write_text(dir / "results.csv", results_csv(r));
  write_text(dir / "summary.csv", summary_csv(summarize(r)));
  write_json(dir / "manifest.json", manifest_json(g, r));
  if (g.write_roc) {
    std::string s = "level,m,algo,seed,p_excluded,threshold,fpr,fnr\n";
    for (const auto& line : r.roc_csv_rows) s += line + '\n';
    write_text(dir / "roc.csv", s);
  }
}

}  // namespace pooltrace
