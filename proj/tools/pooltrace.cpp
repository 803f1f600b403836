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

// pooltrace command-line front end.
//
// Exit codes: 0 success, 1 runtime error, 2 configuration error, 3 at least
// one experiment cell failed.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pooltrace/harness.hpp"

namespace pt = pooltrace;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = ".";
};

pt::Json load_config(const Globals& g) {
  if (g.config.empty()) return pt::Json::object();
  return pt::read_json(g.config);
}

pt::ExperimentGrid grid_from(const Globals& g) {
  auto grid = pt::grid_from_json(load_config(g));
  if (g.seed) grid.master_seed = *g.seed;
  return grid;
}

std::vector<double> as_double(const pt::Measurement& meas) { return meas.y; }

std::vector<std::uint8_t> as_binary(const pt::Measurement& meas) {
  std::vector<std::uint8_t> y;
  for (double v : meas.y) {
    if (v != 0 && v != 1) throw pt::DomainError("M1 measurement has non-binary entries");
    y.push_back(static_cast<std::uint8_t>(v));
  }
  return y;
}

int cmd_simulate(const Globals& g, std::optional<double> alpha) {
  auto cfg = load_config(g);
  pt::SimConfig sim = cfg.contains("sim") ? pt::sim_config_from_json(cfg.at("sim")) : pt::SimConfig{};
  if (alpha) sim.alpha = *alpha;
  if (g.seed) sim.rng_seed = *g.seed;
  sim.validate();
  const auto tl = pt::run_simulation(sim);
  pt::Json extra;
  try {
    const auto w = pt::select_test_window(tl);
    extra["window"] = {w.first, w.last};
    extra["window_sparsity"] = pt::mean_sparsity(tl, w);
  } catch (const pt::NoPeakError& e) {
    extra["window_error"] = e.what();
  }
  pt::write_timeline(g.out, tl, extra);
  std::cout << "wrote timeline (" << tl.days() << " days) to " << g.out << "\n";
  return 0;
}

int cmd_design(const Globals& g, int n, int m, int k) {
  const auto a = pt::kirkman_matrix(m, n, k);
  const auto report = pt::verify_design(a, k);
  if (!report.passes()) throw pt::ConstructionError("design failed verification");
  pt::write_matrix(g.out, a);
  std::cout << "wrote " << m << "x" << n << " design to " << g.out << "\n";
  return 0;
}

int cmd_measure(const Globals& g, const std::string& timeline, const std::string& matrix, int day,
                const std::string& model) {
  const auto grid = grid_from(g);
  const auto tl = pt::read_timeline(timeline);
  const auto a = pt::read_matrix(matrix);
  if (day < 0 || day >= tl.days()) throw pt::ConfigError("--day out of range");
  pt::Rng rng(pt::derive_seed(g.seed.value_or(grid.master_seed), pt::hash_string("measure"),
                              static_cast<std::uint64_t>(day)));
  pt::Measurement meas;
  meas.model = pt::noise_model_from_string(model);
  if (meas.model == pt::NoiseModel::m1) {
    const auto y = pt::measure_m1(a, tl.infected_indicator(day), grid.m1, rng);
    meas.y.assign(y.begin(), y.end());
    meas.header["params"] = {{"p_fp", grid.m1.p_fp}, {"p_fn", grid.m1.p_fn}};
  } else {
    meas.y = pt::measure_m2(a, tl.viral_loads(day), grid.m2, rng);
    meas.header["params"] = {{"q", grid.m2.q}, {"sigma2", grid.m2.sigma2}};
  }
  meas.header["seed"] = g.seed.value_or(grid.master_seed);
  meas.header["day"] = day;
  meas.header["matrix"] = matrix;
  meas.header["timeline"] = timeline;
  pt::write_measurement(g.out, meas);
  std::cout << "wrote " << meas.y.size() << " pool results to " << g.out << "\n";
  return 0;
}

struct DecodeArgs {
  std::string matrix, measurement, timeline, groups_file, model = "m2", algo;
  int day = -1;
  std::optional<double> rho;
  double tau = 0.2;
};

int cmd_decode(const Globals& g, const DecodeArgs& d) {
  const auto grid = grid_from(g);
  const auto a = pt::read_matrix(d.matrix);
  const auto meas = pt::read_measurement(d.measurement);
  const auto algo = pt::algo_from_string(d.algo);
  if (pt::model_of(algo) != pt::noise_model_from_string(d.model))
    throw pt::ConfigError("--algo " + d.algo + " does not belong to --model " + d.model);
  if (meas.model != pt::model_of(algo)) throw pt::ConfigError("measurement model does not match --model");
  std::optional<pt::ContactTimeline> tl;
  if (!d.timeline.empty()) tl = pt::read_timeline(d.timeline);
  auto need_timeline = [&] {
    if (!tl || d.day < 0 || d.day >= tl->days()) throw pt::ConfigError(d.algo + " needs --timeline and a valid --day");
  };
  pt::Json state{{"model", d.model}, {"algo", d.algo}};

  if (pt::model_of(algo) == pt::NoiseModel::m1) {
    const auto y = as_binary(meas);
    const auto sa = a.to_sparse();
    pt::GampState st;
    if (algo == pt::Algo::ct) {
      need_timeline();
      pt::ExperimentRunner runner(grid);
      const pt::DayRange w{d.day, d.day};
      if (d.day < grid.ct.si_window) throw pt::ConfigError("--day must leave room for the startup SI period");
      const auto run = runner.run_ct(*tl, sa, w,
                                     runner.startup_estimates(*tl, "cli", grid.master_seed, w, grid.p_excluded.front()),
                                     {y});
      if (!run.errors.front().empty()) throw pt::Error(run.errors.front());
      st.x_hat = run.posteriors.front();
      st.iteration = run.iterations.front();
      state["lambda"] = run.lambdas.front();
    } else if (algo == pt::Algo::family) {
      need_timeline();
      pt::FamilyDenoiser den(a.n, pt::household_partition(tl->households, a.n), grid.family_init);
      st = pt::run_gamp(sa, y, grid.m1, den, grid.gamp);
      state["pi_vf"] = den.prior().pi_vf;
      state["pi_ind"] = den.prior().pi_ind;
    } else {
      pt::BernoulliDenoiser den(grid.bernoulli_init);
      st = pt::run_gamp(sa, y, grid.m1, den, grid.gamp);
      state["pi"] = den.pi();
    }
    state["iterations"] = st.iteration;
    state["converged"] = st.converged;
    pt::write_posterior(g.out, st.x_hat, state);
  } else {
    std::optional<pt::GroupStructure> groups;
    if (algo == pt::Algo::comp_sqrt_glasso || algo == pt::Algo::comp_sqrt_oglasso) {
      if (!d.groups_file.empty()) {
        groups = pt::groups_from_json(pt::read_json(d.groups_file));
      } else {
        need_timeline();
        if (algo == pt::Algo::comp_sqrt_glasso) {
          groups = pt::GroupStructure{pt::household_partition(tl->households, tl->config.n), false};
        } else {
          groups = pt::derive_groups(pt::contact_window_graph(*tl, d.day, grid.group_window), grid.oglasso_groups());
        }
        pt::write_json(pt::fs::path(g.out) / "groups.json",
                       pt::groups_to_json(*groups, algo == pt::Algo::comp_sqrt_glasso ? "families" : pt::to_string(grid.oglasso_groups())));
      }
    }
    double rho = NAN;
    if (pt::uses_rho(algo)) {
      if (!d.rho) throw pt::ConfigError(d.algo + " needs --rho");
      rho = *d.rho;
    }
    const auto y = as_double(meas);
    const auto dec = pt::decode_m2(a, y, algo, rho, groups ? &*groups : nullptr, d.tau, grid.solver);
    state["tau"] = d.tau;
    if (!std::isnan(rho)) state["rho"] = rho;
    state["comp_negatives"] = dec.negatives.size();
    state["iterations"] = dec.iterations;
    state["converged"] = dec.converged;
    state["positives"] = std::count(dec.calls.begin(), dec.calls.end(), 1);
    if (dec.has_estimate) {
      pt::write_posterior(g.out, dec.x_hat, state, "viral_load");
    } else {
      std::vector<double> calls(dec.calls.begin(), dec.calls.end());
      pt::write_posterior(g.out, calls, state, "call");
    }
  }
  std::cout << "wrote decoder output to " << g.out << "\n";
  return 0;
}

int cmd_experiment(const Globals& g, bool quiet) {
  const auto grid = grid_from(g);
  pt::ExperimentRunner runner(grid, [quiet](const std::string& s) {
    if (!quiet) std::cerr << s << "\n";
  });
  const auto res = runner.run();
  pt::write_experiment(g.out, grid, res);
  const int failed = res.failed_cells();
  std::cout << res.rows.size() << " rows, " << res.cells.size() << " cells, " << failed << " failed; results in "
            << g.out << "\n";
  if (failed > 0) {
    for (const auto& c : res.cells)
      if (!c.error.empty() || c.failed_days > 0)
        std::cerr << "failed cell: level " << c.level << " m=" << c.m << " " << pt::to_string(c.algo) << " seed "
                  << c.seed << ": " << (c.error.empty() ? std::to_string(c.failed_days) + " failed days" : c.error)
                  << "\n";
    return 3;
  }
  return 0;
}

int cmd_metrics(const Globals& g, const std::string& posterior, const std::string& timeline, int day,
                std::optional<double> threshold) {
  const auto tl = pt::read_timeline(timeline);
  if (day < 0 || day >= tl.days()) throw pt::ConfigError("--day out of range");
  const auto scores = pt::read_posterior(posterior);
  const auto truth = tl.infected_indicator(day);
  if (scores.size() != truth.size()) throw pt::StructuralError("posterior length does not match population");
  pt::Json out;
  double t;
  if (threshold) {
    t = *threshold;
  } else {
    const auto roc = pt::roc_sweep(scores, truth);
    t = roc.operating_point().threshold;
    std::string s = "threshold,fpr,fnr\n";
    for (const auto& p : roc.points)
      s += pt::format_double(p.threshold) + ',' + pt::format_double(p.fpr) + ',' + pt::format_double(p.fnr) + '\n';
    pt::write_text(pt::fs::path(g.out) / "roc.csv", s);
    out["roc_degenerate"] = roc.degenerate;
  }
  std::vector<std::uint8_t> calls(scores.size());
  for (std::size_t i = 0; i < calls.size(); ++i) calls[i] = threshold ? scores[i] > t : scores[i] >= t;
  const auto loads = tl.viral_loads(day);
  const auto r = pt::compute_metrics(truth, calls);
  auto opt = [](const std::optional<double>& v) { return v ? pt::Json(*v) : pt::Json(nullptr); };
  out["threshold"] = pt::format_double(t);
  out["rule"] = threshold ? "score > threshold" : "score >= threshold";
  out["fnr"] = opt(r.fnr);
  out["fpr"] = opt(r.fpr);
  out["mcc"] = r.mcc;
  out["rrmse"] = opt(pt::rrmse(loads, scores));
  out["counts"] = {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}};
  pt::write_json(pt::fs::path(g.out) / "metrics.json", out);
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_groups(const Globals& g, const std::string& timeline, int day, const std::string& mode) {
  const auto grid = grid_from(g);
  const auto tl = pt::read_timeline(timeline);
  if (day < 0 || day >= tl.days()) throw pt::ConfigError("--day out of range");
  const auto graph = pt::contact_window_graph(tl, day, grid.group_window);
  pt::GroupStructure groups;
  if (mode == "families") groups = {pt::household_partition(tl.households, tl.config.n), false};
  else if (mode == "partition") groups = pt::partition_groups(graph);
  else groups = pt::derive_groups(graph, pt::group_mode_from_string(mode));
  pt::write_json(pt::fs::path(g.out) / "groups.json", pt::groups_to_json(groups, mode));
  std::cout << groups.groups.size() << " groups written\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pooltrace: pooled testing with contact-tracing side information"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Master random seed");
  app.add_option("--config", g.config, "JSON configuration document");
  app.add_option("--out", g.out, "Output directory");

  auto* sim = app.add_subcommand("simulate", "Simulate an epidemic timeline");
  std::optional<double> alpha;
  sim->add_option("--alpha", alpha, "Cross-household contact rate");

  auto* design = app.add_subcommand("design-matrix", "Build a Kirkman-type pooling matrix");
  int n = 1000, m = 375, k = 3;
  design->add_option("--n", n, "Number of samples");
  design->add_option("--m", m, "Number of pools")->required();
  design->add_option("--k", k, "Pools per sample");

  auto* measure = app.add_subcommand("measure", "Pool one day of a timeline");
  std::string timeline, matrix, model = "m1";
  int day = -1;
  measure->add_option("--timeline", timeline, "Timeline directory from simulate")->required();
  measure->add_option("--matrix", matrix, "Matrix directory from design-matrix")->required();
  measure->add_option("--day", day, "Day to pool")->required();
  measure->add_option("--model", model, "Noise model")->check(CLI::IsMember({"m1", "m2"}));

  auto* decode = app.add_subcommand("decode", "Decode one measurement vector");
  DecodeArgs da;
  decode->add_option("--matrix", da.matrix, "Matrix directory from design-matrix")->required();
  decode->add_option("--measurement", da.measurement, "Measurement directory from measure")->required();
  decode->add_option("--model", da.model, "Noise model")->check(CLI::IsMember({"m1", "m2"}));
  decode->add_option("--algo", da.algo)
      ->required()
      ->check(CLI::IsMember({"ct", "family", "bernoulli", "comp", "comp-lasso", "comp-sqrt-glasso", "comp-sqrt-oglasso"}));
  decode->add_option("--rho", da.rho, "Regularization weight");
  decode->add_option("--tau", da.tau, "Positive-call threshold on x_hat");
  decode->add_option("--timeline", da.timeline, "Timeline directory (contacts, households)");
  decode->add_option("--day", da.day, "Test day within the timeline");
  decode->add_option("--groups", da.groups_file, "groups.json from the groups command");

  auto* experiment = app.add_subcommand("experiment", "Run an experiment grid");
  bool quiet = false;
  experiment->add_flag("--quiet", quiet, "Suppress progress output");

  auto* metrics = app.add_subcommand("metrics", "Score a posterior against the truth");
  std::string posterior;
  std::optional<double> threshold;
  metrics->add_option("--posterior", posterior, "Output directory of decode")->required();
  metrics->add_option("--timeline", timeline, "Timeline directory")->required();
  metrics->add_option("--day", day, "Day the posterior refers to")->required();
  metrics->add_option("--threshold", threshold, "Fixed threshold (score > t); default: ROC operating point");

  auto* groups = app.add_subcommand("groups", "Derive decoder groups from contacts");
  std::string mode = "3-clique-communities";
  groups->add_option("--timeline", timeline, "Timeline directory")->required();
  groups->add_option("--day", day, "Last day of the contact window")->required();
  groups->add_option("--mode", mode, "Group construction")->check(CLI::IsMember({"maximal-cliques", "3-clique-communities", "partition", "families"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*sim) return cmd_simulate(g, alpha);
    if (*design) return cmd_design(g, n, m, k);
    if (*measure) return cmd_measure(g, timeline, matrix, day, model);
    if (*decode) return cmd_decode(g, da);
    if (*experiment) return cmd_experiment(g, quiet);
    if (*metrics) return cmd_metrics(g, posterior, timeline, day, threshold);
    if (*groups) return cmd_groups(g, timeline, day, mode);
  } catch (const pt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const pt::ConstructionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
