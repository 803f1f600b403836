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


// Acceptance checks, one per criterion. Usage: pooltrace_acceptance N [cli]
// Prints a single "criterion N: PASS|FAIL ..." line and exits 0 on pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "pooltrace/harness.hpp"
#include "support/oracles.hpp"

namespace pt = pooltrace;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void fail(const std::string& why) {
    pass = false;
    detail << " [" << why << "]";
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::uint64_t> seeds_1_to(int k) {
  std::vector<std::uint64_t> s;
  for (int i = 1; i <= k; ++i) s.push_back(static_cast<std::uint64_t>(i));
  return s;
}

void progress(const std::string& s) { std::cerr << s << "\n"; }

// Sign test with ties counted as agreeing with the claimed ordering.
constexpr double kSignAlpha = 0.05;

bool sign_test(int agree, int total) { return oracle::sign_test_p(agree, total) < kSignAlpha; }

using CellKey = std::tuple<pt::Algo, std::string, int, double>;  // algo, level, m, p_excluded

struct Totals {
  std::map<CellKey, std::map<std::uint64_t, double>> per_seed;
  std::map<CellKey, double> mean;
};

Totals totals_of(const pt::ExperimentResult& r) {
  Totals t;
  for (const auto& s : pt::summarize(r)) {
    const CellKey k{s.algo, s.level, s.m, s.p_excluded.value_or(0)};
    if (s.seed) t.per_seed[k][*s.seed] = s.total;
    else t.mean[k] = s.total;
  }
  return t;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  for (int m : {150, 300, 375}) {
    const auto a = pt::kirkman_matrix(m, 1000);
    const auto rep = pt::verify_design(a);
    o.detail << " m=" << m << ":max_dot=" << rep.max_column_dot << ",blocks=" << a.blocks.size();
    if (!rep.passes()) o.fail("design m=" + std::to_string(m) + " fails verification");
    if (rep.column_weight_histogram != std::map<int, int>{{3, 1000}}) o.fail("column weights m=" + std::to_string(m));
    if (rep.row_weight_histogram != std::map<int, int>{{3000 / m, m}}) o.fail("row weights m=" + std::to_string(m));
  }
  const double dt = seconds_since(t0);
  o.detail << " time=" << dt << "s";
  if (dt >= 5.0) o.fail("runtime >= 5 s");
  if (pt::valid_pool_counts(1000) != std::vector<int>{120, 150, 300, 375, 600, 750}) o.fail("valid_pool_counts(1000)");
  return o;
}

Outcome criterion2() {
  Outcome o;
  pt::ExperimentGrid g;
  g.algos = {pt::Algo::comp};
  g.seeds = seeds_1_to(3);
  pt::ExperimentRunner runner(g);
  const auto r = runner.run();
  long long instances = 0, with_positives = 0, fn_total = 0, bad = 0;
  for (const auto& row : r.rows) {
    ++instances;
    if (!row.error.empty()) {
      ++bad;
      continue;
    }
    if (row.metrics.counts.tp + row.metrics.counts.fn > 0) ++with_positives;
    fn_total += row.metrics.counts.fn;
    if (row.metrics.counts.fn != 0 || (row.metrics.fnr && *row.metrics.fnr != 0.0)) ++bad;
  }
  o.detail << " instances=" << instances << " with_positives=" << with_positives << " false_negatives=" << fn_total;
  if (with_positives < 500) o.fail("fewer than 500 instances with positives");
  if (bad > 0) o.fail(std::to_string(bad) + " instances with FNR > 0 or errors");
  return o;
}

Outcome criterion3() {
  Outcome o;
  std::mt19937_64 rng(20231);
  std::uniform_int_distribution<int> size(1, 10);
  std::uniform_real_distribution<double> v(-0.5, 1.5), d(0.05, 1.0), u(0.01, 0.99);

  double fam_err = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> vf(static_cast<std::size_t>(size(rng)));
    for (auto& x : vf) x = v(rng);
    const double delta = d(rng), pvf = u(rng), pind = u(rng);
    std::vector<double> out(vf.size());
    pt::denoise_family(vf, delta, {pvf, pind}, out);
    const auto ref = oracle::family_posterior(vf, delta, pvf, pind);
    for (std::size_t i = 0; i < vf.size(); ++i) fam_err = std::max(fam_err, std::abs(out[i] - ref[i]));
  }
  o.detail << " family_max_err=" << fam_err;
  if (!(fam_err <= 1e-10)) o.fail("family denoiser");

  const pt::M1Params p{0.001, 0.02};
  std::uniform_real_distribution<double> kd(-1.0, 3.0), th(0.01, 4.0);
  double ch_err = 0;
  for (int t = 0; t < 200; ++t) {
    const int y = t % 2;
    const double k = kd(rng), theta = th(rng);
    const auto mo = pt::output_denoiser_binary(y, k, theta, p);
    const auto q = oracle::channel_quadrature(y, k, theta, p.p_fp, p.p_fn);
    ch_err = std::max({ch_err, std::abs(mo.mean - q.mean), std::abs(mo.variance - q.variance)});
  }
  o.detail << " channel_max_err=" << ch_err;
  if (!(ch_err <= 1e-6)) o.fail("output channel");

  double half_err = 0;
  for (int t = 0; t < 1000; ++t) {
    const double delta = d(rng), prior = u(rng);
    half_err = std::max({half_err, std::abs(pt::denoise_ct(0.5, delta, prior) - prior),
                         std::abs(pt::denoise_bernoulli(0.5, delta, prior) - prior)});
  }
  o.detail << " half_max_err=" << half_err;
  if (!(half_err <= 1e-12)) o.fail("v = 1/2 does not return the prior");
  return o;
}

Outcome criterion4() {
  Outcome o;
  const auto data = oracle::load_convex_oracle(POOLTRACE_TEST_DATA_DIR "/convex_oracle.json");
  const pt::SolverOptions tight{400000, 1e-10, false};
  auto groups = [](const std::vector<std::vector<int>>& g, bool overlapping) {
    pt::GroupStructure s;
    s.groups = g;
    s.overlapping = overlapping;
    return s;
  };
  double red_og = 0, red_gl = 0, gap = -INFINITY;
  int count = 0;
  for (const auto& j : data.at("random")) {
    const auto c = oracle::parse_instance(j);
    if (c.a.cols() > 40) o.fail(c.name + " has more than 40 columns");
    ++count;
    const auto disjoint = groups(c.groups_disjoint, false);
    const auto singles = pt::GroupStructure::singletons(static_cast<int>(c.a.cols()));
    const auto gl = pt::sqrt_glasso(c.a, c.y, disjoint, c.rho_sqrt, tight);
    const auto og = pt::sqrt_oglasso(c.a, c.y, disjoint, c.rho_sqrt, tight);
    const auto gs = pt::sqrt_glasso(c.a, c.y, singles, c.rho_sqrt, tight);
    const auto sl = pt::sqrt_lasso_nonneg(c.a, c.y, c.rho_sqrt, tight);
    const auto la = pt::lasso_nonneg(c.a, c.y, c.rho_lasso, tight);
    const auto ov = pt::sqrt_oglasso(c.a, c.y, groups(c.groups_overlap, true), c.rho_sqrt, tight);
    red_og = std::max(red_og, (og.x - gl.x).norm() / std::max(gl.x.norm(), 1e-12));
    red_gl = std::max(red_gl, (gs.x - sl.x).norm() / std::max(sl.x.norm(), 1e-12));

    std::vector<std::vector<int>> single_groups;
    for (int k = 0; k < c.a.cols(); ++k) single_groups.push_back({k});
    const std::map<std::string, double> ours{
        {"lasso", pt::lasso_objective(c.a, c.y, la.x, c.rho_lasso)},
        {"sqrt_lasso", pt::sqrt_glasso_objective(c.a, c.y, sl.x, single_groups, c.rho_sqrt)},
        {"sqrt_glasso", pt::sqrt_glasso_objective(c.a, c.y, gl.x, c.groups_disjoint, c.rho_sqrt)},
        {"sqrt_oglasso", ov.objective}};
    for (const auto& [est, f] : ours) {
      const double g = f - c.reference.at(est).first;
      gap = std::max(gap, g);
      if (g > 1e-5) o.fail(c.name + " " + est + " objective gap " + std::to_string(g));
    }
  }
  o.detail << " instances=" << count << " oglasso_vs_glasso=" << red_og << " glasso_vs_sqrt_lasso=" << red_gl
           << " max_objective_gap=" << gap;
  if (count < 50) o.fail("fewer than 50 oracle instances");
  if (!(red_og <= 1e-4)) o.fail("oglasso(disjoint) differs from glasso");
  if (!(red_gl <= 1e-4)) o.fail("glasso(singletons) differs from sqrt-lasso");
  return o;
}

Outcome criterion5() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  pt::ExperimentGrid g;
  g.levels = {pt::default_sparsity_levels().front()};
  g.m_values = {375};
  g.algos = {pt::Algo::ct};
  g.seeds = seeds_1_to(10);
  const auto r = pt::ExperimentRunner(g, progress).run();
  const double dt = seconds_since(t0);
  double ws = 0;
  for (const auto& t : r.timelines) ws += t.window_sparsity;
  ws /= static_cast<double>(r.timelines.size());
  o.detail << " window_sparsity=" << ws << " time=" << dt << "s";
  bool found = false;
  for (const auto& s : pt::summarize(r)) {
    if (s.seed) continue;
    found = true;
    o.detail << " fnr=" << s.fnr.value_or(NAN) << " fpr=" << s.fpr.value_or(NAN);
    if (!(s.fnr.value_or(1) <= 0.05)) o.fail("mean FNR > 0.05");
    if (!(s.fpr.value_or(1) <= 0.05)) o.fail("mean FPR > 0.05");
  }
  if (!found) o.fail("no summary row");
  if (r.failed_cells() > 0) o.fail(std::to_string(r.failed_cells()) + " failed cells");
  if (dt >= 600) o.fail("runtime >= 10 min");
  return o;
}

Outcome criterion6() {
  Outcome o;
  pt::ExperimentGrid g;
  g.seeds = seeds_1_to(10);
  g.day_stride = 5;
  const auto r = pt::ExperimentRunner(g, progress).run();
  if (r.failed_cells() > 0) o.fail(std::to_string(r.failed_cells()) + " failed cells");
  const auto t = totals_of(r);
  const int ns = static_cast<int>(g.seeds.size());
  auto agree = [&](const CellKey& lo, const CellKey& hi, auto cmp) {
    int k = 0;
    for (auto s : g.seeds) k += cmp(t.per_seed.at(lo).at(s), t.per_seed.at(hi).at(s));
    return k;
  };
  int m_checks = 0, m_fails = 0, s_checks = 0, s_fails = 0;
  for (auto al : g.algos) {
    for (const auto& lv : g.levels)
      for (std::size_t i = 0; i + 1 < g.m_values.size(); ++i) {
        const CellKey lo{al, lv.label, g.m_values[i], 0}, hi{al, lv.label, g.m_values[i + 1], 0};
        const int k = agree(lo, hi, [](double a, double b) { return b <= a; });
        ++m_checks;
        if (!sign_test(k, ns)) {
          ++m_fails;
          o.fail(std::string(pt::to_string(al)) + " " + lv.label + " m " + std::to_string(g.m_values[i]) + "->" +
                 std::to_string(g.m_values[i + 1]) + " " + std::to_string(k) + "/" + std::to_string(ns));
        }
      }
    for (int m : g.m_values)
      for (std::size_t i = 0; i + 1 < g.levels.size(); ++i) {
        const CellKey lo{al, g.levels[i].label, m, 0}, hi{al, g.levels[i + 1].label, m, 0};
        const int k = agree(lo, hi, [](double a, double b) { return b >= a; });
        ++s_checks;
        if (!sign_test(k, ns)) {
          ++s_fails;
          o.fail(std::string(pt::to_string(al)) + " m=" + std::to_string(m) + " " + g.levels[i].label + "->" +
                 g.levels[i + 1].label + " " + std::to_string(k) + "/" + std::to_string(ns));
        }
      }
  }
  o.detail << " m_order=" << m_checks - m_fails << "/" << m_checks << " sparsity_order=" << s_checks - s_fails << "/"
           << s_checks;

  int ct_cells = 0, ct_wins = 0;
  double og_sum = 0, gl_sum = 0;
  for (const auto& lv : g.levels)
    for (int m : g.m_values) {
      const double ct = t.mean.at({pt::Algo::ct, lv.label, m, 0}), fam = t.mean.at({pt::Algo::family, lv.label, m, 0});
      ++ct_cells;
      if (ct <= fam) ++ct_wins;
      else o.fail("ct > family at " + lv.label + " m=" + std::to_string(m) + " (" + std::to_string(ct) + " vs " +
                  std::to_string(fam) + ")");
      const double og = t.mean.at({pt::Algo::comp_sqrt_oglasso, lv.label, m, 0});
      const double gl = t.mean.at({pt::Algo::comp_sqrt_glasso, lv.label, m, 0});
      og_sum += og;
      gl_sum += gl;
      o.detail << " og/gl[" << lv.label << "," << m << "]=" << (gl > 0 ? og / gl : NAN);
    }
  const double rel = std::abs(og_sum - gl_sum) / gl_sum;
  o.detail << " ct<=family=" << ct_wins << "/" << ct_cells << " og_vs_gl_disjoint=" << rel;
  if (!(rel <= 0.2)) o.fail("oglasso not within 20% of glasso on disjoint cliques");

  // Almost-clique contact graphs.
  pt::ExperimentGrid h;
  h.seeds = seeds_1_to(10);
  h.day_stride = 5;
  h.algos = {pt::Algo::comp_sqrt_glasso, pt::Algo::comp_sqrt_oglasso};
  h.sim.graph_mode = pt::GraphMode::overlapping_almost_cliques;
  const auto ra = pt::ExperimentRunner(h, progress).run();
  if (ra.failed_cells() > 0) o.fail(std::to_string(ra.failed_cells()) + " failed almost-clique cells");
  const auto ta = totals_of(ra);
  int better = 0;
  for (auto s : h.seeds) {
    double og = 0, gl = 0;
    for (const auto& lv : h.levels)
      for (int m : h.m_values) {
        og += ta.per_seed.at({pt::Algo::comp_sqrt_oglasso, lv.label, m, 0}).at(s);
        gl += ta.per_seed.at({pt::Algo::comp_sqrt_glasso, lv.label, m, 0}).at(s);
      }
    better += og < gl;
  }
  o.detail << " og<gl_almost_clique_seeds=" << better << "/" << h.seeds.size();
  if (!sign_test(better, static_cast<int>(h.seeds.size()))) o.fail("oglasso not better on almost-clique data");
  return o;
}

Outcome criterion7() {
  Outcome o;
  pt::ExperimentGrid g;
  g.levels = {{"7.2%", 0.072, 2.3534}};
  g.m_values = {375};
  g.algos = {pt::Algo::ct};
  g.seeds = seeds_1_to(10);
  g.p_excluded = {0.0, 0.1, 0.5, 0.75, 1.0};
  const auto r = pt::ExperimentRunner(g, progress).run();
  if (r.failed_cells() > 0) o.fail(std::to_string(r.failed_cells()) + " failed cells");
  const auto t = totals_of(r);
  std::vector<double> tot;
  for (double p : g.p_excluded) {
    tot.push_back(t.mean.at({pt::Algo::ct, "7.2%", 375, p}));
    o.detail << " p=" << p << ":" << tot.back();
  }
  o.detail << " |t(0.5)-t(0)|=" << std::abs(tot[2] - tot[0]);
  for (std::size_t i = 0; i + 1 < tot.size(); ++i)
    if (tot[i + 1] < tot[i]) o.fail("total error decreases between p_excluded cells " + std::to_string(i) + "," + std::to_string(i + 1));
  if (!(std::abs(tot[2] - tot[0]) <= 0.02)) o.fail("p_excluded=0.5 more than 0.02 from p_excluded=0");
  return o;
}

Outcome criterion8() {
  Outcome o;
  std::mt19937_64 rng(808);
  std::uniform_int_distribution<int> nv(1, 14);
  std::uniform_real_distribution<double> dens(0.1, 0.9), u(0, 1);
  int bk_bad = 0, cc_bad = 0;
  for (int t = 0; t < 200; ++t) {
    const int n = nv(rng);
    const double p = dens(rng);
    std::vector<std::pair<int, int>> e;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (u(rng) < p) e.emplace_back(a, b);
    const auto g = pt::Graph::from_edges(n, e);
    const auto bk = pt::bron_kerbosch(g);
    bk_bad += bk != oracle::maximal_cliques(g);
    cc_bad += pt::k_clique_communities(bk, 3) != oracle::clique_percolation(g, 3);
  }
  o.detail << " graphs=200 bron_kerbosch_mismatches=" << bk_bad << " community_mismatches=" << cc_bad;
  if (bk_bad) o.fail("maximal cliques differ");
  if (cc_bad) o.fail("3-clique communities differ");
  return o;
}

Outcome criterion9() {
  Outcome o;
  std::mt19937_64 rng(909);
  std::uniform_int_distribution<int> cnt(0, 60);
  double err = 0;
  for (int t = 0; t < 1000; ++t) {
    pt::Confusion c;
    c.tp = cnt(rng);
    c.fp = cnt(rng);
    c.tn = cnt(rng);
    c.fn = cnt(rng);
    if (c.tp + c.fp + c.tn + c.fn == 0) c.tn = 1;
    err = std::max(err, std::abs(pt::mcc(c) - oracle::correlation_mcc(c)));
  }
  o.detail << " mcc_max_err=" << err;
  if (!(err <= 1e-12)) o.fail("mcc differs from correlation");

  int curves = 0, bad = 0;
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> s(50);
    std::vector<std::uint8_t> y(50);
    for (std::size_t i = 0; i < s.size(); ++i) {
      y[i] = u(rng) < 0.3;
      s[i] = std::round(u(rng) * 10) / 10 + 0.3 * y[i];
    }
    ++curves;
    bad += !pt::roc_is_monotone(pt::roc_sweep(s, y));
  }
  pt::ExperimentGrid g;
  g.algos = {pt::Algo::ct, pt::Algo::family, pt::Algo::bernoulli};
  g.seeds = {1};
  g.day_stride = 5;
  const auto r = pt::ExperimentRunner(g, progress).run();
  for (const auto& c : r.cells) {
    ++curves;
    bad += !c.roc_monotone;
  }
  o.detail << " roc_curves=" << curves << " non_monotone=" << bad;
  if (bad) o.fail("non-monotone ROC curve");
  return o;
}

// Runs every CLI subcommand twice into separate trees and compares all CSVs.
Outcome criterion10(const std::string& cli) {
  Outcome o;
  const fs::path root = fs::current_path() / "acceptance10";
  fs::remove_all(root);
  const fs::path cfg = root / "grid.json";
  fs::create_directories(root);
  pt::write_json(cfg, pt::Json{{"levels", {{{"label", "3.98%"}, {"target", 0.0398}, {"alpha", 1.4967}}}},
                               {"m_values", {300}},
                               {"seeds", {1, 2}},
                               {"window_length", 15},
                               {"day_stride", 5},
                               {"algos", {"ct", "family", "comp", "comp-lasso", "comp-sqrt-glasso", "comp-sqrt-oglasso"}}});
  auto run_all = [&](const fs::path& d) {
    const std::string q = " > /dev/null 2>&1";
    const std::vector<std::string> cmds = {
        "--seed 17 --out " + (d / "sim").string() + " simulate --alpha 1.4967",
        "--out " + (d / "mat").string() + " design-matrix --m 300",
        "--seed 17 --out " + (d / "y1").string() + " measure --timeline " + (d / "sim").string() + " --matrix " +
            (d / "mat").string() + " --day 60 --model m1",
        "--seed 17 --out " + (d / "y2").string() + " measure --timeline " + (d / "sim").string() + " --matrix " +
            (d / "mat").string() + " --day 60 --model m2",
        "--seed 17 --out " + (d / "ct").string() + " decode --model m1 --algo ct --matrix " + (d / "mat").string() +
            " --measurement " + (d / "y1").string() + " --timeline " + (d / "sim").string() + " --day 60",
        "--seed 17 --out " + (d / "og").string() + " decode --model m2 --algo comp-sqrt-oglasso --rho 0.2 --matrix " +
            (d / "mat").string() + " --measurement " + (d / "y2").string() + " --timeline " + (d / "sim").string() +
            " --day 60",
        "--out " + (d / "met").string() + " metrics --posterior " + (d / "ct").string() + " --timeline " +
            (d / "sim").string() + " --day 60",
        "--seed 17 --config " + cfg.string() + " --out " + (d / "exp").string() + " experiment --quiet"};
    for (const auto& c : cmds) {
      const int rc = std::system((cli + " " + c + q).c_str());
      if (rc != 0) o.fail("exit status " + std::to_string(rc) + " for: " + c);
    }
  };
  run_all(root / "a");
  run_all(root / "b");
  int files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    ++files;
    const auto other = root / "b" / fs::relative(e.path(), root / "a");
    if (!fs::exists(other) || pt::read_text(e.path()) != pt::read_text(other)) {
      ++differ;
      o.fail("differs: " + fs::relative(e.path(), root / "a").string());
    }
  }
  o.detail << " csv_files=" << files << " differing=" << differ;
  if (files < 8) o.fail("expected at least 8 CSV outputs");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: pooltrace_acceptance N [cli]\n";
    return 2;
  }
  const int n = std::atoi(argv[1]);
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    switch (n) {
      case 1: o = criterion1(); break;
      case 2: o = criterion2(); break;
      case 3: o = criterion3(); break;
      case 4: o = criterion4(); break;
      case 5: o = criterion5(); break;
      case 6: o = criterion6(); break;
      case 7: o = criterion7(); break;
      case 8: o = criterion8(); break;
      case 9: o = criterion9(); break;
      case 10:
        if (argc < 3) {
          std::cerr << "criterion 10 needs the CLI path\n";
          return 2;
        }
        o = criterion10(argv[2]);
        break;
      default:
        std::cerr << "unknown criterion " << n << "\n";
        return 2;
    }
  } catch (const std::exception& e) {
    o.fail(std::string("exception: ") + e.what());
  }
  std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << o.detail.str() << " (" << seconds_since(t0)
            << " s)\n";
  return o.pass ? 0 : 1;
}
