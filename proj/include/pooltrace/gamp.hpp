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

// GAMP decoder for binary group testing.
//
// Sum-product GAMP with scalar variances. The output channel treats the pool
// load w as Gaussian N(k, theta) and the test as a two-level step in w:
//
//   Pr(y = 1 | w) = p_fp        for w < 1/2
//                 = 1 - p_fn    for w >= 1/2
//
// (w is an integer count of infected members, so 1/2 separates "empty pool"
// from "at least one positive"). Input denoisers see pseudodata
// v = x + N(0, Delta) and return Pr(X_i = 1 | v). Three priors are provided:
// i.i.d. Bernoulli, household ("family"), and a contact-tracing prior built
// from the trailing window of contacts.

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "pooltrace/common.hpp"
#include "pooltrace/epidemic_sim.hpp"
#include "pooltrace/measurement.hpp"

namespace pooltrace {

// ---------------------------------------------------------------------------
// Output channel

struct OutputMoments {
  double mean = 0;      // E[W | y, k, theta]
  double variance = 0;  // Var[W | y, k, theta]
  double h = 0;         // (mean - k) / theta
  double h_variance = 0;  // (1 - variance / theta) / theta
};

inline constexpr double kPoolThreshold = 0.5;

inline OutputMoments output_denoiser_binary(int y, double k, double theta, const M1Params& p) {
  if (!(theta > 0)) throw DomainError("output_denoiser_binary: theta must be positive");
  const double s = std::sqrt(theta);
  const double a = (kPoolThreshold - k) / s;
  // Likelihood on each side of the threshold.
  const double c0 = y ? p.p_fp : 1.0 - p.p_fp;
  const double c1 = y ? 1.0 - p.p_fn : p.p_fn;
  const double lphi = log_normal_pdf(a);
  const double lo = log_normal_cdf(a);    // log Pr(W < 1/2)
  const double hi = log_normal_cdf(-a);   // log Pr(W >= 1/2)
  const double lw0 = c0 > 0 ? std::log(c0) + lo : -INFINITY;
  const double lw1 = c1 > 0 ? std::log(c1) + hi : -INFINITY;
  const double lz = log_add_exp(lw0, lw1);
  const double w0 = std::exp(lw0 - lz);
  const double w1 = std::exp(lw1 - lz);

  // Truncated normal moments on each side.
  const double r0 = std::exp(lphi - lo);  // phi / Phi
  const double r1 = std::exp(lphi - hi);  // phi / (1 - Phi)
  const double m0 = k - s * r0;
  const double m1 = k + s * r1;
  const double v0 = std::max(0.0, theta * (1.0 - a * r0 - r0 * r0));
  const double v1 = std::max(0.0, theta * (1.0 + a * r1 - r1 * r1));

  OutputMoments out;
  out.mean = (w0 > 0 ? w0 * m0 : 0.0) + (w1 > 0 ? w1 * m1 : 0.0);
  double var = 0;
  if (w0 > 0) var += w0 * (v0 + (m0 - out.mean) * (m0 - out.mean));
  if (w1 > 0) var += w1 * (v1 + (m1 - out.mean) * (m1 - out.mean));
  out.variance = var;
  out.h = (out.mean - k) / theta;
  out.h_variance = (1.0 - var / theta) / theta;
  return out;
}

// ---------------------------------------------------------------------------
// Input denoisers

/// Pr(X = 1 | v) for X ~ Bernoulli(pi), v = X + N(0, delta).
inline double denoise_bernoulli(double v, double delta, double pi) {
  if (!(delta > 0)) throw DomainError("denoiser: Delta must be positive");
  if (!(pi >= 0 && pi <= 1)) throw DomainError("denoiser: prior must lie in [0,1]");
  if (pi == 0) return 0.0;
  if (pi == 1) return 1.0;
  return 1.0 / (1.0 + (1.0 / pi - 1.0) * std::exp(-(v - 0.5) / delta));
}

/// Same functional form with a per-individual prior.
inline double denoise_ct(double v, double delta, double prior) { return denoise_bernoulli(v, delta, prior); }

struct FamilyPrior {
  double pi_vf = 0.1;
  double pi_ind = 0.5;
};

/// Household denoiser. Members are i.i.d. Bernoulli(pi_ind) given that the
/// household is viral, all healthy otherwise; the 2^|F| pattern sum factorizes
/// into a product over members.
inline void denoise_family(std::span<const double> v, double delta, const FamilyPrior& prior, std::span<double> out) {
  if (!(delta > 0)) throw DomainError("denoise_family: Delta must be positive");
  if (v.empty()) throw DomainError("denoise_family: empty family");
  if (out.size() != v.size()) throw StructuralError("denoise_family: output size mismatch");
  if (prior.pi_vf <= 0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  // Log densities up to the shared Gaussian constant.
  double log_healthy = 0;
  double log_viral = 0;
  const double lpi = prior.pi_ind > 0 ? std::log(prior.pi_ind) : -INFINITY;
  const double lnot = prior.pi_ind < 1 ? std::log1p(-prior.pi_ind) : -INFINITY;
  for (double vi : v) {
    const double l0 = -vi * vi / (2 * delta);
    const double l1 = -(vi - 1) * (vi - 1) / (2 * delta);
    log_healthy += l0;
    log_viral += log_add_exp(lpi + l1, lnot + l0);
  }
  log_viral += std::log(prior.pi_vf);
  log_healthy += prior.pi_vf < 1 ? std::log1p(-prior.pi_vf) : -INFINITY;
  const double p_viral = std::exp(log_viral - log_add_exp(log_viral, log_healthy));
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = p_viral * denoise_bernoulli(v[i], delta, prior.pi_ind);
}

// ---------------------------------------------------------------------------
// Contact-tracing prior

inline double estimate_pairwise_infection(double tau, double d, double prior_i, double prior_j, double lambda,
                                          double epsilon) {
  const double psi = 1.0 - (1.0 - prior_i) * (1.0 - prior_j);
  return std::exp(-1.0 / (lambda * tau * d * psi + epsilon));
}

struct PairEstimate {
  int i = 0;
  int j = 0;
  double p_hat = 0;
};

/// Combines the last `si_window` days of pairwise estimates into per-node
/// priors 1 - prod_d prod_j (1 - p_hat_ij), floored at `floor`.
inline std::vector<double> ct_prior_update(int n, std::span<const std::vector<PairEstimate>> history, int si_window,
                                           double floor = 0.0) {
  if (si_window < 1) throw ConfigError("ct_prior_update: si_window must be >= 1");
  if (static_cast<int>(history.size()) < si_window)
    throw StructuralError("ct_prior_update: history covers " + std::to_string(history.size()) + " days, need " +
                          std::to_string(si_window));
  std::vector<double> log_escape(static_cast<std::size_t>(n), 0.0);
  for (std::size_t d = history.size() - static_cast<std::size_t>(si_window); d < history.size(); ++d)
    for (const auto& e : history[d]) {
      if (e.i < 0 || e.i >= n || e.j < 0 || e.j >= n) throw StructuralError("ct_prior_update: node id out of range");
      if (!(e.p_hat >= 0 && e.p_hat <= 1)) throw DomainError("ct_prior_update: p_hat outside [0,1]");
      const double l = std::log1p(-e.p_hat);
      log_escape[static_cast<std::size_t>(e.i)] += l;
      if (e.j != e.i) log_escape[static_cast<std::size_t>(e.j)] += l;
    }
  std::vector<double> prior(log_escape.size());
  for (std::size_t i = 0; i < prior.size(); ++i) prior[i] = std::max(floor, -std::expm1(log_escape[i]));
  return prior;
}

/// Floor that keeps contact-free individuals detectable: the chance of at
/// least one stray infection over the window.
inline double stray_prior_floor(double p1, int si_window) { return -std::expm1(si_window * std::log1p(-p1)); }

struct CtOptions {
  int si_window = 8;
  double epsilon = 1e-6;
  double floor = stray_prior_floor(2e-4, 8);
  double lambda_default = 0.2;
  double lambda_min = 1e-4;
  double lambda_max = 1e3;
};

/// Contacts of the trailing window with Psi already evaluated from the
/// estimates of each contact day. Priors are a function of lambda only.
class CtEvidence {
 public:
  struct Contact {
    int i = 0;
    int j = 0;
    double weight = 0;  // tau * d * Psi
  };

  CtEvidence() = default;
  CtEvidence(int n, std::vector<Contact> contacts, double epsilon, double floor)
      : n_(n), contacts_(std::move(contacts)), epsilon_(epsilon), floor_(floor) {
    if (!(epsilon > 0)) throw ConfigError("CtEvidence: epsilon must be positive");
    for (const auto& c : contacts_)
      if (c.i < 0 || c.i >= n || c.j < 0 || c.j >= n) throw StructuralError("CtEvidence: node id out of range");
  }

  int n() const { return n_; }
  const std::vector<Contact>& contacts() const { return contacts_; }
  double floor() const { return floor_; }

  /// True when no contact carries weight, i.e. the prior ignores lambda.
  bool flat() const {
    return std::none_of(contacts_.begin(), contacts_.end(), [](const Contact& c) { return c.weight > 0; });
  }

  void priors(double lambda, std::span<double> out) const {
    if (static_cast<int>(out.size()) != n_) throw StructuralError("CtEvidence: output size mismatch");
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& c : contacts_) {
      const double l = std::log1p(-std::exp(-1.0 / (lambda * c.weight + epsilon_)));
      out[static_cast<std::size_t>(c.i)] += l;
      if (c.j != c.i) out[static_cast<std::size_t>(c.j)] += l;
    }
    for (auto& o : out) o = std::max(floor_, -std::expm1(o));
  }

  std::vector<double> priors(double lambda) const {
    std::vector<double> out(static_cast<std::size_t>(n_));
    priors(lambda, out);
    return out;
  }

 private:
  int n_ = 0;
  std::vector<Contact> contacts_;
  double epsilon_ = 1e-6;
  double floor_ = 0;
};

/// Per-day contact records plus the infection estimates Pr(X=1) held for each
/// day; builds the evidence for a testing day from the preceding window.
class CtHistory {
 public:
  explicit CtHistory(int n) : n_(n) {}

  void set_day(int day, std::vector<ContactEdge> contacts, std::vector<double> estimates) {
    if (static_cast<int>(estimates.size()) != n_) throw StructuralError("CtHistory: estimate vector has wrong length");
    if (day < 0) throw StructuralError("CtHistory: negative day");
    if (static_cast<std::size_t>(day) >= days_.size()) days_.resize(static_cast<std::size_t>(day) + 1);
    days_[static_cast<std::size_t>(day)] = Day{true, std::move(contacts), std::move(estimates)};
  }

  void set_estimates(int day, std::vector<double> estimates) {
    if (!has_day(day)) throw StructuralError("CtHistory: day " + std::to_string(day) + " has no contacts recorded");
    if (static_cast<int>(estimates.size()) != n_) throw StructuralError("CtHistory: estimate vector has wrong length");
    days_[static_cast<std::size_t>(day)].estimates = std::move(estimates);
  }

  bool has_day(int day) const {
    return day >= 0 && static_cast<std::size_t>(day) < days_.size() && days_[static_cast<std::size_t>(day)].present;
  }

  /// Evidence for `day` from days day - si_window .. day - 1.
  CtEvidence evidence_for(int day, const CtOptions& opt) const {
    std::vector<CtEvidence::Contact> out;
    for (int d = day - opt.si_window; d < day; ++d) {
      if (!has_day(d)) throw StructuralError("CtHistory: missing day " + std::to_string(d) + " in SI window");
      const auto& rec = days_[static_cast<std::size_t>(d)];
      for (const auto& e : rec.contacts) {
        const double psi = 1.0 - (1.0 - rec.estimates[static_cast<std::size_t>(e.i)]) *
                                     (1.0 - rec.estimates[static_cast<std::size_t>(e.j)]);
        out.push_back({e.i, e.j, e.tau * e.d * psi});
      }
    }
    return CtEvidence(n_, std::move(out), opt.epsilon, opt.floor);
  }

  /// Explicit pairwise estimates for one recorded day.
  std::vector<PairEstimate> pair_estimates(int day, double lambda, double epsilon) const {
    if (!has_day(day)) throw StructuralError("CtHistory: missing day " + std::to_string(day));
    const auto& rec = days_[static_cast<std::size_t>(day)];
    std::vector<PairEstimate> out;
    out.reserve(rec.contacts.size());
    for (const auto& e : rec.contacts)
      out.push_back({e.i, e.j,
                     estimate_pairwise_infection(e.tau, e.d, rec.estimates[static_cast<std::size_t>(e.i)],
                                                 rec.estimates[static_cast<std::size_t>(e.j)], lambda, epsilon)});
    return out;
  }

 private:
  struct Day {
    bool present = false;
    std::vector<ContactEdge> contacts;
    std::vector<double> estimates;
  };
  int n_;
  std::vector<Day> days_;
};

struct LambdaEstimate {
  double lambda = 0;
  double log_likelihood = 0;
  bool flat = false;  // likelihood does not depend on lambda; default returned
};

/// Log-likelihood of pseudodata under the two-component mixture with
/// per-individual weights.
inline double mixture_log_likelihood(std::span<const double> v, double delta, std::span<const double> prior) {
  double ll = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double l1 = -(v[i] - 1) * (v[i] - 1) / (2 * delta);
    const double l0 = -v[i] * v[i] / (2 * delta);
    const double a = prior[i] > 0 ? std::log(prior[i]) + l1 : -INFINITY;
    const double b = prior[i] < 1 ? std::log1p(-prior[i]) + l0 : -INFINITY;
    ll += log_add_exp(a, b);
  }
  return ll - static_cast<double>(v.size()) * 0.5 * std::log(2 * std::numbers::pi * delta);
}

/// Plug-in ML estimate of lambda: coarse log grid, then golden-section
/// refinement around the best grid point.
inline LambdaEstimate estimate_lambda_ml(std::span<const double> v, double delta, const CtEvidence& ev,
                                         const CtOptions& opt, int grid_points = 25) {
  if (v.empty()) throw DomainError("estimate_lambda_ml: empty population");
  if (static_cast<int>(v.size()) != ev.n()) throw StructuralError("estimate_lambda_ml: size mismatch");
  std::vector<double> prior(v.size());
  auto ll_at = [&](double log_lambda) {
    ev.priors(std::exp(log_lambda), prior);
    return mixture_log_likelihood(v, delta, prior);
  };
  if (ev.flat()) return {opt.lambda_default, ll_at(std::log(opt.lambda_default)), true};
  const double lo = std::log(opt.lambda_min), hi = std::log(opt.lambda_max);
  const double step = (hi - lo) / (grid_points - 1);
  int best = 0;
  double best_ll = -INFINITY, worst_ll = INFINITY;
  for (int g = 0; g < grid_points; ++g) {
    const double ll = ll_at(lo + step * g);
    if (ll > best_ll) {
      best_ll = ll;
      best = g;
    }
    worst_ll = std::min(worst_ll, ll);
  }
  if (best_ll - worst_ll <= 1e-9 * std::max(1.0, std::abs(best_ll)))
    return {opt.lambda_default, ll_at(std::log(opt.lambda_default)), true};
  const double a = lo + step * std::max(0, best - 1);
  const double b = lo + step * std::min(grid_points - 1, best + 1);
  const double x = golden_section_max(ll_at, a, b, 1e-3);
  const double ll = ll_at(x);
  if (ll >= best_ll) return {std::exp(x), ll, false};
  return {std::exp(lo + step * best), best_ll, false};
}

// Denoiser objects consumed by run_gamp.
template <typename D>
concept InputDenoiser = requires(D& d, std::span<const double> v, double delta, std::span<double> out) {
  d.prior_mean(out);
  d.denoise(v, delta, out);
  d.reestimate(v, delta);
};

class BernoulliDenoiser {
 public:
  explicit BernoulliDenoiser(double pi, bool learn = true) : pi_(pi), learn_(learn) {
    if (!(pi >= 0 && pi <= 1)) throw ConfigError("BernoulliDenoiser: pi must lie in [0,1]");
  }
  double pi() const { return pi_; }

  void prior_mean(std::span<double> out) const { std::fill(out.begin(), out.end(), pi_); }
  void denoise(std::span<const double> v, double delta, std::span<double> out) const {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = denoise_bernoulli(v[i], delta, pi_);
  }
  void reestimate(std::span<const double> v, double delta) {
    if (!learn_) return;
    std::vector<double> prior(v.size());
    auto ll = [&](double logit_pi) {
      std::fill(prior.begin(), prior.end(), logistic(logit_pi));
      return mixture_log_likelihood(v, delta, prior);
    };
    pi_ = logistic(golden_section_max(ll, -12.0, 0.0, 1e-4));
  }

 private:
  double pi_;
  bool learn_;
};

class FamilyDenoiser {
 public:
  /// `families` must partition 0..n-1.
  FamilyDenoiser(int n, std::vector<std::vector<int>> families, FamilyPrior prior, bool learn = true)
      : families_(std::move(families)), prior_(prior), learn_(learn) {
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    for (const auto& f : families_) {
      if (f.empty()) throw StructuralError("FamilyDenoiser: empty family");
      for (int i : f) {
        if (i < 0 || i >= n) throw StructuralError("FamilyDenoiser: node id out of range");
        ++seen[static_cast<std::size_t>(i)];
      }
    }
    for (int c : seen)
      if (c != 1) throw StructuralError("FamilyDenoiser: families must partition the population");
  }

  const FamilyPrior& prior() const { return prior_; }

  void prior_mean(std::span<double> out) const { std::fill(out.begin(), out.end(), prior_.pi_vf * prior_.pi_ind); }

  void denoise(std::span<const double> v, double delta, std::span<double> out) const {
    std::vector<double> vf, of;
    for (const auto& f : families_) {
      vf.resize(f.size());
      of.resize(f.size());
      for (std::size_t t = 0; t < f.size(); ++t) vf[t] = v[static_cast<std::size_t>(f[t])];
      denoise_family(vf, delta, prior_, of);
      for (std::size_t t = 0; t < f.size(); ++t) out[static_cast<std::size_t>(f[t])] = of[t];
    }
  }

  double log_likelihood(std::span<const double> v, double delta, const FamilyPrior& p) const {
    double ll = 0;
    const double lpi = std::log(p.pi_ind), lnot = std::log1p(-p.pi_ind);
    for (const auto& f : families_) {
      double healthy = 0, viral = 0;
      for (int i : f) {
        const double vi = v[static_cast<std::size_t>(i)];
        const double l0 = -vi * vi / (2 * delta);
        const double l1 = -(vi - 1) * (vi - 1) / (2 * delta);
        healthy += l0;
        viral += log_add_exp(lpi + l1, lnot + l0);
      }
      ll += log_add_exp(std::log(p.pi_vf) + viral, std::log1p(-p.pi_vf) + healthy);
    }
    return ll;
  }

  // Grid search over (pi_vf, pi_ind).
  void reestimate(std::span<const double> v, double delta) {
    if (!learn_) return;
    constexpr int kVf = 24, kInd = 19;
    double best = -INFINITY;
    FamilyPrior arg = prior_;
    for (int a = 0; a < kVf; ++a) {
      const double vf = 0.005 * std::pow(0.6 / 0.005, a / double(kVf - 1));
      for (int b = 0; b < kInd; ++b) {
        const double ind = 0.05 + 0.05 * b;
        const double ll = log_likelihood(v, delta, {vf, ind});
        if (ll > best) {
          best = ll;
          arg = {vf, ind};
        }
      }
    }
    prior_ = arg;
  }

 private:
  std::vector<std::vector<int>> families_;
  FamilyPrior prior_;
  bool learn_;
};

class CtDenoiser {
 public:
  CtDenoiser(CtEvidence evidence, CtOptions opt, double lambda, bool learn = true)
      : evidence_(std::move(evidence)), opt_(opt), lambda_(lambda), learn_(learn) {
    priors_ = evidence_.priors(lambda_);
  }

  double lambda() const { return lambda_; }
  bool flat() const { return flat_; }
  const std::vector<double>& priors() const { return priors_; }

  void prior_mean(std::span<double> out) const { std::copy(priors_.begin(), priors_.end(), out.begin()); }
  void denoise(std::span<const double> v, double delta, std::span<double> out) const {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = denoise_ct(v[i], delta, priors_[i]);
  }
  void reestimate(std::span<const double> v, double delta) {
    if (!learn_) return;
    const auto est = estimate_lambda_ml(v, delta, evidence_, opt_);
    flat_ = est.flat;
    lambda_ = est.lambda;
    priors_ = evidence_.priors(lambda_);
  }

 private:
  CtEvidence evidence_;
  CtOptions opt_;
  double lambda_;
  bool learn_;
  bool flat_ = false;
  std::vector<double> priors_;
};

// ---------------------------------------------------------------------------
// GAMP iteration

struct GampOptions {
  int max_iterations = 200;
  double tol = 1e-6;
  double damping = 0.7;  // weight kept from the previous iterate
  // Plug-in parameter re-estimation: first at `reestimate_warmup`, then every
  // `reestimate_every` iterations or whenever the iterate settles, at most
  // `max_reestimates` times.
  int reestimate_warmup = 10;
  int reestimate_every = 20;
  int max_reestimates = 2;
};

struct GampState {
  std::vector<double> v;      // pseudodata
  double delta = 0;           // pseudodata noise variance
  std::vector<double> k;      // output-channel means
  std::vector<double> theta;  // output-channel variances
  std::vector<double> h;      // output-channel scores
  std::vector<double> x_hat;  // posterior probabilities
  int iteration = 0;
  bool converged = false;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, GampState last) : Error(what), last_(std::move(last)) {}
  const GampState& last_state() const { return last_; }

 private:
  GampState last_;
};

namespace detail {
inline bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}
}  // namespace detail

/// Runs GAMP on binary tests y with pooling matrix a (Eigen dense or sparse).
template <typename Matrix, InputDenoiser D>
GampState run_gamp(const Matrix& a, std::span<const std::uint8_t> y, const M1Params& params, D& denoiser,
                   const GampOptions& opt = {}) {
  const auto m = static_cast<std::size_t>(a.rows());
  const auto n = static_cast<std::size_t>(a.cols());
  if (y.size() != m) throw StructuralError("run_gamp: y has " + std::to_string(y.size()) + " entries, A has " +
                                           std::to_string(m) + " rows");
  for (auto t : y)
    if (t > 1) throw DomainError("run_gamp: tests must be binary");
  params.validate();
  using Vec = Eigen::VectorXd;
  const Vec row_weight = a.cwiseAbs2() * Vec::Ones(static_cast<Eigen::Index>(n));

  GampState st;
  st.x_hat.assign(n, 0.0);
  denoiser.prior_mean(st.x_hat);
  st.v.assign(n, 0.5);
  st.k.assign(m, 0.0);
  st.theta.assign(m, 0.0);
  st.h.assign(m, 0.0);
  st.delta = 1.0;
  std::vector<double> h_var(m, 0.0), x_new(n, 0.0);
  GampState last_good = st;
  int reestimates = 0;
  bool settled = false;

  for (int it = 1; it <= opt.max_iterations; ++it) {
    // Output side.
    double mean_var = 0;
    for (double x : st.x_hat) mean_var += x * (1 - x);
    mean_var = std::max(mean_var / static_cast<double>(n), 1e-12);
    const Eigen::Map<const Vec> xm(st.x_hat.data(), static_cast<Eigen::Index>(n));
    const Vec ax = a * xm;
    for (std::size_t i = 0; i < m; ++i) {
      const double th = std::max(row_weight[static_cast<Eigen::Index>(i)] * mean_var, 1e-12);
      st.theta[i] = th;
      st.k[i] = ax[static_cast<Eigen::Index>(i)] - th * st.h[i];
      const auto mo = output_denoiser_binary(y[i], st.k[i], th, params);
      st.h[i] = (1 - opt.damping) * mo.h + opt.damping * st.h[i];
      h_var[i] = std::max(mo.h_variance, 0.0);
    }
    // Input side.
    double sum = 0;
    for (std::size_t i = 0; i < m; ++i) sum += row_weight[static_cast<Eigen::Index>(i)] * h_var[i];
    st.delta = std::clamp(static_cast<double>(n) / std::max(sum, 1e-300), 1e-10, 1e10);
    const Eigen::Map<const Vec> hm(st.h.data(), static_cast<Eigen::Index>(m));
    const Vec back = a.transpose() * hm;
    for (std::size_t j = 0; j < n; ++j) st.v[j] = st.x_hat[j] + st.delta * back[static_cast<Eigen::Index>(j)];

    const bool scheduled = it >= opt.reestimate_warmup && (it - opt.reestimate_warmup) % opt.reestimate_every == 0;
    if (reestimates < opt.max_reestimates && (scheduled || settled)) {
      denoiser.reestimate(st.v, st.delta);
      ++reestimates;
    }
    settled = false;
    denoiser.denoise(st.v, st.delta, x_new);

    double change = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double nx = (1 - opt.damping) * x_new[j] + opt.damping * st.x_hat[j];
      change = std::max(change, std::abs(nx - st.x_hat[j]));
      st.x_hat[j] = nx;
    }
    st.iteration = it;
    if (!std::isfinite(st.delta) || !detail::all_finite(st.x_hat) || !detail::all_finite(st.h))
      throw DivergenceError("run_gamp: non-finite state at iteration " + std::to_string(it), last_good);
    last_good = st;
    if (change < opt.tol) {
      if (reestimates >= opt.max_reestimates) {
        st.converged = true;
        break;
      }
      settled = true;
    }
  }
  return st;
}

}  // namespace pooltrace
