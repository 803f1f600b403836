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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "pooltrace/common.hpp"

namespace pooltrace {

struct Confusion {
  long long tp = 0, fp = 0, tn = 0, fn = 0;

  long long positives() const { return tp + fn; }
  long long negatives() const { return tn + fp; }

  /// FN / #positives; empty when there are no positives.
  std::optional<double> fnr() const {
    if (positives() == 0) return std::nullopt;
    return static_cast<double>(fn) / static_cast<double>(positives());
  }
  std::optional<double> fpr() const {
    if (negatives() == 0) return std::nullopt;
    return static_cast<double>(fp) / static_cast<double>(negatives());
  }
};

inline Confusion confusion(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> calls) {
  if (truth.size() != calls.size()) throw StructuralError("confusion: truth and calls differ in length");
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i]) (calls[i] ? c.tp : c.fn)++;
    else (calls[i] ? c.fp : c.tn)++;
  }
  return c;
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
inline double mcc(const Confusion& c) {
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den == 0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(den);
}

/// ||x - x_hat|| / ||x||; empty when x = 0.
inline std::optional<double> rrmse(std::span<const double> x, std::span<const double> x_hat) {
  if (x.size() != x_hat.size()) throw StructuralError("rrmse: length mismatch");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - x_hat[i]) * (x[i] - x_hat[i]);
    den += x[i] * x[i];
  }
  if (den == 0) return std::nullopt;
  return std::sqrt(num / den);
}

struct MetricsReport {
  Confusion counts;
  std::optional<double> fnr;
  std::optional<double> fpr;
  std::optional<double> rrmse;
  double mcc = 0;
  double threshold = std::numeric_limits<double>::quiet_NaN();
};

inline MetricsReport compute_metrics(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> calls,
                                     std::span<const double> loads = {}, std::span<const double> loads_est = {},
                                     double threshold = std::numeric_limits<double>::quiet_NaN()) {
  MetricsReport r;
  r.counts = confusion(truth, calls);
  r.fnr = r.counts.fnr();
  r.fpr = r.counts.fpr();
  r.mcc = mcc(r.counts);
  if (!loads_est.empty()) r.rrmse = rrmse(loads, loads_est);
  r.threshold = threshold;
  return r;
}

struct RocPoint {
  double threshold = 0;  // positive iff score >= threshold
  double fpr = 0;
  double fnr = 0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // thresholds decreasing
  std::size_t best = 0;          // index of the operating point
  bool degenerate = false;       // fewer than two distinct scores, or one class absent

  const RocPoint& operating_point() const { return points[best]; }
};

/// Sweeps thresholds over the distinct scores (plus +inf, where nothing is
/// called positive). The operating point minimizes FPR + FNR; ties go to the
/// lower threshold. A missing class contributes a zero rate.
inline RocCurve roc_sweep(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size()) throw StructuralError("roc_sweep: scores and truth differ in length");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (std::isnan(scores[i])) throw DomainError("roc_sweep: NaN score");
    order[i] = i;
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  long long pos = 0, neg = 0;
  for (auto t : truth) (t ? pos : neg)++;
  RocCurve c;
  auto rate = [](long long k, long long total) { return total ? static_cast<double>(k) / static_cast<double>(total) : 0.0; };
  long long tp = 0, fp = 0;
  c.points.push_back({std::numeric_limits<double>::infinity(), 0.0, rate(pos, pos)});
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (truth[order[i]] ? tp : fp)++;
      ++i;
    }
    c.points.push_back({s, rate(fp, neg), rate(pos - tp, pos)});
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < c.points.size(); ++k) {
    const double total = c.points[k].fpr + c.points[k].fnr;
    if (total <= best + 1e-12) {
      best = std::min(best, total);
      c.best = k;
    }
  }
  c.degenerate = c.points.size() <= 2 || pos == 0 || neg == 0;
  return c;
}

/// Checks the staircase shape: along decreasing thresholds FPR never drops
/// and FNR never rises.
inline bool roc_is_monotone(const RocCurve& c) {
  for (std::size_t k = 1; k < c.points.size(); ++k)
    if (c.points[k].fpr < c.points[k - 1].fpr || c.points[k].fnr > c.points[k - 1].fnr ||
        !(c.points[k].threshold < c.points[k - 1].threshold))
      return false;
  return true;
}

}  // namespace pooltrace
