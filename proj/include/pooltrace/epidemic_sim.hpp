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

// Stochastic epidemic on a dynamic contact graph.
//
// The population is partitioned (or, in overlapping mode, covered) by
// household cliques that stay fixed for the whole horizon. Every day a fresh
// set of random cross-household contacts is drawn. Each contact carries a
// duration tau (hours) and a proximity d. A node infected on day t0 is
// "infected" on days t0 .. t0+k1-1, "infectious" on t0+k1 .. t0+k2, infected
// again until t0+infection_days-1 and recovered afterwards. Recovery is
// absorbing.

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pooltrace/common.hpp"

namespace pooltrace {

enum class NodeState : std::uint8_t { susceptible = 0, infected = 1, infectious = 2, recovered = 3 };

inline const char* to_string(NodeState s) {
  switch (s) {
    case NodeState::susceptible: return "susceptible";
    case NodeState::infected: return "infected";
    case NodeState::infectious: return "infectious";
    case NodeState::recovered: return "recovered";
  }
  return "?";
}

enum class GraphMode { disjoint_cliques, overlapping_almost_cliques };

inline const char* to_string(GraphMode m) {
  return m == GraphMode::disjoint_cliques ? "disjoint-cliques" : "overlapping-almost-cliques";
}

/// Uniform ranges for the per-day contact attributes of one edge class.
struct ContactAttributeRanges {
  double tau_lo = 1.0;
  double tau_hi = 8.0;
  double d_lo = 0.5;
  double d_hi = 1.0;
};

/// Household-size distribution. probs[s-1] = Pr(size = s).
///
/// The default is a seven-bucket profile with mean about 4.6 persons, shaped
/// after published household-size tables for India (sizes >= 7 folded into
/// the last bucket).
inline std::vector<double> default_household_distribution() {
  return {0.037, 0.090, 0.130, 0.220, 0.200, 0.140, 0.183};
}

struct SimConfig {
  int n = 1000;
  int t_max = 250;
  int k1 = 3;
  int k2 = 7;
  int infection_days = 14;
  double p1 = 2e-4;
  double lambda0 = 4e-6;
  // Expected number of cross-household contacts per person per day; the
  // daily edge count is Poisson(alpha * n).
  double alpha = 0.05;
  double viral_load_max = 32768.0;
  std::vector<double> household_dist = default_household_distribution();
  GraphMode graph_mode = GraphMode::disjoint_cliques;
  double edge_drop_frac = 0.0;
  ContactAttributeRanges intra{1.0, 8.0, 0.5, 1.0};
  ContactAttributeRanges inter{0.1, 1.0, 0.1, 0.5};
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (n < 1) throw ConfigError("n must be >= 1");
    if (t_max < 1) throw ConfigError("t_max must be >= 1");
    if (!(k1 > 0 && k1 <= k2)) throw ConfigError("need 0 < k1 <= k2");
    if (infection_days <= k2) throw ConfigError("infection_days must exceed k2");
    if (!(p1 >= 0 && p1 <= 1)) throw ConfigError("p1 must lie in [0,1]");
    if (!(lambda0 > 0)) throw ConfigError("lambda0 must be > 0");
    if (!(alpha >= 0)) throw ConfigError("alpha must be >= 0");
    if (!(viral_load_max > 1)) throw ConfigError("viral_load_max must exceed 1");
    if (!(edge_drop_frac >= 0 && edge_drop_frac < 1)) throw ConfigError("edge_drop_frac must lie in [0,1)");
    validate_household_distribution(household_dist);
    for (const auto* r : {&intra, &inter}) {
      if (!(r->tau_lo > 0 && r->tau_lo <= r->tau_hi && r->d_lo > 0 && r->d_lo <= r->d_hi))
        throw ConfigError("contact attribute ranges must be positive and ordered");
    }
  }

  static void validate_household_distribution(std::span<const double> dist) {
    if (dist.empty()) throw ConfigError("household distribution has empty support");
    double total = 0;
    for (double p : dist) {
      if (!(p >= 0)) throw ConfigError("household distribution has negative mass");
      total += p;
    }
    if (!(total > 0)) throw ConfigError("household distribution has empty support");
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("household distribution must sum to 1");
  }
};

struct ContactEdge {
  int i = 0;  // i < j
  int j = 0;
  double tau = 0;
  double d = 0;

  friend bool operator==(const ContactEdge&, const ContactEdge&) = default;
};

struct NodeRecord {
  NodeState state = NodeState::susceptible;
  int infection_day = -1;  // first day the node shows as infected; -1 if never
  double viral_load = 0;

  friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
};

using PopulationState = std::vector<NodeRecord>;
using DayGraph = std::vector<ContactEdge>;

struct ContactTimeline {
  SimConfig config;
  std::vector<std::vector<int>> households;
  std::vector<DayGraph> daily_graphs;
  std::vector<PopulationState> daily_truth;

  int days() const { return static_cast<int>(daily_truth.size()); }

  int active_infections(int day) const {
    const auto& s = daily_truth.at(static_cast<std::size_t>(day));
    return static_cast<int>(std::count_if(s.begin(), s.end(), [](const NodeRecord& r) { return r.viral_load > 0; }));
  }

  std::vector<int> active_series() const {
    std::vector<int> out(daily_truth.size());
    for (int t = 0; t < days(); ++t) out[static_cast<std::size_t>(t)] = active_infections(t);
    return out;
  }

  std::vector<double> viral_loads(int day) const {
    const auto& s = daily_truth.at(static_cast<std::size_t>(day));
    std::vector<double> x(s.size());
    std::transform(s.begin(), s.end(), x.begin(), [](const NodeRecord& r) { return r.viral_load; });
    return x;
  }

  std::vector<std::uint8_t> infected_indicator(int day) const {
    const auto& s = daily_truth.at(static_cast<std::size_t>(day));
    std::vector<std::uint8_t> x(s.size());
    std::transform(s.begin(), s.end(), x.begin(), [](const NodeRecord& r) { return r.viral_load > 0 ? 1 : 0; });
    return x;
  }

  friend bool operator==(const ContactTimeline& a, const ContactTimeline& b) {
    return a.households == b.households && a.daily_graphs == b.daily_graphs && a.daily_truth == b.daily_truth;
  }
};

// ---------------------------------------------------------------------------
// Households

/// Draws household sizes i.i.d. from `dist` until all n nodes are covered.
/// Households are contiguous id ranges. In overlapping mode a non-trivial
/// household starts on the last node of the previous non-trivial household
/// with probability 1/2, so the two share exactly that node.
inline std::vector<std::vector<int>> sample_households(int n, std::span<const double> dist, GraphMode mode, Rng& rng) {
  if (n < 1) throw ConfigError("sample_households: n must be >= 1");
  SimConfig::validate_household_distribution(dist);
  std::discrete_distribution<int> size_dist(dist.begin(), dist.end());
  std::bernoulli_distribution coin(0.5);

  std::vector<std::vector<int>> households;
  int next = 0;
  while (next < n) {
    int size = size_dist(rng) + 1;
    int start = next;
    if (mode == GraphMode::overlapping_almost_cliques && size > 1 && !households.empty() &&
        households.back().size() > 1 && coin(rng)) {
      start = households.back().back();
    }
    int end = std::min(n, start + size);
    std::vector<int> members(static_cast<std::size_t>(end - start));
    std::iota(members.begin(), members.end(), start);
    next = end;
    households.push_back(std::move(members));
  }
  return households;
}

// ---------------------------------------------------------------------------
// Transmission

/// Probability that a susceptible contact gets infected by one infectious
/// neighbour during a contact of duration tau at proximity d.
inline double infection_probability(double viral_load, double d, double tau, double lambda0) {
  if (viral_load < 0 || d < 0 || tau < 0 || lambda0 < 0)
    throw DomainError("infection_probability: inputs must be nonnegative");
  return -std::expm1(-lambda0 * viral_load * d * tau);
}

inline double combined_infection_probability(std::span<const double> probs) {
  double escape = 1.0;
  for (double p : probs) {
    if (!(p >= 0 && p <= 1)) throw DomainError("combined_infection_probability: p outside [0,1]");
    escape *= 1.0 - p;
  }
  return 1.0 - escape;
}

/// State of a node that was first infected on `infection_day`, seen on `day`.
inline NodeState state_for_offset(int offset, const SimConfig& c) {
  if (offset < c.k1) return NodeState::infected;
  if (offset <= c.k2) return NodeState::infectious;
  if (offset < c.infection_days) return NodeState::infected;
  return NodeState::recovered;
}

/// Advances the population from `day` to `day + 1` using the contacts of
/// `day`. New infections show up as infected on day + 1.
inline PopulationState evolve_day(const PopulationState& state, int day, const DayGraph& graph, const SimConfig& config,
                                  Rng& rng) {
  const auto n = state.size();
  std::vector<double> escape(n, 1.0);
  for (const auto& e : graph) {
    if (e.i < 0 || e.j < 0 || static_cast<std::size_t>(e.i) >= n || static_cast<std::size_t>(e.j) >= n || e.i == e.j)
      throw StructuralError("evolve_day: contact references unknown node");
    const auto& a = state[static_cast<std::size_t>(e.i)];
    const auto& b = state[static_cast<std::size_t>(e.j)];
    if (a.state == NodeState::infectious && b.state == NodeState::susceptible)
      escape[static_cast<std::size_t>(e.j)] *= 1.0 - infection_probability(a.viral_load, e.d, e.tau, config.lambda0);
    if (b.state == NodeState::infectious && a.state == NodeState::susceptible)
      escape[static_cast<std::size_t>(e.i)] *= 1.0 - infection_probability(b.viral_load, e.d, e.tau, config.lambda0);
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> load(1.0, config.viral_load_max);
  PopulationState next = state;
  const int tomorrow = day + 1;
  for (std::size_t v = 0; v < n; ++v) {
    auto& rec = next[v];
    // Both draws happen for every node so the stream stays aligned across
    // runs that differ only in their contacts.
    const double u = unit(rng);
    const double vl = load(rng);
    if (rec.state == NodeState::susceptible) {
      const double p = 1.0 - escape[v] * (1.0 - config.p1);
      if (u < p) {
        rec.state = NodeState::infected;
        rec.infection_day = tomorrow;
        rec.viral_load = vl;
      }
      continue;
    }
    if (rec.state == NodeState::recovered) continue;
    rec.state = state_for_offset(tomorrow - rec.infection_day, config);
    if (rec.state == NodeState::recovered) rec.viral_load = 0;
  }
  return next;
}

// ---------------------------------------------------------------------------
// Contact graphs

namespace detail {

inline std::vector<std::pair<int, int>> household_edges(const std::vector<std::vector<int>>& households, int n,
                                                        double drop_frac, Rng& rng) {
  std::set<std::pair<int, int>> unique;
  for (const auto& h : households)
    for (std::size_t a = 0; a < h.size(); ++a)
      for (std::size_t b = a + 1; b < h.size(); ++b) unique.emplace(std::min(h[a], h[b]), std::max(h[a], h[b]));
  std::vector<std::pair<int, int>> edges(unique.begin(), unique.end());
  if (drop_frac > 0 && !edges.empty()) {
    const auto drop = static_cast<std::size_t>(std::llround(drop_frac * static_cast<double>(edges.size())));
    std::shuffle(edges.begin(), edges.end(), rng);
    edges.resize(edges.size() - std::min(drop, edges.size()));
    std::sort(edges.begin(), edges.end());
  }
  (void)n;
  return edges;
}

// Household ids of each node (one or two entries in overlapping mode).
inline std::vector<std::vector<int>> memberships(const std::vector<std::vector<int>>& households, int n) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(n));
  for (std::size_t h = 0; h < households.size(); ++h)
    for (int v : households[h]) out[static_cast<std::size_t>(v)].push_back(static_cast<int>(h));
  return out;
}

inline bool share_household(const std::vector<int>& a, const std::vector<int>& b) {
  for (int x : a)
    if (std::find(b.begin(), b.end(), x) != b.end()) return true;
  return false;
}

}  // namespace detail

/// Cross-household contacts are a thinned Poisson(kCandidateAlpha * n)
/// candidate stream, so the same seed at a larger alpha sees a superset of
/// the contacts at a smaller one. Above the cap the stream is used unthinned
/// at rate alpha.
inline constexpr double kCandidateAlpha = 4.0;

/// Builds one day's contact graph: every fixed household edge with fresh
/// attributes plus Poisson(alpha * n) random cross-household contacts.
inline DayGraph sample_day_graph(const std::vector<std::pair<int, int>>& household_edges,
                                 const std::vector<std::vector<int>>& membership, const SimConfig& c, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](const ContactAttributeRanges& r, int i, int j) {
    ContactEdge e;
    e.i = std::min(i, j);
    e.j = std::max(i, j);
    e.tau = r.tau_lo + (r.tau_hi - r.tau_lo) * unit(rng);
    e.d = r.d_lo + (r.d_hi - r.d_lo) * unit(rng);
    return e;
  };

  DayGraph g;
  g.reserve(household_edges.size() + static_cast<std::size_t>(c.alpha * c.n * 1.5) + 4);
  for (auto [i, j] : household_edges) g.push_back(draw(c.intra, i, j));

  if (c.alpha > 0 && c.n > 1) {
    const double rate = std::max(c.alpha, kCandidateAlpha);
    const double keep = c.alpha / rate;
    std::poisson_distribution<int> count_dist(rate * c.n);
    std::uniform_int_distribution<int> node(0, c.n - 1);
    const int target = count_dist(rng);
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(static_cast<std::size_t>(2 * target + 1));
    int placed = 0;
    int attempts = 0;
    while (placed < target && attempts < 50 * (target + 1)) {
      ++attempts;
      int i = node(rng);
      int j = node(rng);
      if (i == j) continue;
      if (detail::share_household(membership[static_cast<std::size_t>(i)], membership[static_cast<std::size_t>(j)]))
        continue;
      const auto key = (static_cast<std::uint64_t>(std::min(i, j)) << 32) | static_cast<std::uint32_t>(std::max(i, j));
      if (!seen.insert(key).second) continue;
      const auto e = draw(c.inter, i, j);
      ++placed;
      if (unit(rng) < keep) g.push_back(e);
    }
  }
  std::sort(g.begin(), g.end(), [](const ContactEdge& a, const ContactEdge& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  return g;
}

/// Runs the full horizon. daily_truth[0] is the all-susceptible start;
/// daily_truth[t + 1] follows from daily_truth[t] and daily_graphs[t].
inline ContactTimeline run_simulation(const SimConfig& config) {
  config.validate();
  // Separate streams per purpose and day: runs that share a seed but differ
  // in alpha keep the same households, candidate contacts and infection draws.
  Rng rng(derive_seed(config.rng_seed, hash_string("households")));
  ContactTimeline tl;
  tl.config = config;
  tl.households = sample_households(config.n, config.household_dist, config.graph_mode, rng);
  const double drop = config.graph_mode == GraphMode::overlapping_almost_cliques ? config.edge_drop_frac : 0.0;
  const auto hh_edges = detail::household_edges(tl.households, config.n, drop, rng);
  const auto membership = detail::memberships(tl.households, config.n);

  tl.daily_graphs.reserve(static_cast<std::size_t>(config.t_max));
  tl.daily_truth.reserve(static_cast<std::size_t>(config.t_max));
  tl.daily_truth.emplace_back(static_cast<std::size_t>(config.n));
  for (int t = 0; t < config.t_max; ++t) {
    const auto day = static_cast<std::uint64_t>(t);
    Rng contacts(derive_seed(config.rng_seed, hash_string("contacts"), day));
    tl.daily_graphs.push_back(sample_day_graph(hh_edges, membership, config, contacts));
    if (t + 1 < config.t_max) {
      Rng infections(derive_seed(config.rng_seed, hash_string("infections"), day));
      tl.daily_truth.push_back(evolve_day(tl.daily_truth.back(), t, tl.daily_graphs.back(), config, infections));
    }
  }
  return tl;
}

// ---------------------------------------------------------------------------
// Test window

struct DayRange {
  int first = 0;
  int last = 0;  // inclusive
  int length() const { return last - first + 1; }
  friend bool operator==(const DayRange&, const DayRange&) = default;
};

class NoPeakError : public Error {
 public:
  using Error::Error;
};

/// The `length`-day window from peak-24 to peak+25 around the earliest day
/// with maximal active infections, shifted to stay inside [0, days).
inline DayRange select_test_window(std::span<const int> active, int length = 50) {
  if (active.empty()) throw NoPeakError("select_test_window: empty series");
  if (static_cast<int>(active.size()) < length) throw NoPeakError("select_test_window: series shorter than window");
  const auto peak_it = std::max_element(active.begin(), active.end());
  if (*peak_it <= 0) throw NoPeakError("select_test_window: no infections in timeline");
  const int peak = static_cast<int>(peak_it - active.begin());
  int first = peak - (length / 2 - 1);
  first = std::max(first, 0);
  first = std::min(first, static_cast<int>(active.size()) - length);
  return {first, first + length - 1};
}

inline DayRange select_test_window(const ContactTimeline& tl, int length = 50) {
  const auto series = tl.active_series();
  return select_test_window(std::span<const int>(series), length);
}

/// Mean fraction of infected nodes over a day range.
inline double mean_sparsity(const ContactTimeline& tl, DayRange w) {
  double total = 0;
  for (int t = w.first; t <= w.last; ++t) total += tl.active_infections(t);
  return total / (static_cast<double>(w.length()) * tl.config.n);
}

/// Bisection on alpha so that the window sparsity averaged over `seeds`
/// matches `target`. Returns the calibrated alpha.
inline double calibrate_alpha(SimConfig base, double target, std::span<const std::uint64_t> seeds, double lo = 0.0,
                              double hi = 1.0, int iterations = 20) {
  auto sparsity_at = [&](double alpha) {
    double s = 0;
    for (auto seed : seeds) {
      base.alpha = alpha;
      base.rng_seed = seed;
      auto tl = run_simulation(base);
      try {
        s += mean_sparsity(tl, select_test_window(tl));
      } catch (const NoPeakError&) {
      }
    }
    return s / static_cast<double>(seeds.size());
  };
  for (int it = 0; it < iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    (sparsity_at(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace pooltrace
