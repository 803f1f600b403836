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


#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "pooltrace/graph_analysis.hpp"
#include "support/oracles.hpp"

namespace pt = pooltrace;

namespace {

using Sets = std::vector<std::vector<int>>;

pt::Graph graph(int n, std::vector<std::pair<int, int>> edges) { return pt::Graph::from_edges(n, edges); }

pt::Graph random_graph(int n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution e(p);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (e(rng)) edges.emplace_back(i, j);
  return pt::Graph::from_edges(n, edges);
}

// Connected components by repeated relabelling, vertices with edges only.
Sets components(const pt::Graph& g) {
  std::vector<int> label(static_cast<std::size_t>(g.n));
  std::iota(label.begin(), label.end(), 0);
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto [i, j] : g.edges()) {
      const int m = std::min(label[static_cast<std::size_t>(i)], label[static_cast<std::size_t>(j)]);
      for (int v : {i, j})
        if (label[static_cast<std::size_t>(v)] != m) {
          label[static_cast<std::size_t>(v)] = m;
          changed = true;
        }
    }
  }
  Sets out;
  for (int c = 0; c < g.n; ++c) {
    std::vector<int> comp;
    for (int v = 0; v < g.n; ++v)
      if (label[static_cast<std::size_t>(v)] == c && !g.adj[static_cast<std::size_t>(v)].empty()) comp.push_back(v);
    if (!comp.empty()) out.push_back(comp);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(BronKerbosch, SmallExamples) {
  EXPECT_EQ(pt::bron_kerbosch(graph(3, {{0, 1}, {1, 2}, {0, 2}})), (Sets{{0, 1, 2}}));
  EXPECT_EQ(pt::bron_kerbosch(graph(3, {{0, 1}, {1, 2}})), (Sets{{0, 1}, {1, 2}}));
  EXPECT_EQ(pt::bron_kerbosch(graph(4, {{0, 1}})), (Sets{{0, 1}, {2}, {3}}));
  EXPECT_EQ(pt::bron_kerbosch(graph(0, {})), Sets{});
}

TEST(BronKerbosch, MatchesExhaustiveEnumeration) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> size(1, 14);
  std::uniform_real_distribution<double> dens(0.1, 0.9);
  for (int t = 0; t < 200; ++t) {
    const auto g = random_graph(size(rng), dens(rng), rng);
    const auto bk = pt::bron_kerbosch(g);
    EXPECT_EQ(bk, oracle::maximal_cliques(g));
    for (std::size_t a = 0; a < bk.size(); ++a)
      for (std::size_t b = 0; b < bk.size(); ++b)
        if (a != b) { EXPECT_FALSE(std::includes(bk[b].begin(), bk[b].end(), bk[a].begin(), bk[a].end())); }
  }
}

TEST(CliqueCommunities, SharedEdgeVersusSharedVertex) {
  const auto edge = graph(4, {{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 3}});
  EXPECT_EQ(pt::k_clique_communities(pt::bron_kerbosch(edge), 3), (Sets{{0, 1, 2, 3}}));
  const auto vertex = graph(5, {{0, 1}, {0, 2}, {1, 2}, {2, 3}, {2, 4}, {3, 4}});
  EXPECT_EQ(pt::k_clique_communities(pt::bron_kerbosch(vertex), 3), (Sets{{0, 1, 2}, {2, 3, 4}}));
}

TEST(CliqueCommunities, MatchesPercolationOracle) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> size(3, 14);
  std::uniform_real_distribution<double> dens(0.2, 0.8);
  for (int t = 0; t < 200; ++t) {
    const auto g = random_graph(size(rng), dens(rng), rng);
    EXPECT_EQ(pt::k_clique_communities(pt::bron_kerbosch(g), 3), oracle::clique_percolation(g, 3));
  }
}

TEST(CliqueCommunities, KTwoGivesComponents) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto g = random_graph(12, 0.15, rng);
    EXPECT_EQ(pt::k_clique_communities(pt::bron_kerbosch(g), 2), components(g));
  }
}

TEST(CliqueCommunities, InvalidK) { EXPECT_THROW(pt::k_clique_communities({}, 1), pt::DomainError); }

TEST(DeriveGroups, DisjointFamilies) {
  const auto g = graph(7, {{0, 1}, {0, 2}, {1, 2}, {3, 4}});
  for (auto mode : {pt::GroupMode::maximal_cliques, pt::GroupMode::clique_communities}) {
    const auto groups = pt::derive_groups(g, mode);
    auto sorted = groups.groups;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (Sets{{0, 1, 2}, {3, 4}, {5}, {6}}));
    EXPECT_FALSE(groups.overlapping);
  }
}

TEST(DeriveGroups, CrossFamilyContactIsExtraGroup) {
  // Families {0,1,2} and {3,4,5} plus the contact 2-3.
  const auto g = graph(6, {{0, 1}, {0, 2}, {1, 2}, {3, 4}, {3, 5}, {4, 5}, {2, 3}});
  for (auto mode : {pt::GroupMode::maximal_cliques, pt::GroupMode::clique_communities}) {
    const auto groups = pt::derive_groups(g, mode);
    auto sorted = groups.groups;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (Sets{{0, 1, 2}, {2, 3}, {3, 4, 5}}));
    EXPECT_TRUE(groups.overlapping);
  }
}

TEST(DeriveGroups, CoversEveryVertex) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto g = random_graph(14, 0.3, rng);
    for (auto mode : {pt::GroupMode::maximal_cliques, pt::GroupMode::clique_communities}) {
      const auto groups = pt::derive_groups(g, mode);
      EXPECT_NO_THROW(groups.validate(g.n));
    }
    const auto part = pt::partition_groups(g);
    EXPECT_NO_THROW(part.validate(g.n));
    for (const auto& grp : part.groups)
      for (std::size_t a = 0; a < grp.size(); ++a)
        for (std::size_t b = a + 1; b < grp.size(); ++b) EXPECT_TRUE(g.has_edge(grp[a], grp[b]));
  }
}

TEST(DeriveGroups, AlmostCliqueFamiliesRecovered) {
  // Overlapping households with 5% of household edges dropped; single-day
  // household edges only, as in the grouping window without cross contacts.
  double recovered = 0;
  int families = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    pt::SimConfig c;
    c.graph_mode = pt::GraphMode::overlapping_almost_cliques;
    c.edge_drop_frac = 0.05;
    c.alpha = 0;
    c.t_max = 1;
    c.rng_seed = seed;
    const auto tl = pt::run_simulation(c);
    const auto g = pt::aggregate_contacts(c.n, tl.daily_graphs);
    const auto groups = pt::derive_groups(g, pt::GroupMode::clique_communities);
    for (const auto& h : tl.households) {
      if (h.size() < 3) continue;
      std::size_t best = 0;
      for (const auto& grp : groups.groups) {
        std::vector<int> common;
        std::set_intersection(h.begin(), h.end(), grp.begin(), grp.end(), std::back_inserter(common));
        best = std::max(best, common.size());
      }
      recovered += static_cast<double>(best) / static_cast<double>(h.size());
      ++families;
    }
  }
  EXPECT_GE(recovered / families, 0.9);
}

TEST(Graph, FromEdgesValidation) {
  EXPECT_THROW(graph(3, {{0, 5}}), pt::StructuralError);
  const auto g = graph(3, {{0, 1}, {1, 0}, {2, 2}});
  EXPECT_EQ(g.edges(), (std::vector<std::pair<int, int>>{{0, 1}}));
}
