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

// Group structure from contact graphs: maximal cliques (Bron-Kerbosch with
// Tomita pivoting) and k-clique percolation communities.

#pragma once

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pooltrace/common.hpp"
#include "pooltrace/epidemic_sim.hpp"
#include "pooltrace/sparse_decoders.hpp"

namespace pooltrace {

/// Simple undirected graph with sorted adjacency lists.
struct Graph {
  int n = 0;
  std::vector<std::vector<int>> adj;

  static Graph from_edges(int n, std::span<const std::pair<int, int>> edges) {
    Graph g;
    g.n = n;
    g.adj.assign(static_cast<std::size_t>(n), {});
    for (auto [i, j] : edges) {
      if (i < 0 || i >= n || j < 0 || j >= n) throw StructuralError("Graph: vertex id out of range");
      if (i == j) continue;
      g.adj[static_cast<std::size_t>(i)].push_back(j);
      g.adj[static_cast<std::size_t>(j)].push_back(i);
    }
    for (auto& a : g.adj) {
      std::sort(a.begin(), a.end());
      a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    return g;
  }

  bool has_edge(int i, int j) const {
    const auto& a = adj[static_cast<std::size_t>(i)];
    return std::binary_search(a.begin(), a.end(), j);
  }

  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < n; ++i)
      for (int j : adj[static_cast<std::size_t>(i)])
        if (i < j) out.emplace_back(i, j);
    return out;
  }
};

/// Union of the contact edges of the given days.
inline Graph aggregate_contacts(int n, std::span<const DayGraph> days) {
  std::vector<std::pair<int, int>> edges;
  for (const auto& day : days)
    for (const auto& e : day) edges.emplace_back(e.i, e.j);
  return Graph::from_edges(n, edges);
}

namespace detail {

inline std::vector<int> intersect(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline void bk_pivot(const Graph& g, std::vector<int>& r, std::vector<int> p, std::vector<int> x,
                     std::vector<std::vector<int>>& out) {
  if (p.empty()) {
    if (x.empty()) {
      auto c = r;
      std::sort(c.begin(), c.end());
      out.push_back(std::move(c));
    }
    return;
  }
  // Pivot u maximizes |P ∩ N(u)| over P ∪ X.
  int pivot = -1;
  std::size_t best = 0;
  auto consider = [&](int u) {
    const auto& nu = g.adj[static_cast<std::size_t>(u)];
    std::size_t c = 0;
    auto pi = p.begin();
    auto ni = nu.begin();
    while (pi != p.end() && ni != nu.end()) {
      if (*pi < *ni) ++pi;
      else if (*ni < *pi) ++ni;
      else {
        ++c;
        ++pi;
        ++ni;
      }
    }
    if (pivot < 0 || c > best) {
      pivot = u;
      best = c;
    }
  };
  for (int u : p) consider(u);
  for (int u : x) consider(u);
  std::vector<int> candidates;
  const auto& np = g.adj[static_cast<std::size_t>(pivot)];
  std::set_difference(p.begin(), p.end(), np.begin(), np.end(), std::back_inserter(candidates));
  for (int v : candidates) {
    const auto& nv = g.adj[static_cast<std::size_t>(v)];
    r.push_back(v);
    bk_pivot(g, r, intersect(p, nv), intersect(x, nv), out);
    r.pop_back();
    p.erase(std::lower_bound(p.begin(), p.end(), v));
    x.insert(std::lower_bound(x.begin(), x.end(), v), v);
  }
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t a) {
    while (parent_[a] != a) a = parent_[a] = parent_[parent_[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

/// All maximal cliques, each sorted, in lexicographic order. Isolated
/// vertices come out as singletons.
inline std::vector<std::vector<int>> bron_kerbosch(const Graph& g) {
  std::vector<std::vector<int>> out;
  if (g.n == 0) return out;
  std::vector<int> r, p(static_cast<std::size_t>(g.n)), x;
  std::iota(p.begin(), p.end(), 0);
  detail::bk_pivot(g, r, std::move(p), std::move(x), out);
  std::sort(out.begin(), out.end());
  return out;
}

/// Clique percolation: maximal cliques of size >= k are linked when they
/// share at least k - 1 vertices; a community is the vertex union of a
/// connected component. Sorted output.
inline std::vector<std::vector<int>> k_clique_communities(const std::vector<std::vector<int>>& cliques, int k) {
  if (k < 2) throw DomainError("k_clique_communities: k must be >= 2");
  std::vector<const std::vector<int>*> big;
  int max_vertex = -1;
  for (const auto& c : cliques)
    if (static_cast<int>(c.size()) >= k) {
      big.push_back(&c);
      for (int v : c) max_vertex = std::max(max_vertex, v);
    }
  detail::DisjointSets ds(big.size());
  std::vector<std::vector<std::size_t>> by_vertex(static_cast<std::size_t>(max_vertex + 1));
  for (std::size_t c = 0; c < big.size(); ++c)
    for (int v : *big[c]) by_vertex[static_cast<std::size_t>(v)].push_back(c);
  for (std::size_t c = 0; c < big.size(); ++c) {
    std::vector<std::size_t> seen;
    for (int v : *big[c])
      for (std::size_t d : by_vertex[static_cast<std::size_t>(v)])
        if (d > c) seen.push_back(d);
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (std::size_t d : seen) {
      if (ds.find(c) == ds.find(d)) continue;
      if (static_cast<int>(detail::intersect(*big[c], *big[d]).size()) >= k - 1) ds.unite(c, d);
    }
  }
  std::vector<std::vector<int>> comm(big.size());
  for (std::size_t c = 0; c < big.size(); ++c) {
    auto& target = comm[ds.find(c)];
    target.insert(target.end(), big[c]->begin(), big[c]->end());
  }
  std::vector<std::vector<int>> out;
  for (auto& c : comm)
    if (!c.empty()) {
      std::sort(c.begin(), c.end());
      c.erase(std::unique(c.begin(), c.end()), c.end());
      out.push_back(std::move(c));
    }
  std::sort(out.begin(), out.end());
  return out;
}

enum class GroupMode { maximal_cliques, clique_communities };

inline const char* to_string(GroupMode m) {
  return m == GroupMode::maximal_cliques ? "maximal-cliques" : "3-clique-communities";
}

/// Groups for the group-sparse decoders. In community mode the groups are
/// the 3-clique communities plus every maximal clique not contained in one
/// of them (cross-household contacts, isolated vertices).
inline GroupStructure derive_groups(const Graph& g, GroupMode mode) {
  auto cliques = bron_kerbosch(g);
  GroupStructure out;
  if (mode == GroupMode::maximal_cliques) {
    out.groups = std::move(cliques);
  } else {
    out.groups = k_clique_communities(cliques, 3);
    std::vector<std::vector<int>> member_of(static_cast<std::size_t>(g.n));
    for (std::size_t c = 0; c < out.groups.size(); ++c)
      for (int v : out.groups[c]) member_of[static_cast<std::size_t>(v)].push_back(static_cast<int>(c));
    const std::size_t communities = out.groups.size();
    for (auto& q : cliques) {
      // Contained iff some community holds every vertex of q.
      auto cand = member_of[static_cast<std::size_t>(q.front())];
      for (std::size_t t = 1; t < q.size() && !cand.empty(); ++t)
        cand = detail::intersect(cand, member_of[static_cast<std::size_t>(q[t])]);
      if (cand.empty()) out.groups.push_back(std::move(q));
    }
    std::sort(out.groups.begin() + static_cast<std::ptrdiff_t>(communities), out.groups.end());
  }
  std::vector<int> count(static_cast<std::size_t>(g.n), 0);
  for (const auto& grp : out.groups)
    for (int v : grp) ++count[static_cast<std::size_t>(v)];
  out.overlapping = std::any_of(count.begin(), count.end(), [](int c) { return c > 1; });
  return out;
}

/// Disjoint cover for the non-overlapping group decoder: each vertex joins
/// the largest maximal clique containing it (lexicographically first on ties)
/// and groups are the resulting classes.
inline GroupStructure partition_groups(const Graph& g) {
  auto cliques = bron_kerbosch(g);
  std::stable_sort(cliques.begin(), cliques.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  std::vector<int> owner(static_cast<std::size_t>(g.n), -1);
  GroupStructure out;
  for (const auto& q : cliques) {
    std::vector<int> grp;
    for (int v : q)
      if (owner[static_cast<std::size_t>(v)] < 0) {
        owner[static_cast<std::size_t>(v)] = static_cast<int>(out.groups.size());
        grp.push_back(v);
      }
    if (!grp.empty()) out.groups.push_back(std::move(grp));
  }
  std::sort(out.groups.begin(), out.groups.end());
  return out;
}

}  // namespace pooltrace
