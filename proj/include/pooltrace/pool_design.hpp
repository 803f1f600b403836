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

// Balanced binary pooling designs built from arithmetic progressions.
//
// An m x n design with column weight k is split into k*n/m column groups of
// m/k consecutive columns. Every group covers each row exactly once and is a
// vertical stack of sub-blocks: a sub-block with common difference d spans
// k*d rows and d columns, and its c-th column has ones at rows
// offset + c, offset + c + d, ..., offset + c + (k-1)*d. Consecutive
// sub-blocks with the same difference inside a group form one block.
//
// Two columns share at most one pool iff no row pair is used twice, which is
// what the construction tracks. Using every difference value (and its
// multiples up to k-1) in at most one block is sufficient for that; when the
// search cannot satisfy this it falls back to reusing differences at row
// offsets that do not collide and flags the design as relaxed.

#pragma once

#include <Eigen/SparseCore>

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pooltrace/common.hpp"

namespace pooltrace {

class ConstructionError : public Error {
 public:
  using Error::Error;
};

struct DesignBlock {
  int group = 0;
  int column_begin = 0;  // [column_begin, column_end)
  int column_end = 0;
  int row_begin = 0;  // [row_begin, row_end)
  int row_end = 0;
  int difference = 0;

  friend bool operator==(const DesignBlock&, const DesignBlock&) = default;
};

/// Sparse binary m x n pooling matrix stored as sorted row lists per column
/// plus the transposed view.
struct PoolingMatrix {
  int m = 0;
  int n = 0;
  int k = 0;  // nominal column weight (0 when not from a construction)
  std::vector<std::vector<int>> column_rows;
  std::vector<std::vector<int>> row_columns;
  std::vector<DesignBlock> blocks;
  bool rule3_relaxed = false;

  PoolingMatrix() = default;

  PoolingMatrix(int rows, int cols, std::vector<std::vector<int>> columns) : m(rows), n(cols), column_rows(std::move(columns)) {
    if (static_cast<int>(column_rows.size()) != n) throw StructuralError("PoolingMatrix: column count mismatch");
    row_columns.assign(static_cast<std::size_t>(m), {});
    for (int j = 0; j < n; ++j) {
      auto& c = column_rows[static_cast<std::size_t>(j)];
      std::sort(c.begin(), c.end());
      for (int i : c) {
        if (i < 0 || i >= m) throw StructuralError("PoolingMatrix: row index out of range");
        row_columns[static_cast<std::size_t>(i)].push_back(j);
      }
    }
  }

  /// Builds from a dense 0/1 matrix given row by row. Any entry other than
  /// 0 or 1 is a validation error.
  static PoolingMatrix from_dense(const std::vector<std::vector<double>>& dense) {
    const int rows = static_cast<int>(dense.size());
    const int cols = rows ? static_cast<int>(dense.front().size()) : 0;
    std::vector<std::vector<int>> columns(static_cast<std::size_t>(cols));
    for (int i = 0; i < rows; ++i) {
      if (static_cast<int>(dense[static_cast<std::size_t>(i)].size()) != cols) throw StructuralError("from_dense: ragged rows");
      for (int j = 0; j < cols; ++j) {
        const double v = dense[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        if (v == 1.0) columns[static_cast<std::size_t>(j)].push_back(i);
        else if (v != 0.0) throw DomainError("from_dense: non-binary entry");
      }
    }
    return PoolingMatrix(rows, cols, std::move(columns));
  }

  int nnz() const {
    int s = 0;
    for (const auto& c : column_rows) s += static_cast<int>(c.size());
    return s;
  }

  template <typename T>
  std::vector<double> multiply(std::span<const T> x) const {
    if (static_cast<int>(x.size()) != n) throw StructuralError("PoolingMatrix::multiply: dimension mismatch");
    std::vector<double> w(static_cast<std::size_t>(m), 0.0);
    for (int j = 0; j < n; ++j) {
      const double v = static_cast<double>(x[static_cast<std::size_t>(j)]);
      if (v == 0) continue;
      for (int i : column_rows[static_cast<std::size_t>(j)]) w[static_cast<std::size_t>(i)] += v;
    }
    return w;
  }

  Eigen::SparseMatrix<double> to_sparse() const {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(nnz()));
    for (int j = 0; j < n; ++j)
      for (int i : column_rows[static_cast<std::size_t>(j)]) t.emplace_back(i, j, 1.0);
    Eigen::SparseMatrix<double> a(m, n);
    a.setFromTriplets(t.begin(), t.end());
    return a;
  }

  Eigen::MatrixXd to_dense() const { return Eigen::MatrixXd(to_sparse()); }

  /// Difference value of each block, in block order.
  std::vector<int> differences() const {
    std::vector<int> d;
    for (const auto& b : blocks) d.push_back(b.difference);
    return d;
  }
};

// ---------------------------------------------------------------------------

/// All pool counts m < n with m = k * n1, n1 | n, and enough row pairs for
/// every column's C(k,2) pairs to be distinct: C(k,2) * n <= m(m-1)/2.
inline std::vector<int> valid_pool_counts(int n, int k = 3) {
  if (n < 3) throw DomainError("valid_pool_counts: n must be >= 3");
  if (k < 2) throw DomainError("valid_pool_counts: k must be >= 2");
  std::vector<int> out;
  const long long pairs_needed = static_cast<long long>(k) * (k - 1) / 2 * n;
  for (int n1 = 1; n1 <= n; ++n1) {
    if (n % n1 != 0) continue;
    const long long m = static_cast<long long>(k) * n1;
    if (m >= n) break;
    if (pairs_needed <= m * (m - 1) / 2) out.push_back(static_cast<int>(m));
  }
  return out;
}

namespace detail {

class ApDesignSearch {
 public:
  ApDesignSearch(int m, int n, int k, long long node_budget, bool strict)
      : m_(m), n_(n), k_(k), groups_(k * n / m), strict_(strict), budget_(node_budget),
        pair_used_(static_cast<std::size_t>(m) * static_cast<std::size_t>(m), 0),
        multiple_uses_(static_cast<std::size_t>(k * m + 1), 0), tiling_(static_cast<std::size_t>(groups_)) {}

  struct SubBlock {
    int offset;
    int d;
  };

  bool run() { return tile(0, 0, 0); }

  const std::vector<std::vector<SubBlock>>& tiling() const { return tiling_; }
  long long nodes() const { return nodes_; }

  std::string partial_description() const {
    std::ostringstream os;
    os << "placed groups " << best_groups_ << "/" << groups_ << "; differences so far:";
    for (const auto& g : best_tiling_) {
      os << " [";
      int prev = -1;
      for (const auto& sb : g) {
        if (sb.d != prev) os << (prev < 0 ? "" : ",") << sb.d;
        prev = sb.d;
      }
      os << "]";
    }
    return os.str();
  }

 private:
  int width() const { return m_ / k_; }

  bool pairs_free(int offset, int d) const {
    for (int c = 0; c < d; ++c)
      for (int a = 0; a < k_; ++a)
        for (int b = a + 1; b < k_; ++b)
          if (pair_used_[idx(offset + c + a * d, offset + c + b * d)]) return false;
    return true;
  }

  void mark(int offset, int d, std::uint8_t v) {
    for (int c = 0; c < d; ++c)
      for (int a = 0; a < k_; ++a)
        for (int b = a + 1; b < k_; ++b) pair_used_[idx(offset + c + a * d, offset + c + b * d)] = v;
  }

  std::size_t idx(int lo, int hi) const { return static_cast<std::size_t>(lo) * static_cast<std::size_t>(m_) + static_cast<std::size_t>(hi); }

  bool fresh(int d) const {
    for (int r = 1; r < k_; ++r)
      if (multiple_uses_[static_cast<std::size_t>(r * d)] > 0) return false;
    return true;
  }

  void add_block(int d, int delta) {
    for (int r = 1; r < k_; ++r) multiple_uses_[static_cast<std::size_t>(r * d)] += delta;
  }

  std::vector<int> candidates(int offset, int prev) const {
    const int max_d = (m_ - offset) / k_;
    std::vector<int> out;
    auto push = [&](int d) {
      if (d < 1 || d > max_d) return;
      const int rest = m_ - offset - k_ * d;
      if (rest != 0 && rest < k_) return;
      if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(d);
    };
    if (prev > 0) push(prev);
    if (offset == 0) {
      for (int d = 1; d <= max_d; ++d)
        if (width() % d == 0 && fresh(d)) push(d);
    }
    for (int d = 1; d <= max_d; ++d)
      if (fresh(d)) push(d);
    if (!strict_)
      for (int d = 1; d <= max_d; ++d) push(d);
    return out;
  }

  bool tile(int group, int offset, int prev) {
    if (++nodes_ > budget_) return false;
    if (group == groups_) return true;
    if (offset == m_) {
      if (group + 1 > best_groups_) {
        best_groups_ = group + 1;
        best_tiling_.assign(tiling_.begin(), tiling_.begin() + group + 1);
      }
      return tile(group + 1, 0, 0);
    }
    for (int d : candidates(offset, prev)) {
      if (!pairs_free(offset, d)) continue;
      const bool new_block = d != prev;
      mark(offset, d, 1);
      if (new_block) add_block(d, +1);
      tiling_[static_cast<std::size_t>(group)].push_back({offset, d});
      if (tile(group, offset + k_ * d, d)) return true;
      tiling_[static_cast<std::size_t>(group)].pop_back();
      if (new_block) add_block(d, -1);
      mark(offset, d, 0);
      if (nodes_ > budget_) return false;
    }
    return false;
  }

  int m_, n_, k_, groups_;
  bool strict_;
  long long budget_;
  long long nodes_ = 0;
  std::vector<std::uint8_t> pair_used_;
  std::vector<int> multiple_uses_;
  std::vector<std::vector<SubBlock>> tiling_;
  int best_groups_ = 0;
  std::vector<std::vector<SubBlock>> best_tiling_;
};

}  // namespace detail

/// Constructs an m x n design with k ones per column (k = 3 gives Kirkman
/// triple matrices). Deterministic for fixed (m, n, k). The search first
/// insists on globally distinct difference multiples and only then allows
/// reuse at collision-free offsets.
inline PoolingMatrix kirkman_matrix(int m, int n, int k = 3, long long node_budget = 2'000'000) {
  const auto valid = valid_pool_counts(n, k);
  if (std::find(valid.begin(), valid.end(), m) == valid.end()) {
    std::ostringstream os;
    os << "kirkman_matrix: m=" << m << " is not a feasible pool count for n=" << n << ", k=" << k;
    throw ConstructionError(os.str());
  }
  detail::ApDesignSearch strict(m, n, k, node_budget / 4, true);
  detail::ApDesignSearch relaxed(m, n, k, node_budget, false);
  const bool strict_ok = strict.run();
  if (!strict_ok && !relaxed.run()) {
    throw ConstructionError("kirkman_matrix: failed to choose difference values for m=" + std::to_string(m) +
                            ", n=" + std::to_string(n) + "; " + relaxed.partial_description());
  }
  const auto& search = strict_ok ? strict : relaxed;

  const int width = m / k;
  std::vector<std::vector<int>> columns(static_cast<std::size_t>(n));
  std::vector<DesignBlock> blocks;
  std::map<int, int> block_uses;
  for (std::size_t g = 0; g < search.tiling().size(); ++g) {
    int col = static_cast<int>(g) * width;
    for (const auto& sb : search.tiling()[g]) {
      if (blocks.empty() || blocks.back().group != static_cast<int>(g) || blocks.back().difference != sb.d) {
        blocks.push_back({static_cast<int>(g), col, col, sb.offset, sb.offset, sb.d});
        for (int r = 1; r < k; ++r) ++block_uses[r * sb.d];
      }
      for (int c = 0; c < sb.d; ++c, ++col)
        for (int a = 0; a < k; ++a) columns[static_cast<std::size_t>(col)].push_back(sb.offset + c + a * sb.d);
      blocks.back().column_end = col;
      blocks.back().row_end = sb.offset + k * sb.d;
    }
  }
  PoolingMatrix a(m, n, std::move(columns));
  a.k = k;
  a.blocks = std::move(blocks);
  a.rule3_relaxed = std::any_of(block_uses.begin(), block_uses.end(), [](const auto& kv) { return kv.second > 1; });
  return a;
}

// ---------------------------------------------------------------------------

struct DesignReport {
  std::map<int, int> column_weight_histogram;  // weight -> #columns
  std::map<int, int> row_weight_histogram;     // weight -> #rows
  int max_column_dot = 0;
  bool column_weight_ok = false;
  bool row_weight_ok = false;
  bool dot_ok = false;
  bool block_decomposition_ok = false;
  int expected_column_weight = 0;
  bool passes() const { return column_weight_ok && row_weight_ok && dot_ok && block_decomposition_ok; }
};

/// Checks the design invariants: constant column weight k, constant row
/// weight k*n/m, pairwise column overlap <= 1 (exhaustive), and that the
/// columns split into k*n/m consecutive groups of m/k columns each covering
/// every row exactly once.
inline DesignReport verify_design(const PoolingMatrix& a, int k = 3) {
  DesignReport rep;
  rep.expected_column_weight = k;
  std::vector<int> row_weight(static_cast<std::size_t>(a.m), 0);
  for (const auto& c : a.column_rows) {
    ++rep.column_weight_histogram[static_cast<int>(c.size())];
    for (int i : c) ++row_weight[static_cast<std::size_t>(i)];
  }
  for (int w : row_weight) ++rep.row_weight_histogram[w];

  rep.column_weight_ok = rep.column_weight_histogram.size() == 1 && rep.column_weight_histogram.begin()->first == k;
  const bool divisible = a.m > 0 && (static_cast<long long>(k) * a.n) % a.m == 0;
  rep.row_weight_ok = divisible && rep.row_weight_histogram.size() == 1 &&
                      rep.row_weight_histogram.begin()->first == k * a.n / a.m;

  // Exhaustive pairwise overlap; rows lists are sorted.
  int max_dot = 0;
  for (int p = 0; p < a.n; ++p) {
    const auto& cp = a.column_rows[static_cast<std::size_t>(p)];
    for (int q = p + 1; q < a.n; ++q) {
      const auto& cq = a.column_rows[static_cast<std::size_t>(q)];
      int dot = 0;
      auto ip = cp.begin();
      auto iq = cq.begin();
      while (ip != cp.end() && iq != cq.end()) {
        if (*ip < *iq) ++ip;
        else if (*iq < *ip) ++iq;
        else { ++dot; ++ip; ++iq; }
      }
      max_dot = std::max(max_dot, dot);
    }
  }
  rep.max_column_dot = max_dot;
  rep.dot_ok = max_dot <= 1;

  rep.block_decomposition_ok = false;
  if (divisible && a.m % k == 0) {
    const int width = a.m / k;
    const int groups = k * a.n / a.m;
    bool ok = groups * width == a.n;
    std::vector<int> seen(static_cast<std::size_t>(a.m));
    for (int g = 0; ok && g < groups; ++g) {
      std::fill(seen.begin(), seen.end(), 0);
      for (int j = g * width; j < (g + 1) * width; ++j)
        for (int i : a.column_rows[static_cast<std::size_t>(j)]) ++seen[static_cast<std::size_t>(i)];
      ok = std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
    }
    rep.block_decomposition_ok = ok;
  }
  return rep;
}

}  // namespace pooltrace
