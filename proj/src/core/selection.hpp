#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "core/matrix.hpp"

namespace modec {

// An ordered subset of column indices, equivalent to right-multiplying by the
// 0/1 selection matrix whose column j picks out indices[j].
struct ColumnSelection {
  std::vector<int> indices;  // strictly ascending, within [0, source_dim)
  int source_dim = 0;

  int k() const { return static_cast<int>(indices.size()); }

  void validate() const {
    require_shape(source_dim >= 0, "selection source_dim negative");
    int prev = -1;
    for (int idx : indices) {
      require_shape(idx > prev && idx < source_dim, "selection indices must be ascending and in range");
      prev = idx;
    }
  }

  // Dense 0/1 selection matrix (source_dim x k).
  Matrix as_matrix() const {
    Matrix s = Matrix::Zero(source_dim, k());
    for (int j = 0; j < k(); ++j) s(indices[j], j) = 1.0;
    return s;
  }

  // a * S: keep the selected columns.
  Matrix gather_cols(const Matrix& a) const {
    require_shape(a.cols() == source_dim, "gather_cols: column count mismatch");
    Matrix out(a.rows(), k());
    for (int j = 0; j < k(); ++j) out.col(j) = a.col(indices[j]);
    return out;
  }

  // S^T a: keep the selected rows.
  Matrix gather_rows(const Matrix& a) const {
    require_shape(a.rows() == source_dim, "gather_rows: row count mismatch");
    Matrix out(k(), a.cols());
    for (int j = 0; j < k(); ++j) out.row(j) = a.row(indices[j]);
    return out;
  }

  // S b: rows of b placed back at their source positions, zeros elsewhere.
  Matrix scatter_rows(const Matrix& b) const {
    require_shape(b.rows() == k(), "scatter_rows: row count mismatch");
    Matrix out = Matrix::Zero(source_dim, b.cols());
    for (int j = 0; j < k(); ++j) out.row(indices[j]) = b.row(j);
    return out;
  }

  // True when every retained index comes with its rotary partner (2j, 2j+1).
  bool pair_closed() const {
    std::vector<char> present(static_cast<std::size_t>(source_dim), 0);
    for (int idx : indices) present[static_cast<std::size_t>(idx)] = 1;
    for (int idx : indices)
      if (!present[static_cast<std::size_t>(idx ^ 1)]) return false;
    return true;
  }

  static ColumnSelection all(int dim) {
    ColumnSelection sel;
    sel.source_dim = dim;
    sel.indices.resize(static_cast<std::size_t>(dim));
    std::iota(sel.indices.begin(), sel.indices.end(), 0);
    return sel;
  }

  // Top-k by score, ties broken toward the lower index; result stored ascending.
  static ColumnSelection top_k(const Vector& scores, int k) {
    int dim = static_cast<int>(scores.size());
    if (k < 1) fail(ErrorCode::RankTooSmall, "selection rank must be at least 1");
    require_shape(k <= dim, "selection rank exceeds dimension");

    std::vector<int> order(static_cast<std::size_t>(dim));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return scores(i) > scores(j); });

    ColumnSelection sel;
    sel.source_dim = dim;
    sel.indices.assign(order.begin(), order.begin() + k);
    std::sort(sel.indices.begin(), sel.indices.end());
    return sel;
  }

  // Top-k with rotary pairs (2j, 2j+1) kept or dropped together. Pair scores
  // are the sums of the member scores; k counts columns and must be even.
  static ColumnSelection top_k_pairs(const Vector& scores, int k) {
    int dim = static_cast<int>(scores.size());
    require_shape(dim % 2 == 0, "paired selection requires an even dimension");
    if (k < 1) fail(ErrorCode::RankTooSmall, "selection rank must be at least 1");
    require_shape(k <= dim, "selection rank exceeds dimension");
    if (k % 2 != 0)
      fail(ErrorCode::OddRankWithPairing, "rank must be even when rotary pairs are kept whole");

    int pairs = dim / 2;
    Vector pair_scores(pairs);
    for (int j = 0; j < pairs; ++j) pair_scores(j) = scores(2 * j) + scores(2 * j + 1);

    ColumnSelection picked = top_k(pair_scores, k / 2);
    ColumnSelection sel;
    sel.source_dim = dim;
    for (int j : picked.indices) {
      sel.indices.push_back(2 * j);
      sel.indices.push_back(2 * j + 1);
    }
    return sel;
  }
};

}  // namespace modec
