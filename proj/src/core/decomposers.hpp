#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "core/correlation.hpp"
#include "core/matrix.hpp"
#include "core/selection.hpp"

namespace modec::decomposers {

using correlation::CorrelationMatrix;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Rank from a sparsity fraction: k = ceil((1 - sparsity) * dim).
int rank_for_sparsity(double sparsity, int dim);

struct CompressedPair {
  Matrix a;  // first compressed weight
  Matrix b;  // second compressed weight
  int rank_k = 0;
  std::optional<ColumnSelection> selection;
  double modular_error = 0.0;
  double error_bound = 0.0;
};

// Diagonal of C (C + lambda I)^-1, computed through the eigendecomposition.
Vector ridge_leverage_scores(const CorrelationMatrix& c, double lambda);

// Nystrom residual C - C S (S^T C S)^+ S^T C for a given selection.
Matrix nystrom_residual(const Matrix& c, const ColumnSelection& sel);

// Secondary bound forms reported for the MLP module (informational only).
struct MlpDiagnostics {
  double unselected_score_mass = 0.0;
  double bound_via_inverse_norm = kInf;   // |W_down|_2^2 |C^-1|_2 x squared Nystrom residual of C
  double bound_via_sqrt_residual = kInf;  // |W_down|_2^2 x squared Nystrom residual of C^(1/2)
};

// MLP pair: prune intermediate channels of the (stacked) up matrix by ridge
// leverage and rebuild the down matrix in closed form. w_u is d x dim or the
// vertically stacked [up; gate] (2d x dim); w_down is dim x d.
CompressedPair compress_type1(const Matrix& w_u, const Matrix& w_down,
                              const CorrelationMatrix& c_sigma, double sparsity, double lambda,
                              MlpDiagnostics* diag = nullptr, int rank_override = -1);

struct KeyQueryOptions {
  double sparsity = 0.0;
  bool rotary_pairing = true;  // keep (2j, 2j+1) rotary pairs whole; rank must be even
  int rank_override = -1;      // when >= 0, replaces the sparsity-derived rank
};

// Key-query pair for one head: shared column selection applied to both
// projections, scored by the product of whitened column norms.
CompressedPair compress_type2(const Matrix& w_q, const Matrix& w_k, const CorrelationMatrix& c_q,
                              const CorrelationMatrix& c_k, const KeyQueryOptions& opt);

struct GqaKeyQuery {
  std::vector<Matrix> q;  // per member head, W_Q S
  Matrix k;               // shared W_K S
  ColumnSelection selection;
  int rank_k = 0;
  double modular_error = 0.0;  // sum of member surrogate errors
  double error_bound = 0.0;    // sum of member bounds
};

// Grouped variant: one selection per kv group, scored by the root of the
// summed squared member scores, applied to the shared key and every member
// query. A group of size one reduces exactly to compress_type2.
GqaKeyQuery compress_type2_gqa(const std::vector<Matrix>& w_q_members, const Matrix& w_k_shared,
                               const std::vector<CorrelationMatrix>& c_q_members,
                               const CorrelationMatrix& c_k_shared, const KeyQueryOptions& opt);

// Value-output pair for one head via the two-stage SVD; the reported error is
// the trailing spectrum of the second factorization and is exact.
CompressedPair compress_type3(const Matrix& w_v, const Matrix& w_o,
                              const CorrelationMatrix& c_input, double sparsity,
                              int rank_override = -1);

enum class GqaBasis {
  SqrtWeighted,   // right-singular basis of C^(1/2) W_V (default)
  PlainWeighted,  // right-singular basis of C W_V
};

struct GqaValueOutput {
  Matrix v;               // shared W_V basis_k
  std::vector<Matrix> o;  // per member head, basis_k^T W_O
  int rank_k = 0;
  double modular_error = 0.0;  // exact weighted reconstruction error over members
  double error_bound = 0.0;    // measured, equal to modular_error (no closed-form claim)
};

// Grouped variant: a single rank-k projector in the value-head output space
// shared by the whole group; the output matrices are ignored when choosing it.
GqaValueOutput compress_type3_gqa(const Matrix& w_v_shared, const std::vector<Matrix>& w_o_members,
                                  const CorrelationMatrix& c_input, double sparsity,
                                  GqaBasis basis = GqaBasis::SqrtWeighted, int rank_override = -1);

}  // namespace modec::decomposers
