#include "core/decomposers.hpp"

#include <cmath>

#include "core/matkit.hpp"

namespace modec::decomposers {
namespace {

void require_sparsity(double sparsity) {
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    fail(ErrorCode::BadTarget, "sparsity must lie in [0, 1)");
}

int resolve_rank(double sparsity, int dim, int rank_override) {
  int k = rank_override >= 0 ? rank_override : rank_for_sparsity(sparsity, dim);
  if (k < 1) fail(ErrorCode::RankTooSmall, "compression rank fell below 1");
  require_shape(k <= dim, "compression rank exceeds dimension");
  return k;
}

// S^T C S for a subset of rows and columns.
Matrix gather_both(const Matrix& c, const ColumnSelection& sel) {
  Matrix out(sel.k(), sel.k());
  for (int i = 0; i < sel.k(); ++i)
    for (int j = 0; j < sel.k(); ++j)
      out(i, j) = c(sel.indices[static_cast<std::size_t>(i)],
                    sel.indices[static_cast<std::size_t>(j)]);
  return out;
}

double spectral_norm_sq(const Matrix& a) {
  matkit::Svd dec = matkit::svd(a);
  double s = dec.singular_values.size() > 0 ? dec.singular_values(0) : 0.0;
  return s * s;
}

// Whitened column-norm scores for one head: s_i = |CQ^(1/2)[:,i]| |CK^(1/2)[:,i]|.
Vector key_query_scores(const Matrix& cq12, const Matrix& ck12) {
  Vector s(cq12.cols());
  for (int i = 0; i < cq12.cols(); ++i) s(i) = cq12.col(i).norm() * ck12.col(i).norm();
  return s;
}

// |CK^(1/2) (I - S S^T) CQ^(1/2)|_F^2: zero the selected rows of CQ^(1/2).
double surrogate_error(const Matrix& ck12, const Matrix& cq12, const ColumnSelection& sel) {
  Matrix masked = cq12;
  for (int idx : sel.indices) masked.row(idx).setZero();
  return (ck12 * masked).squaredNorm();
}

// Bound on the surrogate error. The trace form ((d-k)/d)^2 tr(C_K) tr(C_Q)
// needs the unselected scores to average at or below the overall mean (always
// true for this head's own top-k). When a shared group selection breaks that
// premise the always-valid fallback (sum of unselected scores)^2 is used.
double surrogate_bound(const Vector& scores, const ColumnSelection& sel, double trace_k,
                       double trace_q) {
  int d = static_cast<int>(scores.size());
  int k = sel.k();
  if (k == d) return 0.0;
  std::vector<char> selected(static_cast<std::size_t>(d), 0);
  for (int idx : sel.indices) selected[static_cast<std::size_t>(idx)] = 1;
  double total = scores.sum();
  double unsel = 0.0;
  for (int i = 0; i < d; ++i)
    if (!selected[static_cast<std::size_t>(i)]) unsel += scores(i);
  double frac = static_cast<double>(d - k) / static_cast<double>(d);
  if (unsel * static_cast<double>(d) <= total * static_cast<double>(d - k) * (1.0 + 1e-12))
    return frac * frac * trace_k * trace_q;
  return unsel * unsel;
}

ColumnSelection select_top(const Vector& scores, int k, bool pairing) {
  return pairing ? ColumnSelection::top_k_pairs(scores, k) : ColumnSelection::top_k(scores, k);
}

}  // namespace

int rank_for_sparsity(double sparsity, int dim) {
  require_sparsity(sparsity);
  return static_cast<int>(std::ceil((1.0 - sparsity) * static_cast<double>(dim)));
}

Vector ridge_leverage_scores(const CorrelationMatrix& c, double lambda) {
  if (!(lambda > 0.0)) fail(ErrorCode::BadConfig, "ridge lambda must be positive");
  matkit::SymEig eig = matkit::sym_eig(c.sum);
  int d = c.dim();
  double lmax = d > 0 ? std::max(eig.eigenvalues(0), 0.0) : 0.0;
  if (d > 0 && eig.eigenvalues(d - 1) < -1e-10 * std::max(lmax, 1e-300))
    fail(ErrorCode::NotPsd, "ridge_leverage_scores: correlation is not PSD");

  Vector ratio(d);
  for (int i = 0; i < d; ++i) {
    double l = std::max(eig.eigenvalues(i), 0.0);
    ratio(i) = l / (l + lambda);
  }
  Vector scores(d);
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      double q = eig.eigenvectors(i, j);
      s += q * q * ratio(j);
    }
    scores(i) = s;
  }
  return scores;
}

Matrix nystrom_residual(const Matrix& c, const ColumnSelection& sel) {
  require_shape(c.rows() == c.cols() && c.rows() == sel.source_dim,
                "nystrom_residual: selection does not match matrix");
  Matrix cs = sel.gather_cols(c);                      // C S
  Matrix core = matkit::pinv(gather_both(c, sel));     // (S^T C S)^+
  return c - cs * core * cs.transpose();
}

CompressedPair compress_type1(const Matrix& w_u, const Matrix& w_down,
                              const CorrelationMatrix& c_sigma, double sparsity, double lambda,
                              MlpDiagnostics* diag, int rank_override) {
  int dim = c_sigma.dim();
  require_shape(w_u.cols() == dim, "compress_type1: up matrix width != correlation dim");
  require_shape(w_down.rows() == dim, "compress_type1: down matrix height != correlation dim");
  require_sparsity(rank_override >= 0 ? 0.0 : sparsity);
  int k = resolve_rank(sparsity, dim, rank_override);

  Vector scores = ridge_leverage_scores(c_sigma, lambda);
  ColumnSelection sel = ColumnSelection::top_k(scores, k);

  Matrix c_sel = gather_both(c_sigma.sum, sel);
  Matrix rhs = sel.gather_rows(c_sigma.sum * w_down);  // S^T C W_down
  Matrix b = matkit::pinv(c_sel) * rhs;

  CompressedPair out;
  out.a = sel.gather_cols(w_u);
  out.b = b;
  out.rank_k = k;
  out.selection = sel;

  // Exact modular error: |C^(1/2) (W_down - S b)|_F^2.
  Matrix c12 = matkit::psd_sqrt(c_sigma.sum);
  out.modular_error = (c12 * (w_down - sel.scatter_rows(b))).squaredNorm();

  matkit::SymEig eig = matkit::sym_eig(c_sigma.sum);
  double lmin = dim > 0 ? eig.eigenvalues(dim - 1) : 0.0;
  double tail_sq = 0.0;
  for (int i = k; i < dim; ++i) {
    double l = std::max(eig.eigenvalues(i), 0.0);
    tail_sq += l * l;
  }
  double eps = 0.0;
  {
    std::vector<char> selected(static_cast<std::size_t>(dim), 0);
    for (int idx : sel.indices) selected[static_cast<std::size_t>(idx)] = 1;
    for (int i = 0; i < dim; ++i)
      if (!selected[static_cast<std::size_t>(i)]) eps += scores(i);
  }

  double wd2 = spectral_norm_sq(w_down);
  if (eps < 1.0 && lmin > 0.0) {
    double ratio = eps * static_cast<double>(dim) / (static_cast<double>(k) * (1.0 - eps));
    out.error_bound = wd2 * (1.0 / lmin) * ratio * ratio * tail_sq;
  } else {
    out.error_bound = kInf;
  }

  if (diag) {
    diag->unselected_score_mass = eps;
    double e2_raw = nystrom_residual(c_sigma.sum, sel).squaredNorm();
    diag->bound_via_inverse_norm = lmin > 0.0 ? wd2 * (1.0 / lmin) * e2_raw : kInf;
    diag->bound_via_sqrt_residual = wd2 * nystrom_residual(c12, sel).squaredNorm();
  }
  return out;
}

CompressedPair compress_type2(const Matrix& w_q, const Matrix& w_k, const CorrelationMatrix& c_q,
                              const CorrelationMatrix& c_k, const KeyQueryOptions& opt) {
  int dim = c_q.dim();
  require_shape(c_k.dim() == dim, "compress_type2: query/key correlation dims differ");
  require_shape(w_q.cols() == dim && w_k.cols() == dim,
                "compress_type2: head width != correlation dim");
  require_shape(w_q.rows() == w_k.rows(), "compress_type2: projection heights differ");
  require_sparsity(opt.rank_override >= 0 ? 0.0 : opt.sparsity);
  int k = resolve_rank(opt.sparsity, dim, opt.rank_override);

  Matrix cq12 = matkit::psd_sqrt(c_q.sum);
  Matrix ck12 = matkit::psd_sqrt(c_k.sum);
  Vector scores = key_query_scores(cq12, ck12);
  ColumnSelection sel = select_top(scores, k, opt.rotary_pairing);

  CompressedPair out;
  out.a = sel.gather_cols(w_q);
  out.b = sel.gather_cols(w_k);
  out.rank_k = k;
  out.selection = sel;
  out.modular_error = surrogate_error(ck12, cq12, sel);
  out.error_bound = surrogate_bound(scores, sel, c_k.sum.trace(), c_q.sum.trace());
  return out;
}

GqaKeyQuery compress_type2_gqa(const std::vector<Matrix>& w_q_members, const Matrix& w_k_shared,
                               const std::vector<CorrelationMatrix>& c_q_members,
                               const CorrelationMatrix& c_k_shared, const KeyQueryOptions& opt) {
  require_shape(!w_q_members.empty() && w_q_members.size() == c_q_members.size(),
                "compress_type2_gqa: member lists are inconsistent");
  int dim = c_k_shared.dim();
  require_shape(w_k_shared.cols() == dim, "compress_type2_gqa: key width != correlation dim");
  require_sparsity(opt.rank_override >= 0 ? 0.0 : opt.sparsity);
  int k = resolve_rank(opt.sparsity, dim, opt.rank_override);

  Matrix ck12 = matkit::psd_sqrt(c_k_shared.sum);
  std::vector<Matrix> cq12_members;
  std::vector<Vector> member_scores;
  cq12_members.reserve(w_q_members.size());
  for (std::size_t h = 0; h < w_q_members.size(); ++h) {
    require_shape(w_q_members[h].cols() == dim && c_q_members[h].dim() == dim,
                  "compress_type2_gqa: member width != correlation dim");
    cq12_members.push_back(matkit::psd_sqrt(c_q_members[h].sum));
    member_scores.push_back(key_query_scores(cq12_members[h], ck12));
  }

  Vector group_scores(dim);
  for (int i = 0; i < dim; ++i) {
    double acc = 0.0;
    for (const Vector& s : member_scores) acc += s(i) * s(i);
    group_scores(i) = std::sqrt(acc);
  }
  ColumnSelection sel = select_top(group_scores, k, opt.rotary_pairing);

  GqaKeyQuery out;
  out.selection = sel;
  out.rank_k = k;
  out.k = sel.gather_cols(w_k_shared);
  double trace_k = c_k_shared.sum.trace();
  for (std::size_t h = 0; h < w_q_members.size(); ++h) {
    out.q.push_back(sel.gather_cols(w_q_members[h]));
    out.modular_error += surrogate_error(ck12, cq12_members[h], sel);
    out.error_bound +=
        surrogate_bound(member_scores[h], sel, trace_k, c_q_members[h].sum.trace());
  }
  return out;
}

CompressedPair compress_type3(const Matrix& w_v, const Matrix& w_o,
                              const CorrelationMatrix& c_input, double sparsity,
                              int rank_override) {
  int d = c_input.dim();
  int hd = static_cast<int>(w_v.cols());
  require_shape(w_v.rows() == d, "compress_type3: value matrix height != correlation dim");
  require_shape(w_o.rows() == hd, "compress_type3: output matrix height != value width");
  require_sparsity(rank_override >= 0 ? 0.0 : sparsity);
  int k = resolve_rank(sparsity, hd, rank_override);

  Matrix c12 = matkit::psd_sqrt(c_input.sum);
  Matrix c12_inv = matkit::psd_inv_sqrt(c_input.sum);

  matkit::Svd first = matkit::svd(c12 * w_v);
  Matrix second_input = first.singular_values.asDiagonal() * first.vt * w_o;
  matkit::Svd second = matkit::svd(second_input);

  CompressedPair out;
  out.rank_k = k;
  out.a = c12_inv * first.u * second.u.leftCols(k);
  out.b = Vector(second.singular_values.head(k)).asDiagonal() * second.vt.topRows(k);
  double tail = 0.0;
  for (int i = k; i < second.singular_values.size(); ++i)
    tail += second.singular_values(i) * second.singular_values(i);
  out.modular_error = tail;
  out.error_bound = tail;  // the two-stage SVD is optimal for this module
  return out;
}

GqaValueOutput compress_type3_gqa(const Matrix& w_v_shared, const std::vector<Matrix>& w_o_members,
                                  const CorrelationMatrix& c_input, double sparsity,
                                  GqaBasis basis, int rank_override) {
  require_shape(!w_o_members.empty(), "compress_type3_gqa: no member output matrices");
  int d = c_input.dim();
  int hd = static_cast<int>(w_v_shared.cols());
  require_shape(w_v_shared.rows() == d, "compress_type3_gqa: value height != correlation dim");
  for (const Matrix& w_o : w_o_members)
    require_shape(w_o.rows() == hd, "compress_type3_gqa: member output height != value width");
  require_sparsity(rank_override >= 0 ? 0.0 : sparsity);
  int k = resolve_rank(sparsity, hd, rank_override);

  Matrix c12 = matkit::psd_sqrt(c_input.sum);
  Matrix weighted = basis == GqaBasis::SqrtWeighted ? Matrix(c12 * w_v_shared)
                                                    : Matrix(c_input.sum * w_v_shared);
  matkit::Svd dec = matkit::svd(weighted);
  Matrix basis_k = dec.vt.topRows(k).transpose();  // hd x k

  GqaValueOutput out;
  out.rank_k = k;
  out.v = w_v_shared * basis_k;
  for (const Matrix& w_o : w_o_members) {
    out.o.push_back(basis_k.transpose() * w_o);
    out.modular_error +=
        (c12 * (w_v_shared * w_o - out.v * out.o.back())).squaredNorm();
  }
  out.error_bound = out.modular_error;
  return out;
}

}  // namespace modec::decomposers
