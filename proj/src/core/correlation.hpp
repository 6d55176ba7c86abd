#pragma once

#include <vector>

#include "core/matrix.hpp"
#include "core/toymodel.hpp"

namespace modec::correlation {

// Sum of Gram matrices A_i^T A_i over accumulated activation blocks (a sum,
// not a mean), kept symmetric after every update. All arithmetic is FP64.
struct CorrelationMatrix {
  Matrix sum;
  long long n_tokens = 0;

  CorrelationMatrix() = default;
  explicit CorrelationMatrix(int dim) : sum(Matrix::Zero(dim, dim)) {}

  int dim() const { return static_cast<int>(sum.rows()); }
};

void accumulate(CorrelationMatrix& corr, const Matrix& block);

// The four statistics one layer's compressors need, built from the capture
// taps: post-activation MLP states, per-head rotary query/key states, and the
// post-norm attention input.
struct LayerCorrelations {
  CorrelationMatrix mlp;                  // dim = mlp intermediate width
  std::vector<CorrelationMatrix> query;   // per query head, dim = head width
  std::vector<CorrelationMatrix> key;     // per kv head, dim = head width
  CorrelationMatrix input;                // dim = d_hidden
};

LayerCorrelations build_layer_correlations(const toymodel::LayerTaps& taps,
                                           const toymodel::ModelConfig& cfg);

}  // namespace modec::correlation
