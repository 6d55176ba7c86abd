#pragma once

#include <string>
#include <vector>

#include "core/matrix.hpp"

namespace modec::allocation {

// Running mean of (1 - cosine) between matching token rows of a block's
// input and output. Zero rows on either side are skipped.
struct BiAccumulator {
  double acc = 0.0;
  long long rows = 0;

  void add(const Matrix& x_in, const Matrix& x_out);
  double score() const { return rows > 0 ? acc / static_cast<double>(rows) : 0.0; }
};

// One-shot block influence score in [0, 2]; higher means the block changes
// the stream more and should be compressed less.
double block_influence(const Matrix& x_in, const Matrix& x_out);

// Per-unit sparsity fractions plus everything needed to reproduce them. For
// the refined allocator the layout is [mlp_0..mlp_{L-1}, mha_0..mha_{L-1}]
// with weights (2, .., 2, 1, .., 1); `weights` stays empty for the
// unweighted allocator.
struct SparsityPlan {
  std::vector<double> phi;
  std::vector<double> scores;
  std::vector<double> weights;
  double epsilon = 1.0;
  double phi_avg = 0.0;
  bool epsilon_too_small = false;  // some raw phi exceeded 1
  bool clamped = false;            // phi was capped at 1 and renormalized
};

// phi_i = n * phi_avg * softmax(-s / epsilon)_i; the mean of phi equals
// phi_avg. Plans where any phi exceeds 1 are flagged, not clamped.
SparsityPlan allocate(const std::vector<double>& scores, double phi_avg, double epsilon);

// Weighted variant with per-block weights w_mlp=2, w_mha=1:
// phi_j = 3L * phi_avg * exp(-w_j s_j / epsilon) / sum_l w_l exp(-w_l s_l / epsilon),
// which makes the weighted mean of phi equal phi_avg.
SparsityPlan allocate_refined(const std::vector<double>& scores_mlp,
                              const std::vector<double>& scores_mha, double phi_avg,
                              double epsilon);

// Cap entries at 1 and renormalize the remainder to keep the (weighted) mean
// on target. Opt-in: capping departs from the closed-form optimum.
void clamp_plan(SparsityPlan& plan);

struct AutotuneResult {
  double epsilon = 1.0;
  double max_phi = 0.0;
  bool on_target = false;  // max phi landed inside the +-0.02 band
};

// Bisect the temperature until the largest phi sits near max_layer_sparsity.
// Constant scores make every temperature equivalent; returns epsilon = 1.
AutotuneResult autotune_epsilon(const std::vector<double>& scores, double phi_avg,
                                double max_layer_sparsity = 0.8);

// Same search over the weighted per-block allocator.
AutotuneResult autotune_epsilon_refined(const std::vector<double>& scores_mlp,
                                        const std::vector<double>& scores_mha, double phi_avg,
                                        double max_layer_sparsity = 0.8);

std::string plan_to_json(const SparsityPlan& plan);
SparsityPlan plan_from_json(const std::string& text);

}  // namespace modec::allocation
