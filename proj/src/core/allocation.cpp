#include "core/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include <json.hpp>

namespace modec::allocation {
namespace {

using nlohmann::json;

void require_scores(const std::vector<double>& scores) {
  if (scores.empty()) fail(ErrorCode::BadConfig, "allocation needs at least one score");
  for (double s : scores)
    if (!std::isfinite(s)) fail(ErrorCode::NonFinite, "allocation scores must be finite");
}

void require_targets(double phi_avg, double epsilon) {
  if (!(phi_avg > 0.0 && phi_avg < 1.0))
    fail(ErrorCode::BadTarget, "phi_avg must lie in (0, 1)");
  if (!(epsilon > 0.0)) fail(ErrorCode::BadConfig, "epsilon must be positive");
}

// Shared core: phi_j proportional to exp(-w_j s_j / epsilon), scaled so that
// sum_j w_j phi_j = phi_avg * sum_j w_j. Unit weights give the plain
// softmax allocator.
std::vector<double> weighted_phi(const std::vector<double>& scores,
                                 const std::vector<double>& weights, double phi_avg,
                                 double epsilon) {
  std::size_t n = scores.size();
  double t_max = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) t_max = std::max(t_max, -weights[j] * scores[j] / epsilon);

  std::vector<double> phi(n);
  double denom = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    phi[j] = std::exp(-weights[j] * scores[j] / epsilon - t_max);
    denom += weights[j] * phi[j];
  }

  double total_weight = 0.0;
  for (double w : weights) total_weight += w;
  double target = phi_avg * total_weight;
  for (double& p : phi) p *= target / denom;

  // One corrective rescale keeps the constraint at machine precision.
  double achieved = 0.0;
  for (std::size_t j = 0; j < n; ++j) achieved += weights[j] * phi[j];
  for (double& p : phi) p *= target / achieved;
  return phi;
}

bool any_above_one(const std::vector<double>& phi) {
  return std::any_of(phi.begin(), phi.end(), [](double p) { return p > 1.0; });
}

// Log-scale bisection of a temperature whose peak allocation decreases as the
// temperature grows. `spread` sets the bracket; exponents are the effective
// scores (weights folded in), so their spread drives concentration.
template <typename MaxPhiAt>
AutotuneResult tune_temperature(MaxPhiAt max_phi_at, double spread, double max_layer_sparsity) {
  AutotuneResult result;
  if (spread <= 0.0) {
    result.epsilon = 1.0;
    result.max_phi = max_phi_at(1.0);
    result.on_target = std::abs(result.max_phi - max_layer_sparsity) <= 0.02;
    return result;
  }
  double effective = std::min(max_layer_sparsity, 0.99);
  double log_lo = std::log(spread) - 20.0;  // concentrated limit
  double log_hi = std::log(spread) + 20.0;  // uniform limit
  if (max_phi_at(std::exp(log_lo)) < effective) {
    // Even full concentration cannot reach the requested peak.
    result.epsilon = std::exp(log_lo);
  } else {
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (log_lo + log_hi);
      if (max_phi_at(std::exp(mid)) > effective)
        log_lo = mid;
      else
        log_hi = mid;
    }
    result.epsilon = std::exp(0.5 * (log_lo + log_hi));
  }
  result.max_phi = max_phi_at(result.epsilon);
  result.on_target = std::abs(result.max_phi - max_layer_sparsity) <= 0.02;
  return result;
}

double score_spread(const std::vector<double>& effective_scores) {
  double lo = *std::min_element(effective_scores.begin(), effective_scores.end());
  double hi = *std::max_element(effective_scores.begin(), effective_scores.end());
  double spread = hi - lo;
  return spread <= 1e-15 * (1.0 + std::abs(hi)) ? 0.0 : spread;
}

}  // namespace

void BiAccumulator::add(const Matrix& x_in, const Matrix& x_out) {
  require_shape(x_in.rows() == x_out.rows() && x_in.cols() == x_out.cols(),
                "block influence inputs must match in shape");
  require_finite(x_in, "block influence input");
  require_finite(x_out, "block influence output");
  for (int r = 0; r < x_in.rows(); ++r) {
    double ni = x_in.row(r).norm();
    double no = x_out.row(r).norm();
    if (ni == 0.0 || no == 0.0) continue;
    double cosine = x_in.row(r).dot(x_out.row(r)) / (ni * no);
    cosine = std::clamp(cosine, -1.0, 1.0);
    acc += 1.0 - cosine;
    ++rows;
  }
}

double block_influence(const Matrix& x_in, const Matrix& x_out) {
  BiAccumulator bi;
  bi.add(x_in, x_out);
  return bi.score();
}

SparsityPlan allocate(const std::vector<double>& scores, double phi_avg, double epsilon) {
  require_scores(scores);
  require_targets(phi_avg, epsilon);

  SparsityPlan plan;
  plan.scores = scores;
  plan.epsilon = epsilon;
  plan.phi_avg = phi_avg;
  plan.phi = weighted_phi(scores, std::vector<double>(scores.size(), 1.0), phi_avg, epsilon);
  plan.epsilon_too_small = any_above_one(plan.phi);
  return plan;
}

SparsityPlan allocate_refined(const std::vector<double>& scores_mlp,
                              const std::vector<double>& scores_mha, double phi_avg,
                              double epsilon) {
  require_shape(scores_mlp.size() == scores_mha.size(),
                "refined allocation needs one mlp and one mha score per layer");
  require_scores(scores_mlp);
  require_scores(scores_mha);
  require_targets(phi_avg, epsilon);

  constexpr double w_mlp = 2.0, w_mha = 1.0;
  std::size_t layers = scores_mlp.size();
  SparsityPlan plan;
  plan.epsilon = epsilon;
  plan.phi_avg = phi_avg;
  plan.scores = scores_mlp;
  plan.scores.insert(plan.scores.end(), scores_mha.begin(), scores_mha.end());
  plan.weights.assign(layers, w_mlp);
  plan.weights.insert(plan.weights.end(), layers, w_mha);
  plan.phi = weighted_phi(plan.scores, plan.weights, phi_avg, epsilon);
  plan.epsilon_too_small = any_above_one(plan.phi);
  return plan;
}

void clamp_plan(SparsityPlan& plan) {
  std::size_t n = plan.phi.size();
  std::vector<double> w = plan.weights;
  if (w.empty()) w.assign(n, 1.0);
  double total_weight = 0.0;
  for (double x : w) total_weight += x;
  double target = plan.phi_avg * total_weight;

  std::vector<char> capped(n, 0);
  bool changed = false;
  for (;;) {
    bool overflow = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (!capped[j] && plan.phi[j] > 1.0) {
        plan.phi[j] = 1.0;
        capped[j] = 1;
        overflow = true;
      }
    }
    if (!overflow) break;
    changed = true;

    double capped_weight = 0.0, free_mass = 0.0, free_weight = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (capped[j]) {
        capped_weight += w[j];
      } else {
        free_mass += w[j] * plan.phi[j];
        free_weight += w[j];
      }
    }
    double remaining = target - capped_weight;
    if (free_weight == 0.0) {
      if (std::abs(remaining) > 1e-9)
        fail(ErrorCode::BadTarget, "sparsity target cannot be met with phi capped at 1");
      break;
    }
    if (free_mass > 0.0) {
      double scale = remaining / free_mass;
      for (std::size_t j = 0; j < n; ++j)
        if (!capped[j]) plan.phi[j] *= scale;
    } else {
      for (std::size_t j = 0; j < n; ++j)
        if (!capped[j]) plan.phi[j] = remaining / free_weight;
    }
  }
  if (changed) plan.clamped = true;
}

AutotuneResult autotune_epsilon(const std::vector<double>& scores, double phi_avg,
                                double max_layer_sparsity) {
  require_scores(scores);
  if (!(phi_avg > 0.0 && phi_avg < 1.0))
    fail(ErrorCode::BadTarget, "phi_avg must lie in (0, 1)");
  if (!(max_layer_sparsity > 0.0 && max_layer_sparsity <= 1.0))
    fail(ErrorCode::BadTarget, "max_layer_sparsity must lie in (0, 1]");

  std::vector<double> unit(scores.size(), 1.0);
  auto max_phi_at = [&](double eps) {
    std::vector<double> phi = weighted_phi(scores, unit, phi_avg, eps);
    return *std::max_element(phi.begin(), phi.end());
  };
  return tune_temperature(max_phi_at, score_spread(scores), max_layer_sparsity);
}

AutotuneResult autotune_epsilon_refined(const std::vector<double>& scores_mlp,
                                        const std::vector<double>& scores_mha, double phi_avg,
                                        double max_layer_sparsity) {
  require_shape(scores_mlp.size() == scores_mha.size(),
                "refined allocation needs one mlp and one mha score per layer");
  require_scores(scores_mlp);
  require_scores(scores_mha);
  if (!(phi_avg > 0.0 && phi_avg < 1.0))
    fail(ErrorCode::BadTarget, "phi_avg must lie in (0, 1)");
  if (!(max_layer_sparsity > 0.0 && max_layer_sparsity <= 1.0))
    fail(ErrorCode::BadTarget, "max_layer_sparsity must lie in (0, 1]");

  auto max_phi_at = [&](double eps) {
    SparsityPlan plan = allocate_refined(scores_mlp, scores_mha, phi_avg, eps);
    return *std::max_element(plan.phi.begin(), plan.phi.end());
  };
  std::vector<double> effective;
  for (double s : scores_mlp) effective.push_back(2.0 * s);
  for (double s : scores_mha) effective.push_back(s);
  return tune_temperature(max_phi_at, score_spread(effective), max_layer_sparsity);
}

std::string plan_to_json(const SparsityPlan& plan) {
  json j;
  j["clamped"] = plan.clamped;
  j["epsilon"] = plan.epsilon;
  j["epsilon_too_small"] = plan.epsilon_too_small;
  j["phi"] = plan.phi;
  j["phi_avg"] = plan.phi_avg;
  j["scores"] = plan.scores;
  j["weights"] = plan.weights;
  return j.dump(2) + "\n";
}

SparsityPlan plan_from_json(const std::string& text) {
  SparsityPlan plan;
  try {
    json j = json::parse(text);
    plan.phi = j.at("phi").get<std::vector<double>>();
    plan.scores = j.at("scores").get<std::vector<double>>();
    plan.weights = j.value("weights", std::vector<double>{});
    plan.epsilon = j.at("epsilon").get<double>();
    plan.phi_avg = j.at("phi_avg").get<double>();
    plan.epsilon_too_small = j.value("epsilon_too_small", false);
    plan.clamped = j.value("clamped", false);
  } catch (const json::exception& e) {
    fail(ErrorCode::IoError, std::string("could not parse sparsity plan: ") + e.what());
  }
  return plan;
}

}  // namespace modec::allocation
