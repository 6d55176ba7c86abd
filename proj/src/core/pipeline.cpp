#include "core/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <json.hpp>
#include <string>
#include <utility>

#include "core/correlation.hpp"
#include "core/decomposers.hpp"
#include "core/errors.hpp"

namespace modec::pipeline {

using nlohmann::json;

namespace {

namespace dec = decomposers;
namespace toy = toymodel;
namespace alloc = allocation;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Rerun a module with "layer N module:" prepended to any failure message.
template <typename F>
auto with_context(int layer, const char* module, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    std::string raw = e.what();
    std::string prefix = std::string(error_code_name(e.code())) + ": ";
    if (raw.rfind(prefix, 0) == 0) raw = raw.substr(prefix.size());
    fail(e.code(), "layer " + std::to_string(layer) + " " + module + ": " + raw);
  }
}

// Rank from a sparsity fraction with a floor of one column. Clamped plans can
// pin a block at sparsity exactly 1; the smallest admissible rank is kept
// there instead of emitting zero-width matrices.
int floored_rank(double sparsity, int dim) {
  int k = sparsity >= 1.0 ? 0 : static_cast<int>(std::ceil((1.0 - sparsity) * dim));
  return std::max(k, 1);
}

// Retained rotary dims in original head coordinates. `sel` indexes the
// current head; composing through any prior selection keeps pairs intact
// because pair members stay adjacent in the ascending retained list.
std::vector<int> compose_rope(const std::vector<int>& prior, const std::vector<int>& sel,
                              int head_width) {
  if (prior.empty() && static_cast<int>(sel.size()) == head_width) return {};
  if (prior.empty()) return sel;
  std::vector<int> out;
  out.reserve(sel.size());
  for (int i : sel) out.push_back(prior[static_cast<std::size_t>(i)]);
  return out;
}

toy::LayerWeights compress_layer(const toy::LayerWeights& w, const toy::ModelConfig& cfg,
                                 const correlation::LayerCorrelations& lc, double phi_mlp,
                                 double phi_mha, const RunConfig& rc, bool grouped, int layer_idx,
                                 LayerReport* rep) {
  toy::LayerWeights out;
  out.norm_attn = w.norm_attn;
  out.norm_mlp = w.norm_mlp;
  rep->sparsity_mlp = phi_mlp;
  rep->sparsity_mha = phi_mha;

  int d = cfg.d_hidden;
  int qk = w.qk_dim(cfg);
  int vo = w.vo_dim(cfg);
  int gs = cfg.group_size();

  // MLP pair: one shared channel selection across up/gate, closed-form down.
  Clock::time_point t_mlp = Clock::now();
  with_context(layer_idx, "mlp", [&] {
    Matrix stacked = toy::stack_up_gate(w);
    int k1 = floored_rank(phi_mlp, w.mlp_dim());
    dec::CompressedPair pair =
        dec::compress_type1(stacked, w.w_down, lc.mlp, phi_mlp, rc.lambda, nullptr, k1);
    toy::unstack_up_gate(pair.a, cfg.activation, &out.w_up, &out.w_gate);
    out.w_down = pair.b;
    rep->mlp.rank_k = pair.rank_k;
    rep->mlp.modular_error = pair.modular_error;
    rep->mlp.error_bound = pair.error_bound;
  });
  if (rc.timings) rep->mlp.seconds = seconds_since(t_mlp);

  // Key-query pair: shared rotary-pair selection per head (or kv group).
  Clock::time_point t_kq = Clock::now();
  with_context(layer_idx, "key_query", [&] {
    int k2 = floored_rank(phi_mha, qk);
    if (k2 % 2 != 0) ++k2;
    if (k2 > qk) k2 = qk;
    dec::KeyQueryOptions opt;
    opt.sparsity = phi_mha;
    opt.rotary_pairing = true;
    opt.rank_override = k2;

    out.w_q = Matrix(d, static_cast<long>(cfg.n_heads) * k2);
    out.w_k = Matrix(d, static_cast<long>(cfg.n_kv_heads) * k2);
    out.rope_indices.assign(static_cast<std::size_t>(cfg.n_kv_heads), {});
    double err = 0.0, bound = 0.0;
    for (int g = 0; g < cfg.n_kv_heads; ++g) {
      const std::vector<int> prior =
          w.rope_indices.empty() ? std::vector<int>{} : w.rope_indices[static_cast<std::size_t>(g)];
      Matrix wk_g = w.w_k.middleCols(static_cast<long>(g) * qk, qk);
      if (grouped) {
        std::vector<Matrix> wq_members;
        std::vector<correlation::CorrelationMatrix> cq_members;
        for (int j = 0; j < gs; ++j) {
          int h = g * gs + j;
          wq_members.push_back(w.w_q.middleCols(static_cast<long>(h) * qk, qk));
          cq_members.push_back(lc.query[static_cast<std::size_t>(h)]);
        }
        dec::GqaKeyQuery res =
            dec::compress_type2_gqa(wq_members, wk_g, cq_members, lc.key[static_cast<std::size_t>(g)], opt);
        for (int j = 0; j < gs; ++j)
          out.w_q.middleCols(static_cast<long>(g * gs + j) * k2, k2) = res.q[static_cast<std::size_t>(j)];
        out.w_k.middleCols(static_cast<long>(g) * k2, k2) = res.k;
        out.rope_indices[static_cast<std::size_t>(g)] =
            compose_rope(prior, res.selection.indices, qk);
        err += res.modular_error;
        bound += res.error_bound;
      } else {
        dec::CompressedPair res =
            dec::compress_type2(w.w_q.middleCols(static_cast<long>(g) * qk, qk), wk_g,
                                lc.query[static_cast<std::size_t>(g)],
                                lc.key[static_cast<std::size_t>(g)], opt);
        out.w_q.middleCols(static_cast<long>(g) * k2, k2) = res.a;
        out.w_k.middleCols(static_cast<long>(g) * k2, k2) = res.b;
        out.rope_indices[static_cast<std::size_t>(g)] =
            compose_rope(prior, res.selection->indices, qk);
        err += res.modular_error;
        bound += res.error_bound;
      }
    }
    bool any_indices = false;
    for (const std::vector<int>& idx : out.rope_indices)
      if (!idx.empty()) any_indices = true;
    if (!any_indices) out.rope_indices.clear();
    rep->key_query.rank_k = k2;
    rep->key_query.modular_error = err;
    rep->key_query.error_bound = bound;
  });
  if (rc.timings) rep->key_query.seconds = seconds_since(t_kq);

  // Value-output pair: rank-k factorization per head (or kv group).
  Clock::time_point t_vo = Clock::now();
  with_context(layer_idx, "value_output", [&] {
    int k3 = floored_rank(phi_mha, vo);
    out.w_v = Matrix(d, static_cast<long>(cfg.n_kv_heads) * k3);
    out.w_o = Matrix(static_cast<long>(cfg.n_heads) * k3, d);
    double err = 0.0, bound = 0.0;
    for (int g = 0; g < cfg.n_kv_heads; ++g) {
      Matrix wv_g = w.w_v.middleCols(static_cast<long>(g) * vo, vo);
      if (grouped) {
        std::vector<Matrix> wo_members;
        for (int j = 0; j < gs; ++j) {
          int h = g * gs + j;
          wo_members.push_back(w.w_o.middleRows(static_cast<long>(h) * vo, vo));
        }
        dec::GqaValueOutput res = dec::compress_type3_gqa(wv_g, wo_members, lc.input, phi_mha,
                                                          dec::GqaBasis::SqrtWeighted, k3);
        out.w_v.middleCols(static_cast<long>(g) * k3, k3) = res.v;
        for (int j = 0; j < gs; ++j)
          out.w_o.middleRows(static_cast<long>(g * gs + j) * k3, k3) = res.o[static_cast<std::size_t>(j)];
        err += res.modular_error;
        bound += res.error_bound;
      } else {
        dec::CompressedPair res =
            dec::compress_type3(wv_g, w.w_o.middleRows(static_cast<long>(g) * vo, vo), lc.input,
                                phi_mha, k3);
        out.w_v.middleCols(static_cast<long>(g) * k3, k3) = res.a;
        out.w_o.middleRows(static_cast<long>(g) * k3, k3) = res.b;
        err += res.modular_error;
        bound += res.error_bound;
      }
    }
    rep->value_output.rank_k = k3;
    rep->value_output.modular_error = err;
    rep->value_output.error_bound = bound;
  });
  if (rc.timings) rep->value_output.seconds = seconds_since(t_vo);

  return out;
}

json module_report_json(const ModuleReport& m, bool timings) {
  json j;
  j["rank_k"] = m.rank_k;
  j["modular_error"] = m.modular_error;
  j["error_bound"] = m.error_bound;
  if (timings) j["seconds"] = m.seconds;
  return j;
}

}  // namespace

const char* alloc_mode_name(AllocMode mode) {
  switch (mode) {
    case AllocMode::Uniform: return "uniform";
    case AllocMode::Global: return "global";
    case AllocMode::Refined: return "refined";
  }
  return "unknown";
}

AllocMode alloc_mode_from_name(const std::string& name) {
  if (name == "uniform") return AllocMode::Uniform;
  if (name == "global") return AllocMode::Global;
  if (name == "refined") return AllocMode::Refined;
  fail(ErrorCode::BadConfig, "unknown allocation mode '" + name + "'");
}

void RunConfig::validate() const {
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    fail(ErrorCode::BadTarget, "sparsity must lie in [0, 1)");
  if (calib_n < 1 || calib_t < 1)
    fail(ErrorCode::BadConfig, "calibration needs at least one sample and one token");
  if (!(lambda > 0.0)) fail(ErrorCode::BadConfig, "lambda must be positive");
  if (!(epsilon > 0.0)) fail(ErrorCode::BadConfig, "epsilon must be positive");
  if (!(max_layer_sparsity > 0.0 && max_layer_sparsity <= 1.0))
    fail(ErrorCode::BadTarget, "max_layer_sparsity must lie in (0, 1]");
}

double output_mse(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  require_shape(a.size() == b.size(), "output sets differ in sample count");
  if (a.empty()) fail(ErrorCode::BadConfig, "output comparison needs at least one sample");
  double se = 0.0;
  long long n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    require_shape(a[i].rows() == b[i].rows() && a[i].cols() == b[i].cols(),
                  "output sample shapes differ");
    se += (a[i] - b[i]).squaredNorm();
    n += a[i].size();
  }
  return se / static_cast<double>(n);
}

double output_cosine(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  require_shape(a.size() == b.size(), "output sets differ in sample count");
  if (a.empty()) fail(ErrorCode::BadConfig, "output comparison needs at least one sample");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    require_shape(a[i].rows() == b[i].rows() && a[i].cols() == b[i].cols(),
                  "output sample shapes differ");
    double na = a[i].norm();
    double nb = b[i].norm();
    if (na == 0.0 && nb == 0.0)
      total += 1.0;
    else if (na == 0.0 || nb == 0.0)
      total += 0.0;
    else
      total += a[i].cwiseProduct(b[i]).sum() / (na * nb);
  }
  return total / static_cast<double>(a.size());
}

EvalResult evaluate(const toy::Model& original, const toy::Model& compressed,
                    const toy::CalibrationSet& calib) {
  original.config.validate();
  compressed.config.validate();
  require_shape(original.layers.size() == compressed.layers.size(),
                "models differ in layer count");
  require_shape(original.config.d_hidden == compressed.config.d_hidden,
                "models differ in hidden width");
  calib.validate(original.config.d_hidden);

  int n = calib.n();
  EvalResult result;
  result.layer_mse.resize(original.layers.size());

  // Per-layer comparison on the original model's layer inputs.
  std::vector<Matrix> cur = calib.samples;
  std::vector<Matrix> orig_out(static_cast<std::size_t>(n));
  std::vector<Matrix> comp_out(static_cast<std::size_t>(n));
  for (std::size_t l = 0; l < original.layers.size(); ++l) {
    for (int s = 0; s < n; ++s) {
      orig_out[static_cast<std::size_t>(s)] =
          toy::forward_layer(original.layers[l], cur[static_cast<std::size_t>(s)], original.config);
      comp_out[static_cast<std::size_t>(s)] =
          toy::forward_layer(compressed.layers[l], cur[static_cast<std::size_t>(s)],
                             compressed.config);
    }
    result.layer_mse[l] = output_mse(orig_out, comp_out);
    cur.swap(orig_out);
  }

  // End to end; `cur` already holds the original model's final outputs.
  std::vector<Matrix> comp_final(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s)
    comp_final[static_cast<std::size_t>(s)] =
        toy::forward_model(compressed, calib.samples[static_cast<std::size_t>(s)]);
  result.e2e_mse = output_mse(cur, comp_final);
  result.cosine = output_cosine(cur, comp_final);
  return result;
}

CompressionReport compress_model(const toy::Model& model, const RunConfig& cfg,
                                 toy::Model* compressed) {
  cfg.validate();
  model.config.validate();
  require_shape(model.layers.size() == static_cast<std::size_t>(model.config.n_layers),
                "model layer count != config");
  Clock::time_point t_start = Clock::now();

  CompressionReport report;
  report.config = cfg;
  int n_layers = model.config.n_layers;

  toy::CalibrationSet calib =
      toy::make_calibration(cfg.calib_n, cfg.calib_t, model.config.d_hidden, cfg.seed);
  int n_eval = cfg.calib_n / 4;  // held-out tail; everything when too few samples
  toy::CalibrationSet train, heldout;
  train.samples.assign(calib.samples.begin(), calib.samples.end() - n_eval);
  if (n_eval > 0)
    heldout.samples.assign(calib.samples.end() - n_eval, calib.samples.end());
  else
    heldout.samples = calib.samples;

  std::vector<toy::LayerTaps> taps = toy::capture_activations(model, train);

  // Per-layer sparsity targets.
  std::vector<double> phi_mlp(static_cast<std::size_t>(n_layers), cfg.sparsity);
  std::vector<double> phi_mha(static_cast<std::size_t>(n_layers), cfg.sparsity);
  if (cfg.sparsity > 0.0 && cfg.mode != AllocMode::Uniform) {
    alloc::SparsityPlan plan;
    if (cfg.mode == AllocMode::Global) {
      std::vector<double> scores;
      for (int l = 0; l < n_layers; ++l) {
        alloc::BiAccumulator acc;
        const toy::LayerTaps& t = taps[static_cast<std::size_t>(l)];
        for (std::size_t s = 0; s < t.layer_in.size(); ++s) acc.add(t.layer_in[s], t.layer_out[s]);
        scores.push_back(acc.score());
      }
      double eps = cfg.autotune_epsilon
                       ? alloc::autotune_epsilon(scores, cfg.sparsity, cfg.max_layer_sparsity).epsilon
                       : cfg.epsilon;
      plan = alloc::allocate(scores, cfg.sparsity, eps);
    } else {
      std::vector<double> scores_mlp, scores_mha;
      for (int l = 0; l < n_layers; ++l) {
        alloc::BiAccumulator mha, mlp;
        const toy::LayerTaps& t = taps[static_cast<std::size_t>(l)];
        for (std::size_t s = 0; s < t.layer_in.size(); ++s) {
          mha.add(t.layer_in[s], t.attn_state[s]);
          mlp.add(t.attn_state[s], t.layer_out[s]);
        }
        scores_mha.push_back(mha.score());
        scores_mlp.push_back(mlp.score());
      }
      double eps = cfg.autotune_epsilon
                       ? alloc::autotune_epsilon_refined(scores_mlp, scores_mha, cfg.sparsity,
                                                         cfg.max_layer_sparsity)
                             .epsilon
                       : cfg.epsilon;
      plan = alloc::allocate_refined(scores_mlp, scores_mha, cfg.sparsity, eps);
    }
    if (plan.epsilon_too_small) {
      if (!cfg.clamp)
        fail(ErrorCode::EpsilonTooSmall,
             "allocation pushed a sparsity above 1; raise epsilon or pass clamp");
      alloc::clamp_plan(plan);
    }
    for (int l = 0; l < n_layers; ++l) {
      if (cfg.mode == AllocMode::Global) {
        phi_mlp[static_cast<std::size_t>(l)] = plan.phi[static_cast<std::size_t>(l)];
        phi_mha[static_cast<std::size_t>(l)] = plan.phi[static_cast<std::size_t>(l)];
      } else {
        phi_mlp[static_cast<std::size_t>(l)] = plan.phi[static_cast<std::size_t>(l)];
        phi_mha[static_cast<std::size_t>(l)] = plan.phi[static_cast<std::size_t>(n_layers + l)];
      }
    }
    report.plan = std::move(plan);
  }

  bool grouped = model.config.n_kv_heads < model.config.n_heads || cfg.gqa;
  toy::Model comp;
  comp.config = model.config;
  comp.layers.resize(static_cast<std::size_t>(n_layers));
  report.layers.resize(static_cast<std::size_t>(n_layers));

  if (!cfg.propagate) {
    for (int l = 0; l < n_layers; ++l) {
      correlation::LayerCorrelations lc =
          correlation::build_layer_correlations(taps[static_cast<std::size_t>(l)], model.config);
      comp.layers[static_cast<std::size_t>(l)] = compress_layer(
          model.layers[static_cast<std::size_t>(l)], model.config, lc,
          phi_mlp[static_cast<std::size_t>(l)], phi_mha[static_cast<std::size_t>(l)], cfg, grouped,
          l, &report.layers[static_cast<std::size_t>(l)]);
    }
  } else {
    // Sequential variant: tap each original layer on the stream that already
    // passed through the compressed layers below it.
    std::vector<Matrix> streams = train.samples;
    for (int l = 0; l < n_layers; ++l) {
      toy::LayerTaps drifted;
      for (Matrix& s : streams)
        toy::forward_layer(model.layers[static_cast<std::size_t>(l)], s, model.config, &drifted);
      correlation::LayerCorrelations lc =
          correlation::build_layer_correlations(drifted, model.config);
      comp.layers[static_cast<std::size_t>(l)] = compress_layer(
          model.layers[static_cast<std::size_t>(l)], model.config, lc,
          phi_mlp[static_cast<std::size_t>(l)], phi_mha[static_cast<std::size_t>(l)], cfg, grouped,
          l, &report.layers[static_cast<std::size_t>(l)]);
      for (Matrix& s : streams)
        s = toy::forward_layer(comp.layers[static_cast<std::size_t>(l)], s, model.config);
    }
  }

  report.params_before = model.param_count();
  report.params_after = comp.param_count();
  report.realized_sparsity =
      1.0 - static_cast<double>(report.params_after) / static_cast<double>(report.params_before);
  report.eval = evaluate(model, comp, heldout);
  if (cfg.timings) report.total_seconds = seconds_since(t_start);

  if (compressed) *compressed = std::move(comp);
  return report;
}

std::string report_to_json(const CompressionReport& report) {
  json j;
  j["config"] = {{"sparsity", report.config.sparsity},
                 {"mode", alloc_mode_name(report.config.mode)},
                 {"epsilon", report.config.epsilon},
                 {"autotune_epsilon", report.config.autotune_epsilon},
                 {"max_layer_sparsity", report.config.max_layer_sparsity},
                 {"lambda", report.config.lambda},
                 {"seed", report.config.seed},
                 {"calib_n", report.config.calib_n},
                 {"calib_t", report.config.calib_t},
                 {"gqa", report.config.gqa},
                 {"clamp", report.config.clamp},
                 {"propagate", report.config.propagate},
                 {"timings", report.config.timings}};
  j["layers"] = json::array();
  for (const LayerReport& lr : report.layers) {
    json lj;
    lj["sparsity_mlp"] = lr.sparsity_mlp;
    lj["sparsity_mha"] = lr.sparsity_mha;
    lj["mlp"] = module_report_json(lr.mlp, report.config.timings);
    lj["key_query"] = module_report_json(lr.key_query, report.config.timings);
    lj["value_output"] = module_report_json(lr.value_output, report.config.timings);
    j["layers"].push_back(lj);
  }
  j["plan"] = report.plan.phi.empty() ? json(nullptr) : json::parse(plan_to_json(report.plan));
  j["eval"] = {{"layer_mse", report.eval.layer_mse},
               {"e2e_mse", report.eval.e2e_mse},
               {"cosine", report.eval.cosine}};
  j["params_before"] = report.params_before;
  j["params_after"] = report.params_after;
  j["realized_sparsity"] = report.realized_sparsity;
  if (report.config.timings) j["total_seconds"] = report.total_seconds;
  return j.dump(2) + "\n";
}

}  // namespace modec::pipeline
