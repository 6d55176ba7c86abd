#include "modec.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <json.hpp>
#include <new>
#include <string>
#include <utility>
#include <vector>

#include "core/allocation.hpp"
#include "core/errors.hpp"
#include "core/model_io.hpp"
#include "core/pipeline.hpp"
#include "core/toymodel.hpp"

using nlohmann::json;

namespace toy = modec::toymodel;
namespace pl = modec::pipeline;
namespace alloc = modec::allocation;

struct modec_model {
  toy::Model impl;
};

namespace {

thread_local std::string g_last_error;

modec_status status_for(modec::ErrorCode code) {
  switch (code) {
    case modec::ErrorCode::BadConfig:
    case modec::ErrorCode::BadTarget:
    case modec::ErrorCode::EpsilonTooSmall:
    case modec::ErrorCode::TooLarge:
      return MODEC_ERR_CONFIG;
    case modec::ErrorCode::IoError:
      return MODEC_ERR_IO;
    case modec::ErrorCode::ShapeMismatch:
      return MODEC_ERR_SHAPE;
    case modec::ErrorCode::NonFinite:
    case modec::ErrorCode::NotPsd:
    case modec::ErrorCode::NonSymmetric:
    case modec::ErrorCode::RankTooSmall:
    case modec::ErrorCode::OddRankWithPairing:
    case modec::ErrorCode::PairViolation:
    case modec::ErrorCode::NonConvergence:
      return MODEC_ERR_NUMERIC;
  }
  return MODEC_ERR_INTERNAL;
}

// Runs the body, translating every failure into a status + thread-local
// message. Success clears the message.
template <typename F>
modec_status guard(F&& body) {
  g_last_error.clear();
  try {
    return body();
  } catch (const modec::Error& e) {
    g_last_error = e.what();
    return status_for(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MODEC_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MODEC_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return MODEC_ERR_INTERNAL;
  }
}

modec_status arg_error(const char* message) {
  g_last_error = message;
  return MODEC_ERR_ARG;
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<double> number_list(const json& j, const char* key) {
  if (!j.at(key).is_array()) modec::fail(modec::ErrorCode::BadConfig, std::string(key) + " must be an array");
  std::vector<double> out;
  for (const json& v : j.at(key)) out.push_back(v.get<double>());
  return out;
}

}  // namespace

extern "C" {

const char* modec_last_error(void) { return g_last_error.c_str(); }

void modec_string_free(char* s) { std::free(s); }

void modec_model_free(modec_model* model) { delete model; }

modec_status modec_model_load(const char* dir, modec_model** out_model) {
  if (!dir || !out_model) return arg_error("modec_model_load: null argument");
  return guard([&] {
    auto holder = new modec_model{toy::load_model(dir)};
    *out_model = holder;
    return MODEC_OK;
  });
}

modec_status modec_model_save(const modec_model* model, const char* dir) {
  if (!model || !dir) return arg_error("modec_model_save: null argument");
  return guard([&] {
    toy::save_model(dir, model->impl);
    return MODEC_OK;
  });
}

modec_status modec_model_param_count(const modec_model* model, long long* out_count) {
  if (!model || !out_count) return arg_error("modec_model_param_count: null argument");
  *out_count = model->impl.param_count();
  g_last_error.clear();
  return MODEC_OK;
}

modec_status modec_model_gen_toy(const modec_toy_params* params, modec_model** out_model) {
  if (!params || !out_model) return arg_error("modec_model_gen_toy: null argument");
  return guard([&] {
    toy::ModelConfig cfg;
    cfg.d_hidden = params->d_hidden;
    cfg.d_intermediate = params->d_intermediate;
    cfg.n_heads = params->n_heads;
    cfg.n_kv_heads = params->n_kv_heads;
    cfg.n_layers = params->n_layers;
    cfg.activation =
        toy::activation_from_name(params->activation ? params->activation : "silu_gated");
    double lo = params->gain_lo > 0.0 ? params->gain_lo : 1.0;
    double hi = params->gain_hi > 0.0 ? params->gain_hi : 1.0;
    auto holder = new modec_model{toy::make_toy_model(cfg, params->seed, lo, hi)};
    *out_model = holder;
    return MODEC_OK;
  });
}

modec_status modec_model_compress(const modec_model* model, const modec_compress_params* params,
                                  modec_model** out_model, char** out_report_json) {
  if (!model || !params) return arg_error("modec_model_compress: null argument");
  return guard([&] {
    pl::RunConfig cfg;
    cfg.sparsity = params->sparsity;
    cfg.mode = pl::alloc_mode_from_name(params->alloc_mode ? params->alloc_mode : "uniform");
    cfg.epsilon = params->epsilon > 0.0 ? params->epsilon : 1.0;
    cfg.autotune_epsilon = params->autotune != 0;
    cfg.max_layer_sparsity = params->max_layer_sparsity > 0.0 ? params->max_layer_sparsity : 0.8;
    cfg.lambda = params->lambda_ridge > 0.0 ? params->lambda_ridge : 1.0;
    cfg.seed = params->seed;
    cfg.calib_n = params->calib_n > 0 ? params->calib_n : 8;
    cfg.calib_t = params->calib_t > 0 ? params->calib_t : 32;
    cfg.gqa = params->gqa != 0;
    cfg.clamp = params->clamp != 0;
    cfg.propagate = params->propagate != 0;
    cfg.timings = params->timings != 0;

    toy::Model compressed;
    pl::CompressionReport report =
        pl::compress_model(model->impl, cfg, out_model ? &compressed : nullptr);
    if (out_report_json) *out_report_json = copy_string(pl::report_to_json(report));
    if (out_model) *out_model = new modec_model{std::move(compressed)};
    return MODEC_OK;
  });
}

modec_status modec_eval_models(const modec_model* original, const modec_model* compressed,
                               int calib_n, int calib_t, uint64_t seed,
                               char** out_metrics_json) {
  if (!original || !compressed || !out_metrics_json)
    return arg_error("modec_eval_models: null argument");
  return guard([&] {
    int n = calib_n > 0 ? calib_n : 8;
    int t = calib_t > 0 ? calib_t : 32;
    toy::CalibrationSet calib =
        toy::make_calibration(n, t, original->impl.config.d_hidden, seed);
    pl::EvalResult r = pl::evaluate(original->impl, compressed->impl, calib);
    json j;
    j["layer_mse"] = r.layer_mse;
    j["e2e_mse"] = r.e2e_mse;
    j["cosine"] = r.cosine;
    *out_metrics_json = copy_string(j.dump(2) + "\n");
    return MODEC_OK;
  });
}

modec_status modec_allocate_json(const char* request_json, char** out_plan_json) {
  if (!request_json || !out_plan_json) return arg_error("modec_allocate_json: null argument");
  json req;
  try {
    req = json::parse(request_json);
  } catch (const json::exception& e) {
    return arg_error(("modec_allocate_json: bad request: " + std::string(e.what())).c_str());
  }
  return guard([&] {
    std::vector<double> scores, scores_mha;
    double phi_avg = 0.0, peak = 0.8, epsilon = 1.0;
    bool refined = false, auto_eps = false, clamp = false;
    try {
      scores = number_list(req, "scores");
      phi_avg = req.at("phi_avg").get<double>();
      peak = req.value("max_layer_sparsity", 0.8);
      clamp = req.value("clamp", false);
      refined = req.contains("scores_mha");
      if (refined) scores_mha = number_list(req, "scores_mha");
      const json& eps = req.at("epsilon");
      if (eps.is_string()) {
        if (eps.get<std::string>() != "auto")
          modec::fail(modec::ErrorCode::BadConfig, "epsilon must be a number or \"auto\"");
        auto_eps = true;
      } else {
        epsilon = eps.get<double>();
      }
    } catch (const json::exception& e) {
      modec::fail(modec::ErrorCode::BadConfig,
                  "allocation request: " + std::string(e.what()));
    }

    if (auto_eps)
      epsilon = refined ? alloc::autotune_epsilon_refined(scores, scores_mha, phi_avg, peak).epsilon
                        : alloc::autotune_epsilon(scores, phi_avg, peak).epsilon;
    alloc::SparsityPlan plan = refined
                                   ? alloc::allocate_refined(scores, scores_mha, phi_avg, epsilon)
                                   : alloc::allocate(scores, phi_avg, epsilon);
    if (plan.epsilon_too_small && clamp) alloc::clamp_plan(plan);
    *out_plan_json = copy_string(alloc::plan_to_json(plan));
    return MODEC_OK;
  });
}

}  // extern "C"
