#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <modec.h>
#include <sstream>
#include <string>
#include <vector>

using nlohmann::json;

namespace {

// 0 = done, 2 = bad configuration or IO, 3 = numerical or internal failure.
int exit_code(modec_status s) {
  switch (s) {
    case MODEC_OK:
      return 0;
    case MODEC_ERR_ARG:
    case MODEC_ERR_IO:
    case MODEC_ERR_CONFIG:
      return 2;
    default:
      return 3;
  }
}

int report_failure(modec_status s) {
  std::fprintf(stderr, "error: %s\n", modec_last_error());
  return exit_code(s);
}

struct OwnedModel {
  modec_model* m = nullptr;
  ~OwnedModel() { modec_model_free(m); }
};

struct OwnedString {
  char* s = nullptr;
  ~OwnedString() { modec_string_free(s); }
};

bool parse_epsilon(const std::string& text, double* value, bool* autotune) {
  if (text == "auto") {
    *autotune = true;
    return true;
  }
  try {
    std::size_t used = 0;
    *value = std::stod(text, &used);
    return used == text.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_csv(const std::string& text, std::vector<double>* out) {
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out->push_back(std::stod(item, &used));
      if (used != item.size()) return false;
    } catch (const std::exception&) {
      return false;
    }
  }
  return !out->empty();
}

int write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::fputs(text.c_str(), stdout);
    return 0;
  }
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) {
    std::fprintf(stderr, "error: could not write %s\n", path.c_str());
    return 2;
  }
  return 0;
}

struct GenArgs {
  std::string out;
  int d_hidden = 64, d_int = 128, heads = 4, kv_heads = 0, layers = 4;
  std::string activation = "silu_gated";
  std::uint64_t seed = 0;
  double gain_lo = 1.0, gain_hi = 1.0;
};

int run_gen(const GenArgs& a) {
  modec_toy_params p = {};
  p.d_hidden = a.d_hidden;
  p.d_intermediate = a.d_int;
  p.n_heads = a.heads;
  p.n_kv_heads = a.kv_heads > 0 ? a.kv_heads : a.heads;
  p.n_layers = a.layers;
  p.activation = a.activation.c_str();
  p.seed = a.seed;
  p.gain_lo = a.gain_lo;
  p.gain_hi = a.gain_hi;

  OwnedModel m;
  modec_status s = modec_model_gen_toy(&p, &m.m);
  if (s != MODEC_OK) return report_failure(s);
  s = modec_model_save(m.m, a.out.c_str());
  if (s != MODEC_OK) return report_failure(s);
  long long params = 0;
  modec_model_param_count(m.m, &params);
  std::printf("wrote %lld-parameter model to %s\n", params, a.out.c_str());
  return 0;
}

struct CompressArgs {
  std::string model, out, report;
  double sparsity = 0.0;
  std::string alloc = "uniform";
  std::string epsilon = "1.0";
  double max_layer_sparsity = 0.8;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  int calib_n = 8, calib_t = 32;
  bool gqa = false, clamp = false, propagate = false, timings = false;
};

int run_compress(const CompressArgs& a) {
  modec_compress_params p = {};
  p.sparsity = a.sparsity;
  p.alloc_mode = a.alloc.c_str();
  bool autotune = false;
  double eps = 1.0;
  if (!parse_epsilon(a.epsilon, &eps, &autotune)) {
    std::fprintf(stderr, "error: --epsilon expects a number or 'auto'\n");
    return 2;
  }
  p.epsilon = eps;
  p.autotune = autotune ? 1 : 0;
  p.max_layer_sparsity = a.max_layer_sparsity;
  p.lambda_ridge = a.lambda;
  p.seed = a.seed;
  p.calib_n = a.calib_n;
  p.calib_t = a.calib_t;
  p.gqa = a.gqa ? 1 : 0;
  p.clamp = a.clamp ? 1 : 0;
  p.propagate = a.propagate ? 1 : 0;
  p.timings = a.timings ? 1 : 0;

  OwnedModel m;
  modec_status s = modec_model_load(a.model.c_str(), &m.m);
  if (s != MODEC_OK) return report_failure(s);

  OwnedModel comp;
  OwnedString report;
  s = modec_model_compress(m.m, &p, &comp.m, &report.s);
  if (s != MODEC_OK) return report_failure(s);

  if (!a.out.empty()) {
    s = modec_model_save(comp.m, a.out.c_str());
    if (s != MODEC_OK) return report_failure(s);
  }
  if (!a.report.empty()) {
    int rc = write_text(a.report, report.s);
    if (rc != 0) return rc;
  }

  json j = json::parse(report.s);
  std::printf("compressed %lld -> %lld params (realized sparsity %.4f)\n",
              j["params_before"].get<long long>(), j["params_after"].get<long long>(),
              j["realized_sparsity"].get<double>());
  std::printf("held-out mse %.6g, cosine %.6f\n", j["eval"]["e2e_mse"].get<double>(),
              j["eval"]["cosine"].get<double>());
  return 0;
}

struct AllocateArgs {
  std::string scores, scores_mha;
  double sparsity = 0.0;
  std::string epsilon = "1.0";
  double max_layer_sparsity = 0.8;
  bool clamp = false;
  std::string out = "-";
};

int run_allocate(const AllocateArgs& a) {
  std::vector<double> scores;
  if (!parse_csv(a.scores, &scores)) {
    std::fprintf(stderr, "error: --scores expects comma-separated numbers\n");
    return 2;
  }
  json req;
  req["scores"] = scores;
  req["phi_avg"] = a.sparsity;
  req["max_layer_sparsity"] = a.max_layer_sparsity;
  req["clamp"] = a.clamp;
  if (!a.scores_mha.empty()) {
    std::vector<double> mha;
    if (!parse_csv(a.scores_mha, &mha)) {
      std::fprintf(stderr, "error: --scores-mha expects comma-separated numbers\n");
      return 2;
    }
    req["scores_mha"] = mha;
  }
  bool autotune = false;
  double eps = 1.0;
  if (!parse_epsilon(a.epsilon, &eps, &autotune)) {
    std::fprintf(stderr, "error: --epsilon expects a number or 'auto'\n");
    return 2;
  }
  if (autotune)
    req["epsilon"] = "auto";
  else
    req["epsilon"] = eps;

  OwnedString plan;
  modec_status s = modec_allocate_json(req.dump().c_str(), &plan.s);
  if (s != MODEC_OK) return report_failure(s);
  return write_text(a.out, plan.s);
}

struct EvalArgs {
  std::string model, compressed;
  int calib_n = 8, calib_t = 32;
  std::uint64_t seed = 0;
  std::string out = "-";
};

int run_eval(const EvalArgs& a) {
  OwnedModel orig, comp;
  modec_status s = modec_model_load(a.model.c_str(), &orig.m);
  if (s != MODEC_OK) return report_failure(s);
  s = modec_model_load(a.compressed.c_str(), &comp.m);
  if (s != MODEC_OK) return report_failure(s);
  OwnedString metrics;
  s = modec_eval_models(orig.m, comp.m, a.calib_n, a.calib_t, a.seed, &metrics.s);
  if (s != MODEC_OK) return report_failure(s);
  return write_text(a.out, metrics.s);
}

struct ReportArgs {
  std::string file;
  bool raw_json = false;
};

int run_report(const ReportArgs& a) {
  std::ifstream f(a.file, std::ios::binary);
  if (!f) {
    std::fprintf(stderr, "error: could not read %s\n", a.file.c_str());
    return 2;
  }
  std::stringstream buf;
  buf << f.rdbuf();
  if (a.raw_json) {
    std::fputs(buf.str().c_str(), stdout);
    return 0;
  }
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: %s is not a report: %s\n", a.file.c_str(), e.what());
    return 2;
  }

  const json& cfg = j["config"];
  std::printf("mode %s, target sparsity %.3f, realized %.4f\n",
              cfg["mode"].get<std::string>().c_str(), cfg["sparsity"].get<double>(),
              j["realized_sparsity"].get<double>());
  std::printf("params %lld -> %lld\n", j["params_before"].get<long long>(),
              j["params_after"].get<long long>());
  std::printf("%5s %8s %8s %6s %5s %5s %10s %10s %10s\n", "layer", "phi_mlp", "phi_mha", "k_mlp",
              "k_kq", "k_vo", "err_mlp", "err_kq", "err_vo");
  int l = 0;
  for (const json& lr : j["layers"]) {
    std::printf("%5d %8.3f %8.3f %6d %5d %5d %10.3e %10.3e %10.3e\n", l++,
                lr["sparsity_mlp"].get<double>(), lr["sparsity_mha"].get<double>(),
                lr["mlp"]["rank_k"].get<int>(), lr["key_query"]["rank_k"].get<int>(),
                lr["value_output"]["rank_k"].get<int>(), lr["mlp"]["modular_error"].get<double>(),
                lr["key_query"]["modular_error"].get<double>(),
                lr["value_output"]["modular_error"].get<double>());
  }
  std::printf("held-out mse %.6g, cosine %.6f\n", j["eval"]["e2e_mse"].get<double>(),
              j["eval"]["cosine"].get<double>());
  if (j.contains("total_seconds"))
    std::printf("total wall time %.3f s\n", j["total_seconds"].get<double>());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modec: joint weight-pair compression for small decoder models"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-toy", "generate a seeded random decoder model");
  gen_cmd->add_option("--out", gen.out, "output model directory")->required();
  gen_cmd->add_option("--d-hidden", gen.d_hidden, "hidden width");
  gen_cmd->add_option("--d-int", gen.d_int, "MLP intermediate width");
  gen_cmd->add_option("--heads", gen.heads, "attention heads");
  gen_cmd->add_option("--kv-heads", gen.kv_heads, "key/value heads (default: same as --heads)");
  gen_cmd->add_option("--layers", gen.layers, "decoder layers");
  gen_cmd->add_option("--activation", gen.activation, "silu_gated | relu | gelu");
  gen_cmd->add_option("--seed", gen.seed, "weight seed");
  gen_cmd->add_option("--gain-lo", gen.gain_lo, "first-layer weight gain");
  gen_cmd->add_option("--gain-hi", gen.gain_hi, "last-layer weight gain");

  CompressArgs comp;
  CLI::App* comp_cmd = app.add_subcommand("compress", "compress a model's weight pairs");
  comp_cmd->add_option("--model", comp.model, "input model directory")->required();
  comp_cmd->add_option("--out", comp.out, "output model directory");
  comp_cmd->add_option("--report", comp.report, "write the JSON report here ('-' for stdout)");
  comp_cmd->add_option("--sparsity", comp.sparsity, "target average sparsity in [0, 1)");
  comp_cmd->add_option("--alloc", comp.alloc, "uniform | global | refined");
  comp_cmd->add_option("--epsilon", comp.epsilon, "allocation temperature, or 'auto'");
  comp_cmd->add_option("--max-layer-sparsity", comp.max_layer_sparsity,
                       "peak sparsity targeted by --epsilon auto");
  comp_cmd->add_option("--lambda", comp.lambda, "ridge parameter for channel scores");
  comp_cmd->add_option("--seed", comp.seed, "calibration data seed");
  comp_cmd->add_option("--calib-n", comp.calib_n, "calibration samples");
  comp_cmd->add_option("--calib-t", comp.calib_t, "tokens per calibration sample");
  comp_cmd->add_flag("--gqa", comp.gqa, "use grouped attention compression even when ungrouped");
  comp_cmd->add_flag("--clamp", comp.clamp, "cap over-unit sparsities instead of failing");
  comp_cmd->add_flag("--propagate", comp.propagate,
                     "re-capture statistics through compressed layers");
  comp_cmd->add_flag("--timings", comp.timings, "include wall times in the report");

  AllocateArgs al;
  CLI::App* al_cmd = app.add_subcommand("allocate", "turn layer scores into a sparsity plan");
  al_cmd->add_option("--scores", al.scores, "comma-separated scores (MLP scores when refined)")
      ->required();
  al_cmd->add_option("--scores-mha", al.scores_mha,
                     "comma-separated attention scores (enables the per-block form)");
  al_cmd->add_option("--sparsity", al.sparsity, "target average sparsity")->required();
  al_cmd->add_option("--epsilon", al.epsilon, "temperature, or 'auto'");
  al_cmd->add_option("--max-layer-sparsity", al.max_layer_sparsity,
                     "peak sparsity targeted by --epsilon auto");
  al_cmd->add_flag("--clamp", al.clamp, "cap over-unit sparsities");
  al_cmd->add_option("--out", al.out, "write the plan here (default stdout)");

  EvalArgs ev;
  CLI::App* ev_cmd = app.add_subcommand("eval", "compare two models on seeded calibration data");
  ev_cmd->add_option("--model", ev.model, "original model directory")->required();
  ev_cmd->add_option("--compressed", ev.compressed, "compressed model directory")->required();
  ev_cmd->add_option("--calib-n", ev.calib_n, "calibration samples");
  ev_cmd->add_option("--calib-t", ev.calib_t, "tokens per sample");
  ev_cmd->add_option("--seed", ev.seed, "calibration data seed");
  ev_cmd->add_option("--out", ev.out, "write metrics here (default stdout)");

  ReportArgs rep;
  CLI::App* rep_cmd = app.add_subcommand("report", "pretty-print a compression report");
  rep_cmd->add_option("file", rep.file, "report JSON file")->required();
  rep_cmd->add_flag("--json", rep.raw_json, "echo the raw JSON instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (gen_cmd->parsed()) return run_gen(gen);
  if (comp_cmd->parsed()) return run_compress(comp);
  if (al_cmd->parsed()) return run_allocate(al);
  if (ev_cmd->parsed()) return run_eval(ev);
  if (rep_cmd->parsed()) return run_report(rep);
  return 2;
}
