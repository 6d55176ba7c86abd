#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/allocation.hpp"
#include "core/toymodel.hpp"

namespace modec::pipeline {

enum class AllocMode { Uniform, Global, Refined };

const char* alloc_mode_name(AllocMode mode);
AllocMode alloc_mode_from_name(const std::string& name);

struct RunConfig {
  double sparsity = 0.0;  // target average sparsity, in [0, 1)
  AllocMode mode = AllocMode::Uniform;
  double epsilon = 1.0;
  bool autotune_epsilon = false;    // pick the temperature from the scores
  double max_layer_sparsity = 0.8;  // autotune peak target
  double lambda = 1.0;              // ridge parameter for the MLP scores
  std::uint64_t seed = 0;           // calibration data seed
  int calib_n = 8;
  int calib_t = 32;
  bool gqa = false;        // run ungrouped models through the grouped path
  bool clamp = false;      // cap over-unit sparsities instead of failing
  bool propagate = false;  // re-capture statistics through compressed layers
  bool timings = false;    // include wall times in the report

  void validate() const;
};

struct ModuleReport {
  int rank_k = 0;
  double modular_error = 0.0;
  double error_bound = 0.0;
  double seconds = 0.0;  // zero unless timings were requested
};

struct LayerReport {
  double sparsity_mlp = 0.0;
  double sparsity_mha = 0.0;
  ModuleReport mlp;
  ModuleReport key_query;
  ModuleReport value_output;
};

struct EvalResult {
  std::vector<double> layer_mse;  // per layer, compressed vs original on original inputs
  double e2e_mse = 0.0;
  double cosine = 0.0;  // mean per-sample cosine of flattened final outputs
};

struct CompressionReport {
  std::vector<LayerReport> layers;
  allocation::SparsityPlan plan;  // empty phi for the uniform mode
  EvalResult eval;
  long long params_before = 0;
  long long params_after = 0;
  double realized_sparsity = 0.0;
  double total_seconds = 0.0;  // zero unless timings were requested
  RunConfig config;
};

// Mean squared difference and mean flattened cosine between two output sets;
// the building blocks of evaluate, exposed for direct metric checks.
double output_mse(const std::vector<Matrix>& a, const std::vector<Matrix>& b);
double output_cosine(const std::vector<Matrix>& a, const std::vector<Matrix>& b);

// Compare the compressed model against the original on a calibration set:
// per-layer outputs are compared on the original model's layer inputs.
EvalResult evaluate(const toymodel::Model& original, const toymodel::Model& compressed,
                    const toymodel::CalibrationSet& calib);

// Full run: calibrate on seeded data (last quarter held out for evaluation),
// score and allocate sparsity, compress every layer's three modules, and
// evaluate the rebuilt model.
CompressionReport compress_model(const toymodel::Model& model, const RunConfig& cfg,
                                 toymodel::Model* compressed);

std::string report_to_json(const CompressionReport& report);

}  // namespace modec::pipeline
