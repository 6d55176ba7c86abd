#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/matrix.hpp"
#include "core/selection.hpp"

namespace modec::toymodel {

enum class Activation { SiluGated, Relu, Gelu };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct ModelConfig {
  int d_hidden = 0;
  int d_intermediate = 0;
  int n_heads = 1;
  int n_kv_heads = 1;  // < n_heads means grouped (shared key/value heads)
  int n_layers = 1;
  Activation activation = Activation::SiluGated;
  double rope_base = 10000.0;
  double rmsnorm_eps = 1e-5;

  int head_dim() const { return d_hidden / n_heads; }
  int group_size() const { return n_heads / n_kv_heads; }
  void validate() const;
};

// One decoder layer. Attention matrices hold all heads side by side; after
// compression the per-head widths shrink, so the widths are derived from the
// stored shapes, not from ModelConfig.
struct LayerWeights {
  Matrix w_q;    // d_hidden x (n_heads * qk_dim)
  Matrix w_k;    // d_hidden x (n_kv_heads * qk_dim)
  Matrix w_v;    // d_hidden x (n_kv_heads * vo_dim)
  Matrix w_o;    // (n_heads * vo_dim) x d_hidden
  Matrix w_up;   // d_hidden x mlp_dim
  Matrix w_gate; // d_hidden x mlp_dim, empty unless the activation is gated
  Matrix w_down; // mlp_dim x d_hidden
  Vector norm_attn;  // RMSNorm scale before attention
  Vector norm_mlp;   // RMSNorm scale before the MLP
  // Retained rotary dims per kv head (ascending, pair-closed). Empty vector
  // per head (or empty outer vector) means the full head is kept.
  std::vector<std::vector<int>> rope_indices;

  int qk_dim(const ModelConfig& cfg) const { return static_cast<int>(w_q.cols()) / cfg.n_heads; }
  int vo_dim(const ModelConfig& cfg) const { return static_cast<int>(w_v.cols()) / cfg.n_kv_heads; }
  int mlp_dim() const { return static_cast<int>(w_up.cols()); }
  long long param_count() const;
};

struct Model {
  ModelConfig config;
  std::vector<LayerWeights> layers;

  long long param_count() const;
};

struct CalibrationSet {
  std::vector<Matrix> samples;  // each t x d_hidden token-embedding rows

  int n() const { return static_cast<int>(samples.size()); }
  int t() const { return samples.empty() ? 0 : static_cast<int>(samples[0].rows()); }
  void validate(int d_hidden) const;
};

// Per-layer activation records, one entry per calibration sample in pass
// order. These are the tap points the correlation builders consume.
struct LayerTaps {
  std::vector<Matrix> attn_input;           // post-norm attention input (t x d_hidden)
  std::vector<std::vector<Matrix>> q_rot;   // [query head][sample] rotary query states
  std::vector<std::vector<Matrix>> k_rot;   // [kv head][sample] rotary key states
  std::vector<Matrix> mlp_act;              // post-activation intermediate states (t x mlp_dim)
  std::vector<Matrix> layer_in;             // residual stream entering the layer
  std::vector<Matrix> attn_state;           // residual stream after the attention block
  std::vector<Matrix> layer_out;            // residual stream leaving the layer
};

// Seeded Gaussian weights scaled by gain / sqrt(fan_in); the gain ramps
// linearly from gain_lo (first layer) to gain_hi (last layer) so layers can
// be made deliberately unequal in influence.
Model make_toy_model(const ModelConfig& cfg, std::uint64_t seed,
                     double gain_lo = 1.0, double gain_hi = 1.0);

CalibrationSet make_calibration(int n, int t, int d_hidden, std::uint64_t seed);

Matrix rmsnorm(const Matrix& x, const Vector& scale, double eps);

// Interleaved rotary embedding: dims (2j, 2j+1) rotate together with
// frequency rope_base^(-2j / head_dim_orig). For compressed heads, `indices`
// names the retained original dims (ascending, pair-closed) so the original
// frequency ladder is preserved.
Matrix apply_rope(const Matrix& states, const std::vector<int>& indices,
                  double rope_base, int head_dim_orig);

double silu(double x);
double gelu(double x);
Matrix apply_scalar_activation(Activation act, const Matrix& x);

// Post-activation intermediate states from the vertically stacked [up; gate]
// matrix (or plain up matrix when not gated); x is the post-norm input.
Matrix gated_activation(const Matrix& x, const Matrix& w_stacked, Activation act);

// Vertical stack [w_up; w_gate] (just w_up when not gated), the form the
// MLP compressor consumes, sharing one column selection across both.
Matrix stack_up_gate(const LayerWeights& w);
void unstack_up_gate(const Matrix& stacked, Activation act, Matrix* w_up, Matrix* w_gate);

Matrix forward_layer(const LayerWeights& w, const Matrix& x, const ModelConfig& cfg,
                     LayerTaps* taps = nullptr);
Matrix forward_model(const Model& m, const Matrix& x);

std::vector<LayerTaps> capture_activations(const Model& m, const CalibrationSet& calib);

// Max deviation of sigma(X S) from sigma(X) S for an elementwise activation.
double check_commutation(Activation act, const Matrix& x, const ColumnSelection& sel);
// Same for rotary embedding; the selection must keep rotary pairs whole.
double check_commutation_rope(const Matrix& x, const ColumnSelection& sel,
                              double rope_base, int head_dim_orig);

}  // namespace modec::toymodel
