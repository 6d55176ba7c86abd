#include "core/toymodel.hpp"

#include <cmath>

#include "core/rng.hpp"

namespace modec::toymodel {
namespace {

std::vector<int> full_indices(int dim) {
  std::vector<int> idx(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) idx[static_cast<std::size_t>(i)] = i;
  return idx;
}

const std::vector<int>& head_indices(const LayerWeights& w, int kv_head, int qk,
                                     std::vector<int>& scratch) {
  if (kv_head < static_cast<int>(w.rope_indices.size()) &&
      !w.rope_indices[static_cast<std::size_t>(kv_head)].empty())
    return w.rope_indices[static_cast<std::size_t>(kv_head)];
  scratch = full_indices(qk);
  return scratch;
}

// Rowwise causal softmax in place: row i attends to columns 0..i.
void causal_softmax(Matrix& scores) {
  for (int i = 0; i < scores.rows(); ++i) {
    int width = i + 1;
    double m = scores.row(i).head(width).maxCoeff();
    double sum = 0.0;
    for (int j = 0; j < width; ++j) {
      double e = std::exp(scores(i, j) - m);
      scores(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < width; ++j) scores(i, j) /= sum;
    for (int j = width; j < scores.cols(); ++j) scores(i, j) = 0.0;
  }
}

double layer_gain(double lo, double hi, int layer, int n_layers) {
  if (n_layers <= 1) return lo;
  return lo + (hi - lo) * static_cast<double>(layer) / static_cast<double>(n_layers - 1);
}

}  // namespace

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::SiluGated: return "silu_gated";
    case Activation::Relu: return "relu";
    case Activation::Gelu: return "gelu";
  }
  return "unknown";
}

Activation activation_from_name(const std::string& name) {
  if (name == "silu_gated" || name == "silu") return Activation::SiluGated;
  if (name == "relu") return Activation::Relu;
  if (name == "gelu") return Activation::Gelu;
  fail(ErrorCode::BadConfig, "unknown activation: " + name);
}

void ModelConfig::validate() const {
  if (d_hidden < 1 || d_intermediate < 1 || n_heads < 1 || n_kv_heads < 1 || n_layers < 1)
    fail(ErrorCode::BadConfig, "model dimensions must be positive");
  if (d_hidden % n_heads != 0)
    fail(ErrorCode::BadConfig, "d_hidden must be divisible by n_heads");
  if (n_heads % n_kv_heads != 0)
    fail(ErrorCode::BadConfig, "n_heads must be divisible by n_kv_heads");
  if (head_dim() % 2 != 0)
    fail(ErrorCode::BadConfig, "head dim must be even for rotary pairing");
  if (!(rope_base > 0.0) || !(rmsnorm_eps > 0.0))
    fail(ErrorCode::BadConfig, "rope_base and rmsnorm_eps must be positive");
}

long long LayerWeights::param_count() const {
  return w_q.size() + w_k.size() + w_v.size() + w_o.size() + w_up.size() + w_gate.size() +
         w_down.size() + norm_attn.size() + norm_mlp.size();
}

long long Model::param_count() const {
  long long total = 0;
  for (const LayerWeights& l : layers) total += l.param_count();
  return total;
}

void CalibrationSet::validate(int d_hidden) const {
  if (samples.empty()) fail(ErrorCode::BadConfig, "calibration set is empty");
  for (const Matrix& s : samples) {
    require_shape(s.cols() == d_hidden, "calibration sample width != d_hidden");
    require_shape(s.rows() == samples[0].rows(), "calibration samples differ in length");
    require_finite(s, "calibration sample");
  }
}

Model make_toy_model(const ModelConfig& cfg, std::uint64_t seed,
                     double gain_lo, double gain_hi) {
  cfg.validate();
  Rng rng(seed);
  Model m;
  m.config = cfg;
  int d = cfg.d_hidden;
  int hd = cfg.head_dim();
  bool gated = cfg.activation == Activation::SiluGated;

  for (int l = 0; l < cfg.n_layers; ++l) {
    double g = layer_gain(gain_lo, gain_hi, l, cfg.n_layers);
    LayerWeights w;
    w.w_q = rng.gaussian_matrix(d, cfg.n_heads * hd, g / std::sqrt(static_cast<double>(d)));
    w.w_k = rng.gaussian_matrix(d, cfg.n_kv_heads * hd, g / std::sqrt(static_cast<double>(d)));
    w.w_v = rng.gaussian_matrix(d, cfg.n_kv_heads * hd, g / std::sqrt(static_cast<double>(d)));
    w.w_o = rng.gaussian_matrix(cfg.n_heads * hd, d,
                                g / std::sqrt(static_cast<double>(cfg.n_heads * hd)));
    w.w_up = rng.gaussian_matrix(d, cfg.d_intermediate, g / std::sqrt(static_cast<double>(d)));
    if (gated)
      w.w_gate = rng.gaussian_matrix(d, cfg.d_intermediate, g / std::sqrt(static_cast<double>(d)));
    w.w_down = rng.gaussian_matrix(cfg.d_intermediate, d,
                                   g / std::sqrt(static_cast<double>(cfg.d_intermediate)));
    w.norm_attn = Vector::Ones(d);
    w.norm_mlp = Vector::Ones(d);
    m.layers.push_back(std::move(w));
  }
  return m;
}

CalibrationSet make_calibration(int n, int t, int d_hidden, std::uint64_t seed) {
  if (n < 1 || t < 1 || d_hidden < 1)
    fail(ErrorCode::BadConfig, "calibration sizes must be positive");
  Rng rng(seed);
  CalibrationSet calib;
  for (int i = 0; i < n; ++i) calib.samples.push_back(rng.gaussian_matrix(t, d_hidden));
  return calib;
}

Matrix rmsnorm(const Matrix& x, const Vector& scale, double eps) {
  require_shape(x.cols() == scale.size(), "rmsnorm: scale length != feature dim");
  Matrix out(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    double ms = x.row(r).squaredNorm() / static_cast<double>(x.cols());
    double inv = 1.0 / std::sqrt(ms + eps);
    for (int c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) * inv * scale(c);
  }
  return out;
}

Matrix apply_rope(const Matrix& states, const std::vector<int>& indices,
                  double rope_base, int head_dim_orig) {
  int k = static_cast<int>(states.cols());
  require_shape(static_cast<int>(indices.size()) == k, "rope: index list length != state width");
  require_shape(k % 2 == 0, "rope: state width must be even");

  Matrix out(states.rows(), k);
  for (int p = 0; p < k / 2; ++p) {
    int a = indices[static_cast<std::size_t>(2 * p)];
    int b = indices[static_cast<std::size_t>(2 * p + 1)];
    if (a % 2 != 0 || b != a + 1)
      fail(ErrorCode::PairViolation, "rope: retained dims must form whole (2j, 2j+1) pairs");
    int freq = a / 2;
    double theta =
        std::pow(rope_base, -2.0 * static_cast<double>(freq) / static_cast<double>(head_dim_orig));
    for (int t = 0; t < states.rows(); ++t) {
      double angle = static_cast<double>(t) * theta;
      double c = std::cos(angle);
      double s = std::sin(angle);
      double x = states(t, 2 * p);
      double y = states(t, 2 * p + 1);
      out(t, 2 * p) = x * c - y * s;
      out(t, 2 * p + 1) = x * s + y * c;
    }
  }
  return out;
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

Matrix apply_scalar_activation(Activation act, const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c) {
      double v = x(r, c);
      switch (act) {
        case Activation::SiluGated: out(r, c) = silu(v); break;
        case Activation::Relu: out(r, c) = v > 0.0 ? v : 0.0; break;
        case Activation::Gelu: out(r, c) = gelu(v); break;
      }
    }
  return out;
}

Matrix gated_activation(const Matrix& x, const Matrix& w_stacked, Activation act) {
  if (act == Activation::SiluGated) {
    int d = static_cast<int>(x.cols());
    require_shape(w_stacked.rows() == 2 * d, "gated_activation: stacked matrix must be [up; gate]");
    Matrix up = x * w_stacked.topRows(d);
    Matrix gate = x * w_stacked.bottomRows(d);
    return up.cwiseProduct(apply_scalar_activation(Activation::SiluGated, gate));
  }
  require_shape(w_stacked.rows() == x.cols(), "gated_activation: shape mismatch");
  return apply_scalar_activation(act, x * w_stacked);
}

Matrix stack_up_gate(const LayerWeights& w) {
  if (w.w_gate.size() == 0) return w.w_up;
  Matrix stacked(w.w_up.rows() + w.w_gate.rows(), w.w_up.cols());
  stacked.topRows(w.w_up.rows()) = w.w_up;
  stacked.bottomRows(w.w_gate.rows()) = w.w_gate;
  return stacked;
}

void unstack_up_gate(const Matrix& stacked, Activation act, Matrix* w_up, Matrix* w_gate) {
  if (act == Activation::SiluGated) {
    require_shape(stacked.rows() % 2 == 0, "unstack: odd row count for gated MLP");
    int d = static_cast<int>(stacked.rows()) / 2;
    *w_up = stacked.topRows(d);
    *w_gate = stacked.bottomRows(d);
  } else {
    *w_up = stacked;
    *w_gate = Matrix();
  }
}

Matrix forward_layer(const LayerWeights& w, const Matrix& x, const ModelConfig& cfg,
                     LayerTaps* taps) {
  require_shape(x.cols() == cfg.d_hidden, "forward_layer: input width != d_hidden");
  require_shape(w.w_q.rows() == cfg.d_hidden && w.w_k.rows() == cfg.d_hidden &&
                    w.w_v.rows() == cfg.d_hidden && w.w_up.rows() == cfg.d_hidden,
                "forward_layer: projection row count != d_hidden");
  require_shape(w.w_q.cols() % cfg.n_heads == 0 && w.w_k.cols() % cfg.n_kv_heads == 0 &&
                    w.w_v.cols() % cfg.n_kv_heads == 0,
                "forward_layer: head widths do not divide evenly");
  int qk = w.qk_dim(cfg);
  int vo = w.vo_dim(cfg);
  require_shape(w.w_k.cols() == static_cast<long>(cfg.n_kv_heads) * qk,
                "forward_layer: query/key head widths differ");
  require_shape(w.w_o.rows() == static_cast<long>(cfg.n_heads) * vo,
                "forward_layer: output projection rows != n_heads * vo_dim");
  require_shape(w.w_down.rows() == w.w_up.cols(), "forward_layer: mlp down rows != up cols");

  int t_len = static_cast<int>(x.rows());
  int group = cfg.group_size();
  double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));

  if (taps) {
    if (taps->q_rot.empty()) taps->q_rot.resize(static_cast<std::size_t>(cfg.n_heads));
    if (taps->k_rot.empty()) taps->k_rot.resize(static_cast<std::size_t>(cfg.n_kv_heads));
    taps->layer_in.push_back(x);
  }

  Matrix xn = rmsnorm(x, w.norm_attn, cfg.rmsnorm_eps);
  if (taps) taps->attn_input.push_back(xn);

  Matrix attn = Matrix::Zero(t_len, cfg.d_hidden);
  std::vector<int> scratch;
  for (int kvh = 0; kvh < cfg.n_kv_heads; ++kvh) {
    const std::vector<int>& idx = head_indices(w, kvh, qk, scratch);
    Matrix key = apply_rope(xn * w.w_k.middleCols(static_cast<long>(kvh) * qk, qk),
                            idx, cfg.rope_base, cfg.head_dim());
    Matrix val = xn * w.w_v.middleCols(static_cast<long>(kvh) * vo, vo);
    if (taps) taps->k_rot[static_cast<std::size_t>(kvh)].push_back(key);

    for (int g = 0; g < group; ++g) {
      int h = kvh * group + g;
      Matrix query = apply_rope(xn * w.w_q.middleCols(static_cast<long>(h) * qk, qk),
                                idx, cfg.rope_base, cfg.head_dim());
      if (taps) taps->q_rot[static_cast<std::size_t>(h)].push_back(query);

      Matrix scores = (query * key.transpose()) * scale;
      causal_softmax(scores);
      attn += scores * val * w.w_o.middleRows(static_cast<long>(h) * vo, vo);
    }
  }

  Matrix mid = x + attn;
  if (taps) taps->attn_state.push_back(mid);

  Matrix mn = rmsnorm(mid, w.norm_mlp, cfg.rmsnorm_eps);
  Matrix act;
  if (cfg.activation == Activation::SiluGated) {
    require_shape(w.w_gate.rows() == w.w_up.rows() && w.w_gate.cols() == w.w_up.cols(),
                  "forward_layer: gate shape != up shape");
    act = (mn * w.w_up).cwiseProduct(apply_scalar_activation(Activation::SiluGated, mn * w.w_gate));
  } else {
    act = apply_scalar_activation(cfg.activation, mn * w.w_up);
  }
  if (taps) taps->mlp_act.push_back(act);

  Matrix out = mid + act * w.w_down;
  if (taps) taps->layer_out.push_back(out);
  return out;
}

Matrix forward_model(const Model& m, const Matrix& x) {
  Matrix state = x;
  for (const LayerWeights& w : m.layers) state = forward_layer(w, state, m.config);
  return state;
}

std::vector<LayerTaps> capture_activations(const Model& m, const CalibrationSet& calib) {
  calib.validate(m.config.d_hidden);
  std::vector<LayerTaps> taps(m.layers.size());
  for (const Matrix& sample : calib.samples) {
    Matrix state = sample;
    for (std::size_t l = 0; l < m.layers.size(); ++l)
      state = forward_layer(m.layers[l], state, m.config, &taps[l]);
  }
  return taps;
}

double check_commutation(Activation act, const Matrix& x, const ColumnSelection& sel) {
  sel.validate();
  Matrix lhs = sel.gather_cols(apply_scalar_activation(act, x));
  Matrix rhs = apply_scalar_activation(act, sel.gather_cols(x));
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

double check_commutation_rope(const Matrix& x, const ColumnSelection& sel,
                              double rope_base, int head_dim_orig) {
  sel.validate();
  if (!sel.pair_closed())
    fail(ErrorCode::PairViolation, "rope commutation: selection splits a rotary pair");
  Matrix lhs = sel.gather_cols(apply_rope(x, full_indices(static_cast<int>(x.cols())),
                                          rope_base, head_dim_orig));
  Matrix rhs = apply_rope(sel.gather_cols(x), sel.indices, rope_base, head_dim_orig);
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

}  // namespace modec::toymodel
