#include "core/correlation.hpp"

namespace modec::correlation {

void accumulate(CorrelationMatrix& corr, const Matrix& block) {
  require_shape(block.cols() == corr.sum.cols(), "accumulate: block width != correlation dim");
  require_finite(block, "correlation block");
  corr.sum.noalias() += block.transpose() * block;
  corr.sum = 0.5 * (corr.sum + corr.sum.transpose()).eval();
  corr.n_tokens += block.rows();
}

LayerCorrelations build_layer_correlations(const toymodel::LayerTaps& taps,
                                           const toymodel::ModelConfig& cfg) {
  require_shape(!taps.attn_input.empty(), "build_layer_correlations: no captured samples");
  int mlp_dim = static_cast<int>(taps.mlp_act[0].cols());
  int head_dim = static_cast<int>(taps.q_rot.at(0).at(0).cols());

  LayerCorrelations out;
  out.mlp = CorrelationMatrix(mlp_dim);
  out.input = CorrelationMatrix(cfg.d_hidden);
  out.query.assign(static_cast<std::size_t>(cfg.n_heads), CorrelationMatrix(head_dim));
  out.key.assign(static_cast<std::size_t>(cfg.n_kv_heads), CorrelationMatrix(head_dim));

  for (std::size_t s = 0; s < taps.attn_input.size(); ++s) {
    accumulate(out.mlp, taps.mlp_act[s]);
    accumulate(out.input, taps.attn_input[s]);
    for (int h = 0; h < cfg.n_heads; ++h)
      accumulate(out.query[static_cast<std::size_t>(h)], taps.q_rot[static_cast<std::size_t>(h)][s]);
    for (int kvh = 0; kvh < cfg.n_kv_heads; ++kvh)
      accumulate(out.key[static_cast<std::size_t>(kvh)], taps.k_rot[static_cast<std::size_t>(kvh)][s]);
  }
  return out;
}

}  // namespace modec::correlation
