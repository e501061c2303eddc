#include "flowtse/flow_model.hpp"

#include <cmath>
#include <stdexcept>

namespace flowtse {

using namespace ag;

Eigen::MatrixXd build_attention_mask(int t_e, int t_m) {
  if (t_e < 1 || t_m < 1)
    throw std::invalid_argument("build_attention_mask: t_e and t_m must be >= 1");
  const int T = t_e + t_m;
  Eigen::MatrixXd m = Eigen::MatrixXd::Ones(T, T);
  m.block(0, t_e, t_e, t_m).setZero();  // enrollment queries never see mixed keys
  return m;
}

FlowModel::FlowModel(const ModelConfig& cfg, const FeatureConfig& feat, uint64_t init_seed)
    : cfg_(cfg), feat_(feat) {
  cfg_.validate();
  if (cfg_.mel_dim != feat_.n_mels)
    throw std::invalid_argument("FlowModel: mel_dim must equal feature n_mels");
  Rng rng(init_seed);
  const int E = cfg_.embed_dim;
  const int d = cfg_.mel_dim;

  null_cond_ = params_.add("null_cond", Mat::Zero(1, d));
  in_proj_ = Linear::create(params_, "in_proj", 2 * d, E, rng);
  t_ff1_ = Linear::create(params_, "time.ff1", E, E, rng);
  t_ff2_ = Linear::create(params_, "time.ff2", E, E, rng);

  blocks_.resize(cfg_.n_layers);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "block" + std::to_string(l);
    Block& b = blocks_[l];
    b.ada = Linear::create(params_, p + ".ada", E, 6 * E, rng, /*zero_init=*/true);
    b.wq = Linear::create(params_, p + ".attn.wq", E, E, rng);
    b.wk = Linear::create(params_, p + ".attn.wk", E, E, rng);
    b.wv = Linear::create(params_, p + ".attn.wv", E, E, rng);
    b.wo = Linear::create(params_, p + ".attn.wo", E, E, rng);
    b.ff1 = Linear::create(params_, p + ".mlp.ff1", E, cfg_.ff_dim, rng);
    b.ff2 = Linear::create(params_, p + ".mlp.ff2", cfg_.ff_dim, E, rng);
  }
  final_ada_ = Linear::create(params_, "final.ada", E, 2 * E, rng, /*zero_init=*/true);
  out_proj_ = Linear::create(params_, "final.out", E, d, rng, /*zero_init=*/true);
}

Var FlowModel::time_embedding(double t) {
  if (t < 0.0 || t > 1.0)
    throw std::invalid_argument("time_embedding: t must lie in [0, 1]");
  const int E = cfg_.embed_dim;
  const int half = E / 2;
  Mat emb(1, E);
  // DiT-style timestep features on a scaled axis so endpoints stay distinct
  const double pos = t * 1000.0;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    emb(0, i) = std::sin(pos * freq);
    emb(0, half + i) = std::cos(pos * freq);
  }
  if (E % 2) emb(0, E - 1) = 0.0;
  Var e = constant(emb);
  return t_ff2_(silu(t_ff1_(e)));
}

namespace {

// x * (1 + scale) + shift with 1xE modulation rows
Var modulate(const Var& x, const Var& shift, const Var& scale) {
  const int T = static_cast<int>(val(x).rows());
  Var s1 = add_scalar(broadcast_rows(scale, T), 1.0);
  return add(mul(x, s1), broadcast_rows(shift, T));
}

}  // namespace

Var FlowModel::forward(const Var& state, double t, const Eigen::MatrixXd& cond_mat, int t_e,
                       int t_m, bool dropped) {
  const int T = t_e + t_m;
  const int d = cfg_.mel_dim;
  if (val(state).rows() != T || val(state).cols() != d)
    throw std::invalid_argument("FlowModel::forward: state shape mismatch");
  if (!dropped && (cond_mat.rows() != T || cond_mat.cols() != d))
    throw std::invalid_argument("FlowModel::forward: conditioning shape mismatch");

  Var cond = dropped ? broadcast_rows(null_cond_, T) : constant(cond_mat);
  Var x = in_proj_(concat_cols(state, cond));
  Var temb = silu(time_embedding(t));

  const Eigen::MatrixXd mask = build_attention_mask(t_e, t_m);
  Eigen::MatrixXd mask_stacked(cfg_.n_heads * T, T);
  for (int h = 0; h < cfg_.n_heads; ++h) mask_stacked.middleRows(h * T, T) = mask;

  const int E = cfg_.embed_dim;
  for (const Block& b : blocks_) {
    Var mod = b.ada(temb);  // 1 x 6E
    Var sh_a = slice_cols(mod, 0, E);
    Var sc_a = slice_cols(mod, E, E);
    Var g_a = slice_cols(mod, 2 * E, E);
    Var sh_m = slice_cols(mod, 3 * E, E);
    Var sc_m = slice_cols(mod, 4 * E, E);
    Var g_m = slice_cols(mod, 5 * E, E);

    Var h = modulate(layer_norm_rows(x), sh_a, sc_a);
    Var q = rope(b.wq(h), cfg_.n_heads);
    Var k = rope(b.wk(h), cfg_.n_heads);
    Var v = b.wv(h);
    Var probs = masked_softmax_rows(attention_scores(q, k, cfg_.n_heads), mask_stacked);
    Var attn = b.wo(attention_apply(probs, v, cfg_.n_heads));
    x = add(x, mul(attn, broadcast_rows(g_a, T)));

    Var m = modulate(layer_norm_rows(x), sh_m, sc_m);
    Var ff = b.ff2(gelu(b.ff1(m)));
    x = add(x, mul(ff, broadcast_rows(g_m, T)));
  }

  Var fmod = final_ada_(temb);
  Var h = modulate(layer_norm_rows(x), slice_cols(fmod, 0, E), slice_cols(fmod, E, E));
  return out_proj_(h);
}

Eigen::MatrixXd FlowModel::velocity(const FlowState& state, const ConditioningInput& cond) {
  NoGradGuard ng(params_);
  const int t_e = cond.enrollment_mel.n_frames();
  const int t_m = cond.mixed_mel.n_frames();
  Eigen::MatrixXd cmat = cond.dropped ? Eigen::MatrixXd() : conditioning_matrix(cond);
  Var out = forward(constant(state.values), state.time, cmat, t_e, t_m, cond.dropped);
  return out->value;
}

Eigen::MatrixXd FlowModel::normalize_mel(const Eigen::MatrixXd& log_mel_frames) const {
  return (log_mel_frames.array() - cfg_.mel_mean) / cfg_.mel_std;
}

Eigen::MatrixXd FlowModel::denormalize_mel(const Eigen::MatrixXd& model_frames) const {
  return model_frames.array() * cfg_.mel_std + cfg_.mel_mean;
}

Eigen::MatrixXd FlowModel::conditioning_matrix(const ConditioningInput& cond) const {
  if (cond.enrollment_mel.frames.cols() != cfg_.mel_dim ||
      cond.mixed_mel.frames.cols() != cfg_.mel_dim)
    throw std::invalid_argument("conditioning_matrix: mel dim mismatch");
  if (cond.enrollment_mel.n_frames() < 1 || cond.mixed_mel.n_frames() < 1)
    throw std::invalid_argument("conditioning_matrix: empty conditioning segment");
  Eigen::MatrixXd out(cond.enrollment_mel.n_frames() + cond.mixed_mel.n_frames(), cfg_.mel_dim);
  out << normalize_mel(cond.enrollment_mel.frames), normalize_mel(cond.mixed_mel.frames);
  return out;
}

}  // namespace flowtse
