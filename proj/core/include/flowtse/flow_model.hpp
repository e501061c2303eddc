#pragma once

#include "flowtse/config.hpp"
#include "flowtse/dsp.hpp"
#include "flowtse/nn_ops.hpp"

namespace flowtse {

struct ConditioningInput {
  MelSpectrogram enrollment_mel;  // t_e x d
  MelSpectrogram mixed_mel;       // t_m x d
  bool dropped = false;           // classifier-free guidance condition dropout
};

struct FlowState {
  Eigen::MatrixXd values;  // (t_e + t_m) x d
  double time = 0.0;       // in [0, 1]
};

// Asymmetric self-attention mask: entry (q, k) is 1 iff the query may
// attend to the key. Mixed queries see everything; enrollment queries
// see only enrollment keys.
Eigen::MatrixXd build_attention_mask(int t_e, int t_m);

// Velocity-field network: transformer blocks with adaLN-zero time
// modulation, rotary positions over the concatenated axis, and the
// asymmetric enrollment/mixed mask.
class FlowModel {
 public:
  FlowModel(const ModelConfig& cfg, const FeatureConfig& feat, uint64_t init_seed);

  // Graph-building forward for training. state is (t_e+t_m) x d in
  // normalized mel units; cond_mat likewise unless dropped.
  ag::Var forward(const ag::Var& state, double t, const Eigen::MatrixXd& cond_mat, int t_e,
                  int t_m, bool dropped);

  // Value-only forward (no gradient graph) for sampling.
  Eigen::MatrixXd velocity(const FlowState& state, const ConditioningInput& cond);

  // Sinusoidal t embedding through the model's FFN; throws for t outside
  // [0, 1]. Returns 1 x embed_dim.
  ag::Var time_embedding(double t);

  // normalized model units <-> log-mel
  Eigen::MatrixXd normalize_mel(const Eigen::MatrixXd& log_mel_frames) const;
  Eigen::MatrixXd denormalize_mel(const Eigen::MatrixXd& model_frames) const;

  // [enroll; mixed] conditioning matrix in model units
  Eigen::MatrixXd conditioning_matrix(const ConditioningInput& cond) const;

  ag::ParamStore& params() { return params_; }
  const ag::ParamStore& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  const FeatureConfig& feature_config() const { return feat_; }

 private:
  ModelConfig cfg_;
  FeatureConfig feat_;
  ag::ParamStore params_;

  struct Block {
    ag::Linear ada;  // E -> 6E, zero-init
    ag::Linear wq, wk, wv, wo;
    ag::Linear ff1, ff2;
  };
  ag::Var null_cond_;  // 1 x d learned null conditioning
  ag::Linear in_proj_;  // 2d -> E
  ag::Linear t_ff1_, t_ff2_;
  std::vector<Block> blocks_;
  ag::Linear final_ada_;  // E -> 2E, zero-init
  ag::Linear out_proj_;   // E -> d, zero-init
};

// RAII guard that disables gradient tracking for a parameter store.
class NoGradGuard {
 public:
  explicit NoGradGuard(ag::ParamStore& ps) : ps_(ps) {
    for (auto& [_, p] : ps_.params) p->requires_grad = false;
  }
  ~NoGradGuard() {
    for (auto& [_, p] : ps_.params) p->requires_grad = true;
  }

 private:
  ag::ParamStore& ps_;
};

}  // namespace flowtse
