#include "flowtse/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace flowtse {

Eigen::MatrixXd integrate_field(const VelocityFn& u, const Eigen::MatrixXd& x0,
                                const SamplerConfig& cfg) {
  if (cfg.n_steps < 1) throw std::invalid_argument("integrate_field: n_steps must be >= 1");
  const bool midpoint = cfg.method == "midpoint";
  if (!midpoint && cfg.method != "euler")
    throw std::invalid_argument("integrate_field: unknown method " + cfg.method);

  const double dt = 1.0 / cfg.n_steps;
  Eigen::MatrixXd x = x0;
  for (int i = 0; i < cfg.n_steps; ++i) {
    const double t = i * dt;
    if (midpoint) {
      Eigen::MatrixXd k1 = u(x, t);
      Eigen::MatrixXd xm = x + 0.5 * dt * k1;
      x += dt * u(xm, t + 0.5 * dt);
    } else {
      x += dt * u(x, t);
    }
    if (!x.allFinite())
      throw std::runtime_error("integrate_field: non-finite state after step " +
                               std::to_string(i));
  }
  return x;
}

Eigen::MatrixXd guided_velocity(FlowModel& model, const FlowState& state,
                                const ConditioningInput& cond, double w) {
  ConditioningInput conditional = cond;
  conditional.dropped = false;
  if (w == 1.0) return model.velocity(state, conditional);
  ConditioningInput unconditional = cond;
  unconditional.dropped = true;
  Eigen::MatrixXd u_u = model.velocity(state, unconditional);
  if (w == 0.0) return u_u;
  Eigen::MatrixXd u_c = model.velocity(state, conditional);
  return u_u + w * (u_c - u_u);
}

MelSpectrogram integrate(FlowModel& model, const ConditioningInput& cond,
                         const SamplerConfig& cfg) {
  const int t_e = cond.enrollment_mel.n_frames();
  const int t_m = cond.mixed_mel.n_frames();
  const int d = model.config().mel_dim;

  Rng rng(cfg.seed);
  Eigen::MatrixXd x0(t_e + t_m, d);
  for (int r = 0; r < x0.rows(); ++r)
    for (int c = 0; c < d; ++c) x0(r, c) = rng.normal();

  auto u = [&](const Eigen::MatrixXd& x, double t) {
    FlowState st{x, t};
    return guided_velocity(model, st, cond, cfg.cfg_scale);
  };
  Eigen::MatrixXd terminal = integrate_field(u, x0, cfg);

  MelSpectrogram out;
  out.frames = model.denormalize_mel(terminal);
  out.n_mels = d;
  out.hop = model.feature_config().hop;
  out.sample_rate = model.feature_config().sample_rate;
  return out;
}

MelSpectrogram extract(FlowModel& model, const Waveform& enrollment, const Waveform& mixed,
                       const SamplerConfig& cfg) {
  ConditioningInput cond;
  cond.enrollment_mel = log_mel(enrollment, model.feature_config());
  cond.mixed_mel = log_mel(mixed, model.feature_config());
  MelSpectrogram full = integrate(model, cond, cfg);

  MelSpectrogram out;
  out.frames = full.frames.bottomRows(cond.mixed_mel.n_frames());
  out.n_mels = full.n_mels;
  out.hop = full.hop;
  out.sample_rate = full.sample_rate;
  return out;
}

}  // namespace flowtse
