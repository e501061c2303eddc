#pragma once

#include <functional>

#include "flowtse/flow_model.hpp"

namespace flowtse {

using VelocityFn =
    std::function<Eigen::MatrixXd(const Eigen::MatrixXd& x, double t)>;

// Fixed-step integration of dx/dt = u(x, t) from t=0 to t=1 on a uniform
// grid. Throws with the step index if the state goes non-finite.
Eigen::MatrixXd integrate_field(const VelocityFn& u, const Eigen::MatrixXd& x0,
                                const SamplerConfig& cfg);

// u_uncond + w (u_cond - u_uncond); w=1 is the conditional field.
Eigen::MatrixXd guided_velocity(FlowModel& model, const FlowState& state,
                                const ConditioningInput& cond, double w);

// Full sampling pass: x0 ~ N(0,I) from cfg.seed, CFG-guided velocity,
// terminal state denormalized to log-mel units over t_e+t_m frames.
MelSpectrogram integrate(FlowModel& model, const ConditioningInput& cond,
                         const SamplerConfig& cfg);

// integrate + trim the enrollment region: returns the t_m x d extracted
// mel. Supplying the mixture as its own enrollment gives the speech
// enhancement mode.
MelSpectrogram extract(FlowModel& model, const Waveform& enrollment, const Waveform& mixed,
                       const SamplerConfig& cfg);

}  // namespace flowtse
