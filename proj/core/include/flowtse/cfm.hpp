#pragma once

#include <functional>
#include <vector>

#include "flowtse/flow_model.hpp"
#include "flowtse/mixture.hpp"

namespace flowtse {

// One draw on the optimal-transport path x_t = (1-t) x0 + t x1 with
// x0 ~ N(0, I).
struct PathSample {
  Eigen::MatrixXd x0;
  Eigen::MatrixXd x1;
  Eigen::MatrixXd xt;
  double t = 0.0;
};

PathSample make_path_sample(const Eigen::MatrixXd& x1, double t, Rng& rng);

// MSE between velocity_pred and (x1 - x0) over unmasked frames (rows)
// and all channels. Throws when the mask selects nothing.
double cfm_loss(const Eigen::MatrixXd& velocity_pred, const PathSample& sample,
                const std::vector<bool>& frame_mask);
ag::Var cfm_loss_graph(const ag::Var& velocity_pred, const PathSample& sample,
                       const std::vector<bool>& frame_mask);

// Greedy sequential packing under a total-frame budget; returns index
// batches. Throws naming any single example over budget.
std::vector<std::vector<int>> batch_by_frames(const std::vector<int>& frames_per_example,
                                              int batch_frames);

// A dataset row with features precomputed in model units.
struct FlowExample {
  std::string id;
  Eigen::MatrixXd cond;  // (t_e+t_m) x d conditioning
  Eigen::MatrixXd x1;    // (t_e+t_m) x d regression endpoint
  int t_e = 0;
  int t_m = 0;
};

std::vector<FlowExample> load_flow_examples(const DatasetManifest& manifest,
                                            const FlowModel& model);

struct TrainResult {
  std::vector<double> losses;  // one per step
  std::string final_checkpoint;
};

// Full CFM training loop: per-step batch, t ~ U[0,1] per example,
// condition dropout, masked loss on the mixed region, AdamW under
// linear warmup + linear decay. Writes loss_log.csv and periodic
// checkpoints to out_dir. stop(step, loss) may end training early.
TrainResult train_flow(const std::vector<FlowExample>& examples, FlowModel& model,
                       const TrainConfig& cfg, const std::string& out_dir,
                       const std::function<bool(int, double)>& stop = nullptr);

// Linear warmup to lr_peak, then linear decay to zero.
double lr_at_step(const TrainConfig& cfg, int step);

}  // namespace flowtse
