#include "flowtse/cfm.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "flowtse/checkpoint.hpp"
#include "flowtse/wav.hpp"

namespace fs = std::filesystem;

namespace flowtse {

PathSample make_path_sample(const Eigen::MatrixXd& x1, double t, Rng& rng) {
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("make_path_sample: t outside [0,1]");
  PathSample s;
  s.x1 = x1;
  s.t = t;
  s.x0.resize(x1.rows(), x1.cols());
  for (Eigen::Index r = 0; r < x1.rows(); ++r)
    for (Eigen::Index c = 0; c < x1.cols(); ++c) s.x0(r, c) = rng.normal();
  s.xt = (1.0 - t) * s.x0 + t * s.x1;
  return s;
}

namespace {

Eigen::MatrixXd mask_matrix(const std::vector<bool>& frame_mask, Eigen::Index rows,
                            Eigen::Index cols, Eigen::Index& n_unmasked) {
  if (static_cast<Eigen::Index>(frame_mask.size()) != rows)
    throw std::invalid_argument("cfm_loss: mask length mismatch");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, cols);
  n_unmasked = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    if (frame_mask[r]) {
      m.row(r).setOnes();
      ++n_unmasked;
    }
  if (n_unmasked == 0) throw std::invalid_argument("cfm_loss: empty frame mask");
  return m;
}

}  // namespace

double cfm_loss(const Eigen::MatrixXd& velocity_pred, const PathSample& sample,
                const std::vector<bool>& frame_mask) {
  if (velocity_pred.rows() != sample.x1.rows() || velocity_pred.cols() != sample.x1.cols())
    throw std::invalid_argument("cfm_loss: shape mismatch");
  Eigen::Index n_unmasked = 0;
  Eigen::MatrixXd m =
      mask_matrix(frame_mask, velocity_pred.rows(), velocity_pred.cols(), n_unmasked);
  Eigen::MatrixXd diff = (velocity_pred - (sample.x1 - sample.x0)).cwiseProduct(m);
  return diff.squaredNorm() / static_cast<double>(n_unmasked * velocity_pred.cols());
}

ag::Var cfm_loss_graph(const ag::Var& velocity_pred, const PathSample& sample,
                       const std::vector<bool>& frame_mask) {
  const auto& v = ag::val(velocity_pred);
  if (v.rows() != sample.x1.rows() || v.cols() != sample.x1.cols())
    throw std::invalid_argument("cfm_loss: shape mismatch");
  Eigen::Index n_unmasked = 0;
  Eigen::MatrixXd m = mask_matrix(frame_mask, v.rows(), v.cols(), n_unmasked);
  ag::Var target = ag::constant(sample.x1 - sample.x0);
  ag::Var diff = ag::mul(ag::sub(velocity_pred, target), ag::constant(m));
  return ag::scale(ag::sum(ag::square(diff)),
                   1.0 / static_cast<double>(n_unmasked * v.cols()));
}

std::vector<std::vector<int>> batch_by_frames(const std::vector<int>& frames_per_example,
                                              int batch_frames) {
  std::vector<std::vector<int>> batches;
  std::vector<int> cur;
  int cur_frames = 0;
  for (int i = 0; i < static_cast<int>(frames_per_example.size()); ++i) {
    const int f = frames_per_example[i];
    if (f > batch_frames)
      throw std::invalid_argument("batch_by_frames: example " + std::to_string(i) + " has " +
                                  std::to_string(f) + " frames, budget is " +
                                  std::to_string(batch_frames));
    if (cur_frames + f > batch_frames) {
      batches.push_back(std::move(cur));
      cur.clear();
      cur_frames = 0;
    }
    cur.push_back(i);
    cur_frames += f;
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  return batches;
}

std::vector<FlowExample> load_flow_examples(const DatasetManifest& manifest,
                                            const FlowModel& model) {
  const FeatureConfig& feat = model.feature_config();
  std::vector<FlowExample> out;
  for (const auto& row : manifest.rows) {
    Waveform enroll = load_audio(row.enrollment, feat.sample_rate);
    Waveform mixed = load_audio(row.mixed, feat.sample_rate);
    Waveform target = load_audio(row.target, feat.sample_rate);
    MelSpectrogram em = log_mel(enroll, feat);
    MelSpectrogram mm = log_mel(mixed, feat);
    MelSpectrogram tm = log_mel(target, feat);
    if (tm.n_frames() != mm.n_frames())
      throw std::runtime_error("load_flow_examples: target/mixed frame mismatch for " + row.id);

    FlowExample ex;
    ex.id = row.id;
    ex.t_e = em.n_frames();
    ex.t_m = mm.n_frames();
    Eigen::MatrixXd en = model.normalize_mel(em.frames);
    ex.cond.resize(ex.t_e + ex.t_m, en.cols());
    ex.cond << en, model.normalize_mel(mm.frames);
    ex.x1.resize(ex.t_e + ex.t_m, en.cols());
    ex.x1 << en, model.normalize_mel(tm.frames);
    out.push_back(std::move(ex));
  }
  return out;
}

double lr_at_step(const TrainConfig& cfg, int step) {
  int warmup = cfg.warmup_steps >= 0 ? cfg.warmup_steps : cfg.total_steps / 10;
  warmup = std::max(warmup, 1);
  if (step <= warmup) return cfg.lr_peak * static_cast<double>(step) / warmup;
  const double frac = static_cast<double>(step - warmup) /
                      std::max(1, cfg.total_steps - warmup);
  return cfg.lr_peak * std::max(0.0, 1.0 - frac);
}

TrainResult train_flow(const std::vector<FlowExample>& examples, FlowModel& model,
                       const TrainConfig& cfg, const std::string& out_dir,
                       const std::function<bool(int, double)>& stop) {
  if (examples.empty()) throw std::invalid_argument("train_flow: no examples");
  fs::create_directories(out_dir);

  std::vector<int> frames;
  for (const auto& e : examples) frames.push_back(e.t_e + e.t_m);
  for (int f : frames)
    if (f > cfg.batch_frames)
      throw std::invalid_argument("train_flow: batch_frames smaller than longest example");

  Rng rng(cfg.seed);
  ag::AdamW opt(model.params(), cfg.weight_decay, cfg.grad_clip);

  std::ofstream log(fs::path(out_dir) / "loss_log.csv");
  log << "step,loss,lr,t_mean\n";

  TrainResult result;
  std::vector<int> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::vector<std::vector<int>> batches;
  size_t batch_cursor = 0;

  auto reshuffle = [&]() {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    std::vector<int> shuffled_frames;
    for (int i : order) shuffled_frames.push_back(frames[i]);
    auto idx_batches = batch_by_frames(shuffled_frames, cfg.batch_frames);
    batches.clear();
    for (const auto& b : idx_batches) {
      std::vector<int> mapped;
      for (int i : b) mapped.push_back(order[i]);
      batches.push_back(std::move(mapped));
    }
    batch_cursor = 0;
  };
  reshuffle();

  for (int step = 1; step <= cfg.total_steps; ++step) {
    if (batch_cursor >= batches.size()) reshuffle();
    const std::vector<int>& batch = batches[batch_cursor++];

    model.params().zero_grads();
    double loss_acc = 0.0, t_acc = 0.0;
    std::ostringstream diag;
    for (int idx : batch) {
      const FlowExample& ex = examples[idx];
      const double t = rng.uniform();
      const bool dropped = rng.uniform() < cfg.cond_drop_prob;
      PathSample ps = make_path_sample(ex.x1, t, rng);
      std::vector<bool> mask(ex.t_e + ex.t_m, false);
      for (int r = ex.t_e; r < ex.t_e + ex.t_m; ++r) mask[r] = true;

      ag::Var vel = model.forward(ag::constant(ps.xt), t, ex.cond, ex.t_e, ex.t_m, dropped);
      ag::Var loss = ag::scale(cfm_loss_graph(vel, ps, mask),
                               1.0 / static_cast<double>(batch.size()));
      ag::backward(loss);
      loss_acc += ag::val(loss)(0, 0) * batch.size();
      t_acc += t;
      diag << " " << ex.id << "(t=" << t << ")";
    }
    const double loss = loss_acc / batch.size();
    if (!std::isfinite(loss))
      throw std::runtime_error("train_flow: non-finite loss at step " + std::to_string(step) +
                               "; batch:" + diag.str());

    const double lr = lr_at_step(cfg, step);
    opt.step(lr);
    result.losses.push_back(loss);
    log << step << "," << loss << "," << lr << "," << (t_acc / batch.size()) << "\n";

    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)
      save_checkpoint((fs::path(out_dir) / ("ckpt_" + std::to_string(step) + ".bin")).string(),
                      "flow", step, model.feature_config(),
                      model_config_to_json(model.config()), model.params());
    if (stop && stop(step, loss)) break;
  }

  result.final_checkpoint = (fs::path(out_dir) / "model_final.ckpt").string();
  save_checkpoint(result.final_checkpoint, "flow",
                  static_cast<int64_t>(result.losses.size()), model.feature_config(),
                  model_config_to_json(model.config()), model.params());
  return result;
}

}  // namespace flowtse
