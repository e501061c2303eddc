#include "flowtse/vocoder.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "flowtse/cfm.hpp"         // lr_at_step
#include "flowtse/flow_model.hpp"  // NoGradGuard
#include "flowtse/wav.hpp"

namespace fs = std::filesystem;

namespace flowtse {

using namespace ag;

namespace {
constexpr double kMagFloor = 1e-8;
constexpr double kMelMean = -6.0, kMelStd = 4.0;  // fixed input standardization
}  // namespace

Eigen::MatrixXd stft_features_raw(const ComplexSpectrogram& s) {
  const int F = s.n_bins();
  const int T = s.n_frames();
  Eigen::MatrixXd out(T, 3 * F);
  for (int t = 0; t < T; ++t)
    for (int f = 0; f < F; ++f) {
      const std::complex<double> v = s.bins(f, t);
      const double mag = std::abs(v);
      out(t, f) = (std::log(std::max(mag, kMagFloor)) - kMelMean) / kMelStd;
      const double phase = std::atan2(v.imag(), v.real());
      out(t, F + f) = std::cos(phase);
      out(t, 2 * F + f) = std::sin(phase);
    }
  return out;
}

PhaseVocoder::PhaseVocoder(const VocoderConfig& cfg, const FeatureConfig& feat,
                           uint64_t init_seed)
    : cfg_(cfg), feat_(feat) {
  if (cfg_.n_fft != feat_.n_fft || cfg_.hop != feat_.hop)
    throw std::invalid_argument("PhaseVocoder: STFT geometry must match feature config");
  Rng rng(init_seed);
  const int C = cfg_.channels;
  const int F = cfg_.n_fft / 2 + 1;

  mel_proj_ = Linear::create(params_, "mel_proj", feat_.n_mels, C, rng);
  stft_proj_ = Linear::create(params_, "stft_proj", 3 * F, C, rng);
  blocks_.resize(cfg_.n_blocks);
  for (int i = 0; i < cfg_.n_blocks; ++i) {
    const std::string p = "block" + std::to_string(i);
    ConvBlock& b = blocks_[i];
    b.conv_w = params_.add(p + ".conv.w", dense_init(cfg_.conv_kernel, C, rng));
    b.conv_b = params_.add(p + ".conv.b", Mat::Zero(1, C));
    b.ff1 = Linear::create(params_, p + ".ff1", C, 2 * C, rng);
    b.ff2 = Linear::create(params_, p + ".ff2", 2 * C, C, rng);
    b.has_cross = cfg_.cross_attn_every > 0 && (i % cfg_.cross_attn_every == 0);
    if (b.has_cross) {
      b.wq = Linear::create(params_, p + ".cross.wq", C, C, rng);
      b.wk = Linear::create(params_, p + ".cross.wk", C, C, rng);
      b.wv = Linear::create(params_, p + ".cross.wv", C, C, rng);
      b.wo = Linear::create(params_, p + ".cross.wo", C, C, rng);
    }
  }
  head_ = Linear::create(params_, "head", C, 7 * F, rng, /*zero_init=*/true);
}

Var PhaseVocoder::stft_feature_encode(const ComplexSpectrogram& s_m) {
  return stft_proj_(constant(stft_features_raw(s_m)));
}

PhaseVocoder::ForwardGraph PhaseVocoder::forward(const MelSpectrogram& mel,
                                                 const ComplexSpectrogram& s_m,
                                                 size_t out_len) {
  const int T = mel.n_frames();
  if (s_m.n_frames() != T)
    throw std::invalid_argument("PhaseVocoder::forward: frame misalignment, mel has " +
                                std::to_string(T) + " frames, STFT has " +
                                std::to_string(s_m.n_frames()));
  if (s_m.n_fft != cfg_.n_fft || s_m.hop != cfg_.hop)
    throw std::invalid_argument("PhaseVocoder::forward: STFT geometry mismatch");
  const int F = cfg_.n_fft / 2 + 1;
  const int C = cfg_.channels;

  Mat mel_norm = (mel.frames.array() - kMelMean) / kMelStd;
  Var x = mel_proj_(constant(mel_norm));
  Var kv = stft_feature_encode(s_m);

  const Eigen::MatrixXd all_ones = Eigen::MatrixXd::Ones(cfg_.n_heads * T, T);
  for (const ConvBlock& b : blocks_) {
    Var h = conv1d_depthwise(x, b.conv_w, b.conv_b);
    h = layer_norm_rows(h);
    h = b.ff2(gelu(b.ff1(h)));
    x = add(x, h);
    if (b.has_cross) {
      Var q = b.wq(layer_norm_rows(x));
      Var k = b.wk(kv);
      Var v = b.wv(kv);
      Var probs = masked_softmax_rows(attention_scores(q, k, cfg_.n_heads), all_ones);
      x = add(x, b.wo(attention_apply(probs, v, cfg_.n_heads)));
    }
  }

  Var out = head_(layer_norm_rows(x));  // T x 7F
  Var mag = exp(slice_cols(out, 0, F));
  Var pcos = add_scalar(slice_cols(out, F, F), 1.0);
  Var psin = slice_cols(out, 2 * F, F);
  // unit-circle phase; (cos,sin) parameterization avoids angle wrapping
  Var pnorm = sqrt(add_scalar(add(square(pcos), square(psin)), 1e-9));
  Var sp_re = mul(mag, div(pcos, pnorm));
  Var sp_im = mul(mag, div(psin, pnorm));

  Var a_re, a_im, b_re, b_im;
  if (alpha_override_) {
    a_re = constant(Mat::Constant(T, F, alpha_override_->real()));
    a_im = constant(Mat::Constant(T, F, alpha_override_->imag()));
  } else {
    a_re = add_scalar(slice_cols(out, 3 * F, F), 1.0);  // starts as pass-through
    a_im = slice_cols(out, 4 * F, F);
  }
  if (beta_override_) {
    b_re = constant(Mat::Constant(T, F, beta_override_->real()));
    b_im = constant(Mat::Constant(T, F, beta_override_->imag()));
  } else {
    b_re = slice_cols(out, 5 * F, F);
    b_im = slice_cols(out, 6 * F, F);
  }

  Var sm_re = constant(s_m.bins.real().transpose());  // T x F
  Var sm_im = constant(s_m.bins.imag().transpose());
  Var so_re = add(sub(mul(a_re, sm_re), mul(a_im, sm_im)),
                  sub(mul(b_re, sp_re), mul(b_im, sp_im)));
  Var so_im = add(add(mul(a_re, sm_im), mul(a_im, sm_re)),
                  add(mul(b_re, sp_im), mul(b_im, sp_re)));

  ForwardGraph g;
  g.alpha_re = a_re;
  g.alpha_im = a_im;
  g.beta_re = b_re;
  g.beta_im = b_im;
  g.sp_re = sp_re;
  g.sp_im = sp_im;
  g.sout_re = so_re;
  g.sout_im = so_im;
  g.waveform = istft_op(so_re, so_im, cfg_.n_fft, cfg_.hop, static_cast<int>(out_len));
  (void)C;
  return g;
}

std::pair<Waveform, PhaseHeadOutput> PhaseVocoder::vocode(const MelSpectrogram& mel,
                                                          const ComplexSpectrogram& s_m,
                                                          size_t out_len) {
  NoGradGuard ng(params_);
  ForwardGraph g = forward(mel, s_m, out_len);

  Waveform w;
  w.sample_rate = feat_.sample_rate;
  w.samples.assign(val(g.waveform).data(), val(g.waveform).data() + out_len);

  auto to_cplx = [](const Mat& re, const Mat& im) {
    Eigen::MatrixXcd m(re.cols(), re.rows());  // F x T
    for (Eigen::Index t = 0; t < re.rows(); ++t)
      for (Eigen::Index f = 0; f < re.cols(); ++f) m(f, t) = {re(t, f), im(t, f)};
    return m;
  };
  PhaseHeadOutput head;
  head.alpha = to_cplx(val(g.alpha_re), val(g.alpha_im));
  head.beta = to_cplx(val(g.beta_re), val(g.beta_im));
  head.s_p.bins = to_cplx(val(g.sp_re), val(g.sp_im));
  head.s_p.n_fft = cfg_.n_fft;
  head.s_p.hop = cfg_.hop;
  head.s_out.bins = to_cplx(val(g.sout_re), val(g.sout_im));
  head.s_out.n_fft = cfg_.n_fft;
  head.s_out.hop = cfg_.hop;
  return {std::move(w), std::move(head)};
}

Var neg_si_sdr_graph(const Var& estimate, const Waveform& reference) {
  const auto n = static_cast<Eigen::Index>(reference.samples.size());
  if (val(estimate).size() != n)
    throw std::invalid_argument("neg_si_sdr_graph: length mismatch");
  Mat ref(1, n);
  for (Eigen::Index i = 0; i < n; ++i) ref(0, i) = reference.samples[i];
  const double ref_sq = ref.squaredNorm();
  if (ref_sq <= 0.0) throw std::invalid_argument("neg_si_sdr_graph: zero reference");

  Var ref_c = constant(ref);
  Var dot = sum(mul(estimate, ref_c));
  Var alpha = scale(dot, 1.0 / ref_sq);
  Var target = mul_scalar_var(ref_c, alpha);
  Var err = sub(target, estimate);
  Var ratio = div(sum(square(target)), add_scalar(sum(square(err)), 1e-30));
  return scale(log(ratio), -10.0 / std::log(10.0));
}

VocoderTrainResult train_vocoder(const DatasetManifest& manifest, PhaseVocoder& vocoder,
                                 const TrainConfig& cfg, const std::string& out_dir,
                                 const std::function<bool(int, double)>& stop) {
  if (manifest.rows.empty()) throw std::invalid_argument("train_vocoder: empty manifest");
  fs::create_directories(out_dir);
  const FeatureConfig& feat = vocoder.feature_config();

  struct Item {
    std::string id;
    MelSpectrogram clean_mel;
    ComplexSpectrogram s_m;
    Waveform clean;
  };
  std::vector<Item> items;
  for (const auto& row : manifest.rows) {
    Item it;
    it.id = row.id;
    it.clean = load_audio(row.target, feat.sample_rate);
    Waveform mixed = load_audio(row.mixed, feat.sample_rate);
    it.clean_mel = log_mel(it.clean, feat);
    it.s_m = stft(mixed, feat.n_fft, feat.hop);
    items.push_back(std::move(it));
  }

  AdamW opt(vocoder.params(), cfg.weight_decay, cfg.grad_clip);
  std::ofstream log(fs::path(out_dir) / "loss_log.csv");
  log << "step,loss,lr\n";

  VocoderTrainResult result;
  for (int step = 1; step <= cfg.total_steps; ++step) {
    vocoder.params().zero_grads();
    double loss_acc = 0.0;
    for (const Item& it : items) {
      auto g = vocoder.forward(it.clean_mel, it.s_m, it.clean.samples.size());
      Var loss = scale(neg_si_sdr_graph(g.waveform, it.clean),
                       1.0 / static_cast<double>(items.size()));
      backward(loss);
      loss_acc += val(loss)(0, 0) * items.size();
    }
    const double loss = loss_acc / items.size();
    if (!std::isfinite(loss))
      throw std::runtime_error("train_vocoder: non-finite loss at step " +
                               std::to_string(step));
    const double lr = lr_at_step(cfg, step);
    opt.step(lr);
    result.losses.push_back(loss);
    log << step << "," << loss << "," << lr << "\n";
    if (stop && stop(step, loss)) break;
  }

  result.final_checkpoint = (fs::path(out_dir) / "vocoder_final.ckpt").string();
  save_checkpoint(result.final_checkpoint, "vocoder",
                  static_cast<int64_t>(result.losses.size()), feat,
                  vocoder_config_to_json(vocoder.config()), vocoder.params());
  return result;
}

}  // namespace flowtse
