#pragma once

#include <complex>
#include <functional>
#include <optional>

#include "flowtse/checkpoint.hpp"
#include "flowtse/config.hpp"
#include "flowtse/dsp.hpp"
#include "flowtse/mixture.hpp"
#include "flowtse/nn_ops.hpp"

namespace flowtse {

struct PhaseHeadOutput {
  Eigen::MatrixXcd alpha;  // F x T
  Eigen::MatrixXcd beta;   // F x T
  ComplexSpectrogram s_p;  // predicted STFT
  ComplexSpectrogram s_out;  // alpha .* s_m + beta .* s_p
};

// Raw per-frame STFT features: [normalized log-magnitude | cos phase |
// sin phase], T x 3F.
Eigen::MatrixXd stft_features_raw(const ComplexSpectrogram& s);

// Mel-to-waveform model conditioned on the mixed signal's complex STFT:
// conv blocks over mel frames interleaved with cross-attention onto
// STFT features, and a complex head s_out = alpha .* s_m + beta .* s_p.
// Zero-initialized head makes the untrained model an exact s_m
// pass-through.
class PhaseVocoder {
 public:
  PhaseVocoder(const VocoderConfig& cfg, const FeatureConfig& feat, uint64_t init_seed);

  struct ForwardGraph {
    ag::Var waveform;  // 1 x out_len
    // all T x F
    ag::Var alpha_re, alpha_im, beta_re, beta_im;
    ag::Var sp_re, sp_im, sout_re, sout_im;
  };

  // Graph-building forward; mel is log-mel of the clean/extracted
  // speech, s_m the mixed STFT at identical frame positions.
  ForwardGraph forward(const MelSpectrogram& mel, const ComplexSpectrogram& s_m,
                       size_t out_len);

  // Inference wrapper (no gradients).
  std::pair<Waveform, PhaseHeadOutput> vocode(const MelSpectrogram& mel,
                                              const ComplexSpectrogram& s_m, size_t out_len);

  // Projected cross-attention memory, T x C.
  ag::Var stft_feature_encode(const ComplexSpectrogram& s_m);

  // Test hook: force constant complex coefficients in place of the
  // learned per-bin alpha/beta maps.
  void set_head_override(std::optional<std::complex<double>> alpha,
                         std::optional<std::complex<double>> beta) {
    alpha_override_ = alpha;
    beta_override_ = beta;
  }

  ag::ParamStore& params() { return params_; }
  const VocoderConfig& config() const { return cfg_; }
  const FeatureConfig& feature_config() const { return feat_; }

 private:
  VocoderConfig cfg_;
  FeatureConfig feat_;
  ag::ParamStore params_;
  std::optional<std::complex<double>> alpha_override_, beta_override_;

  struct ConvBlock {
    ag::Var conv_w, conv_b;  // K x C, 1 x C
    ag::Linear ff1, ff2;
    bool has_cross = false;
    ag::Linear wq, wk, wv, wo;
  };
  ag::Linear mel_proj_;   // d -> C
  ag::Linear stft_proj_;  // 3F -> C
  std::vector<ConvBlock> blocks_;
  ag::Linear head_;  // C -> 7F, zero-init
};

// Negative SI-SDR (uncapped, differentiable) between a graph waveform
// and a reference.
ag::Var neg_si_sdr_graph(const ag::Var& estimate, const Waveform& reference);

struct VocoderTrainResult {
  std::vector<double> losses;
  std::string final_checkpoint;
};

// Independent vocoder training on (clean mel, mixed STFT) pairs with
// the SI-SDR objective. One optimizer step per pass over the batch.
VocoderTrainResult train_vocoder(const DatasetManifest& manifest, PhaseVocoder& vocoder,
                                 const TrainConfig& cfg, const std::string& out_dir,
                                 const std::function<bool(int, double)>& stop = nullptr);

}  // namespace flowtse
