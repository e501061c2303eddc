#include <cmath>
#include <complex>

#include "doctest.h"
#include "flowtse/vocoder.hpp"

using namespace flowtse;

namespace {

FeatureConfig small_features() {
  FeatureConfig f;
  f.n_fft = 64;
  f.hop = 16;
  f.n_mels = 8;
  return f;
}

VocoderConfig small_vocoder() {
  VocoderConfig v;
  v.n_blocks = 2;
  v.channels = 16;
  v.cross_attn_every = 1;
  v.n_heads = 2;
  v.conv_kernel = 3;
  v.n_fft = 64;
  v.hop = 16;
  return v;
}

Waveform random_wave(size_t n, uint64_t seed) {
  Rng rng(seed);
  Waveform w;
  w.sample_rate = 24000;
  w.samples.resize(n);
  for (auto& s : w.samples) s = rng.uniform(-0.5, 0.5);
  return w;
}

void jitter_params(ag::ParamStore& ps, uint64_t seed, double scale = 0.02) {
  Rng rng(seed);
  for (auto& [name, p] : ps.params)
    for (int i = 0; i < p->value.rows(); ++i)
      for (int j = 0; j < p->value.cols(); ++j) p->value(i, j) += scale * rng.normal();
}

}  // namespace

TEST_CASE("stft feature matrix: shape, unit phase, magnitude normalization") {
  FeatureConfig feat = small_features();
  Waveform w = random_wave(400, 1);
  auto s = stft(w, feat.n_fft, feat.hop);
  Eigen::MatrixXd feats = stft_features_raw(s);
  const int F = s.n_bins();
  REQUIRE(feats.rows() == s.n_frames());
  REQUIRE(feats.cols() == 3 * F);
  for (int t = 0; t < feats.rows(); ++t)
    for (int f = 0; f < F; ++f) {
      double c = feats(t, F + f), si = feats(t, 2 * F + f);
      CHECK(c * c + si * si == doctest::Approx(1.0).epsilon(1e-9));
      // log-magnitude standardization is invertible
      double mag = std::exp(feats(t, f) * 4.0 - 6.0);
      CHECK(mag == doctest::Approx(std::max(std::abs(s.bins(f, t)), 1e-8)).epsilon(1e-9));
    }
  // zero spectrogram: floored magnitude, phase fixed at (1, 0)
  ComplexSpectrogram z;
  z.bins = Eigen::MatrixXcd::Zero(F, 3);
  z.n_fft = feat.n_fft;
  z.hop = feat.hop;
  Eigen::MatrixXd zf = stft_features_raw(z);
  CHECK(zf(0, 0) == doctest::Approx((std::log(1e-8) + 6.0) / 4.0).epsilon(1e-12));
  CHECK(zf(1, F + 2) == doctest::Approx(1.0));
  CHECK(zf(1, 2 * F + 2) == doctest::Approx(0.0));
}

TEST_CASE("untrained vocoder is an exact mixture pass-through") {
  FeatureConfig feat = small_features();
  PhaseVocoder voc(small_vocoder(), feat, 5);
  Waveform mixed = random_wave(600, 2);
  auto s_m = stft(mixed, feat.n_fft, feat.hop);
  MelSpectrogram mel = log_mel(mixed, feat);
  auto [wave, head] = voc.vocode(mel, s_m, mixed.samples.size());
  // zero-init head: alpha = 1, beta = 0, so s_out == s_m bit-for-bit
  CHECK((head.alpha - Eigen::MatrixXcd::Ones(s_m.n_bins(), s_m.n_frames())).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(head.beta.cwiseAbs().maxCoeff() == 0.0);
  CHECK((head.s_out.bins - s_m.bins).cwiseAbs().maxCoeff() == 0.0);
  // waveform equals the iSTFT of the mixture, i.e. near the mixture itself
  Waveform ref = istft(s_m, mixed.samples.size());
  for (size_t i = 0; i < mixed.samples.size(); ++i)
    CHECK(std::abs(wave.samples[i] - ref.samples[i]) < 1e-12);
  for (size_t i = feat.n_fft; i + feat.n_fft < mixed.samples.size(); ++i)
    CHECK(std::abs(wave.samples[i] - mixed.samples[i]) < 1e-6);
}

TEST_CASE("head override alpha=1, beta=0 reproduces the mixture") {
  FeatureConfig feat = small_features();
  PhaseVocoder voc(small_vocoder(), feat, 6);
  jitter_params(voc.params(), 7);  // trained-ish weights; override must still win
  Waveform mixed = random_wave(512, 3);
  auto s_m = stft(mixed, feat.n_fft, feat.hop);
  MelSpectrogram mel = log_mel(mixed, feat);
  voc.set_head_override(std::complex<double>(1.0, 0.0), std::complex<double>(0.0, 0.0));
  auto [wave, head] = voc.vocode(mel, s_m, mixed.samples.size());
  for (size_t i = feat.n_fft; i + feat.n_fft < mixed.samples.size(); ++i)
    CHECK(std::abs(wave.samples[i] - mixed.samples[i]) < 1e-6);
}

TEST_CASE("head override alpha=0, beta=1 passes the predicted STFT through") {
  FeatureConfig feat = small_features();
  PhaseVocoder voc(small_vocoder(), feat, 8);
  jitter_params(voc.params(), 9);
  Waveform mixed = random_wave(512, 4);
  auto s_m = stft(mixed, feat.n_fft, feat.hop);
  MelSpectrogram mel = log_mel(mixed, feat);
  voc.set_head_override(std::complex<double>(0.0, 0.0), std::complex<double>(1.0, 0.0));
  auto [wave, head] = voc.vocode(mel, s_m, mixed.samples.size());
  CHECK((head.s_out.bins - head.s_p.bins).cwiseAbs().maxCoeff() == 0.0);
  Waveform ref = istft(head.s_p, mixed.samples.size());
  for (size_t i = 0; i < wave.samples.size(); ++i)
    CHECK(std::abs(wave.samples[i] - ref.samples[i]) < 1e-10);
}

TEST_CASE("head algebra: s_out == alpha .* s_m + beta .* s_p bitwise") {
  FeatureConfig feat = small_features();
  PhaseVocoder voc(small_vocoder(), feat, 10);
  jitter_params(voc.params(), 11);
  Waveform mixed = random_wave(700, 5);
  auto s_m = stft(mixed, feat.n_fft, feat.hop);
  MelSpectrogram mel = log_mel(random_wave(700, 6), feat);
  auto [wave, head] = voc.vocode(mel, s_m, mixed.samples.size());
  Eigen::MatrixXcd expect =
      head.alpha.cwiseProduct(s_m.bins) + head.beta.cwiseProduct(head.s_p.bins);
  CHECK((head.s_out.bins - expect).cwiseAbs().maxCoeff() == 0.0);
  // s_p magnitudes positive, well-formed
  CHECK(head.s_p.bins.cwiseAbs().minCoeff() >= 0.0);
  CHECK(wave.samples.size() == mixed.samples.size());
}

TEST_CASE("forward rejects frame misalignment and geometry mismatch") {
  FeatureConfig feat = small_features();
  PhaseVocoder voc(small_vocoder(), feat, 12);
  Waveform mixed = random_wave(512, 7);
  auto s_m = stft(mixed, feat.n_fft, feat.hop);
  MelSpectrogram mel = log_mel(mixed, feat);
  MelSpectrogram shorter = mel;
  shorter.frames = mel.frames.topRows(mel.n_frames() - 1);
  CHECK_THROWS(voc.forward(shorter, s_m, mixed.samples.size()));
  auto bad_geom = stft(mixed, 32, 16);
  CHECK_THROWS(voc.forward(mel, bad_geom, mixed.samples.size()));
  VocoderConfig vc = small_vocoder();
  vc.hop = 32;  // disagrees with features
  CHECK_THROWS(PhaseVocoder(vc, feat, 0));
}

TEST_CASE("neg_si_sdr_graph value matches dsp::si_sdr") {
  Waveform ref = random_wave(400, 8);
  Waveform est = ref;
  Rng rng(9);
  for (auto& s : est.samples) s += 0.1 * rng.normal();
  ag::Mat est_m(1, est.samples.size());
  for (size_t i = 0; i < est.samples.size(); ++i) est_m(0, i) = est.samples[i];
  ag::Var loss = neg_si_sdr_graph(ag::constant(est_m), ref);
  CHECK(loss->value(0, 0) == doctest::Approx(-si_sdr(est, ref)).epsilon(1e-10));
  // scale invariance carries over
  ag::Var loss2 = neg_si_sdr_graph(ag::constant(ag::Mat(2.5 * est_m)), ref);
  CHECK(loss2->value(0, 0) == doctest::Approx(loss->value(0, 0)).epsilon(1e-10));
}

TEST_CASE("neg_si_sdr_graph gradient matches finite differences") {
  Waveform ref = random_wave(48, 10);
  Rng rng(11);
  ag::Mat est(1, 48);
  for (int i = 0; i < 48; ++i) est(0, i) = ref.samples[i] + 0.2 * rng.normal();
  ag::Var v = ag::leaf(est);
  ag::Var loss = neg_si_sdr_graph(v, ref);
  ag::backward(loss);
  const double h = 1e-7;
  for (int i = 0; i < 48; i += 5) {
    auto eval = [&](double d) {
      ag::Mat pert = est;
      pert(0, i) += d;
      return neg_si_sdr_graph(ag::constant(pert), ref)->value(0, 0);
    };
    double fd = (eval(h) - eval(-h)) / (2.0 * h);
    double an = v->grad(0, i);
    CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3}) < 1e-5);
  }
}

TEST_CASE("gradient flows through the full vocoder into the parameters") {
  FeatureConfig feat = small_features();
  PhaseVocoder voc(small_vocoder(), feat, 13);
  Waveform clean = random_wave(320, 12);
  Waveform mixed = random_wave(320, 13);
  auto s_m = stft(mixed, feat.n_fft, feat.hop);
  MelSpectrogram mel = log_mel(clean, feat);
  voc.params().zero_grads();
  auto g = voc.forward(mel, s_m, clean.samples.size());
  ag::Var loss = neg_si_sdr_graph(g.waveform, clean);
  ag::backward(loss);
  // the head receives gradient even at zero init
  const auto& hw = voc.params().get("head.w");
  REQUIRE(hw->grad.size() > 0);
  CHECK(hw->grad.cwiseAbs().maxCoeff() > 0.0);
}
