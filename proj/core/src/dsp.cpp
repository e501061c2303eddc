#include "flowtse/dsp.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <mutex>
#include <stdexcept>
#include <unordered_map>

namespace flowtse {

double Waveform::power() const {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return acc / static_cast<double>(samples.size());
}

void Waveform::check_finite(const std::string& what) const {
  for (double s : samples)
    if (!std::isfinite(s)) throw std::invalid_argument(what + ": non-finite sample");
}

int stft_num_frames(size_t n_samples, int hop) {
  return static_cast<int>((n_samples + hop - 1) / hop);
}

std::vector<double> hann_window_periodic(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  return w;
}

namespace {

// FFTW plan cache; plan creation is not thread-safe, execution on
// distinct buffers is.
struct FftPlans {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
  int n = 0;
};

std::mutex g_plan_mutex;

FftPlans& plans_for(int n) {
  static std::unordered_map<int, FftPlans> cache;
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  FftPlans p;
  p.n = n;
  std::vector<double> re(n);
  std::vector<std::complex<double>> cp(n / 2 + 1);
  p.r2c = fftw_plan_dft_r2c_1d(n, re.data(), reinterpret_cast<fftw_complex*>(cp.data()),
                               FFTW_ESTIMATE | FFTW_UNALIGNED);
  p.c2r = fftw_plan_dft_c2r_1d(n, reinterpret_cast<fftw_complex*>(cp.data()), re.data(),
                               FFTW_ESTIMATE | FFTW_UNALIGNED);
  return cache.emplace(n, p).first->second;
}

// reflect (no edge repeat), valid for any index given len >= 2
double sample_reflect(const std::vector<double>& x, long long idx) {
  const long long n = static_cast<long long>(x.size());
  if (n == 1) return x[0];
  while (idx < 0 || idx >= n) {
    if (idx < 0) idx = -idx;
    if (idx >= n) idx = 2 * (n - 1) - idx;
  }
  return x[static_cast<size_t>(idx)];
}

}  // namespace

ComplexSpectrogram stft(const Waveform& w, int n_fft, int hop) {
  if (w.samples.empty()) throw std::invalid_argument("stft: empty signal");
  if (n_fft <= 0 || hop <= 0) throw std::invalid_argument("stft: n_fft and hop must be positive");
  if (hop > n_fft) throw std::invalid_argument("stft: hop must not exceed n_fft");
  if (w.samples.size() < static_cast<size_t>(n_fft))
    throw std::invalid_argument("stft: signal shorter than one frame");
  w.check_finite("stft");

  const int n_bins = n_fft / 2 + 1;
  const int n_frames = stft_num_frames(w.samples.size(), hop);
  const std::vector<double> win = hann_window_periodic(n_fft);

  ComplexSpectrogram out;
  out.bins.resize(n_bins, n_frames);
  out.n_fft = n_fft;
  out.hop = hop;

  FftPlans& plans = plans_for(n_fft);
  std::vector<double> frame(n_fft);
  std::vector<std::complex<double>> spec(n_bins);
  for (int t = 0; t < n_frames; ++t) {
    const long long start = static_cast<long long>(t) * hop - n_fft / 2;
    for (int k = 0; k < n_fft; ++k)
      frame[k] = win[k] * sample_reflect(w.samples, start + k);
    fftw_execute_dft_r2c(plans.r2c, frame.data(),
                         reinterpret_cast<fftw_complex*>(spec.data()));
    for (int f = 0; f < n_bins; ++f) out.bins(f, t) = spec[f];
  }
  return out;
}

Waveform istft(const ComplexSpectrogram& s, size_t out_len, int sample_rate) {
  if (s.n_fft <= 0 || s.hop <= 0) throw std::invalid_argument("istft: bad geometry");
  if (s.n_bins() != s.n_fft / 2 + 1)
    throw std::invalid_argument("istft: bin count inconsistent with n_fft metadata");
  if (s.hop > s.n_fft) throw std::invalid_argument("istft: hop exceeds n_fft");

  const int n_fft = s.n_fft;
  const int hop = s.hop;
  const int n_frames = s.n_frames();
  const std::vector<double> win = hann_window_periodic(n_fft);

  const long long pad = n_fft / 2;
  const long long acc_len = static_cast<long long>(n_frames - 1) * hop + n_fft;
  std::vector<double> acc(acc_len, 0.0), wsum(acc_len, 0.0);

  FftPlans& plans = plans_for(n_fft);
  std::vector<std::complex<double>> spec(s.n_bins());
  std::vector<double> frame(n_fft);
  for (int t = 0; t < n_frames; ++t) {
    for (int f = 0; f < s.n_bins(); ++f) spec[f] = s.bins(f, t);
    fftw_execute_dft_c2r(plans.c2r, reinterpret_cast<fftw_complex*>(spec.data()),
                         frame.data());
    const long long base = static_cast<long long>(t) * hop;
    for (int k = 0; k < n_fft; ++k) {
      acc[base + k] += win[k] * frame[k] / n_fft;  // FFTW c2r is unnormalized
      wsum[base + k] += win[k] * win[k];
    }
  }

  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.assign(out_len, 0.0);
  for (size_t i = 0; i < out_len; ++i) {
    const long long j = static_cast<long long>(i) + pad;
    if (j >= 0 && j < acc_len && wsum[j] > 1e-12) out.samples[i] = acc[j] / wsum[j];
  }
  return out;
}

namespace {
double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }
}  // namespace

Eigen::MatrixXd mel_filterbank(int n_fft, int n_mels, int sample_rate) {
  const int n_bins = n_fft / 2 + 1;
  if (n_mels >= n_bins)
    throw std::invalid_argument("mel_filterbank: n_mels must be < n_fft/2 + 1");
  if (n_mels < 1) throw std::invalid_argument("mel_filterbank: n_mels must be positive");

  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    edges[i] = mel_to_hz(mel_max * i / (n_mels + 1));

  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      double v = 0.0;
      if (f > lo && f < center)
        v = (f - lo) / (center - lo);
      else if (f >= center && f < hi)
        v = (hi - f) / (hi - center);
      fb(m, k) = v;
    }
    if (fb.row(m).maxCoeff() <= 0.0)
      throw std::runtime_error("mel_filterbank: band " + std::to_string(m) +
                               " has no supporting FFT bin (too many bands for this n_fft)");
  }
  return fb;
}

std::vector<double> mel_band_centers_hz(int n_fft, int n_mels, int sample_rate) {
  (void)n_fft;
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(n_mels);
  for (int m = 0; m < n_mels; ++m)
    centers[m] = mel_to_hz(mel_max * (m + 1) / (n_mels + 1));
  return centers;
}

MelSpectrogram log_mel(const Waveform& w, const FeatureConfig& cfg) {
  if (w.sample_rate != cfg.sample_rate)
    throw std::invalid_argument("log_mel: waveform sample rate does not match feature config");
  ComplexSpectrogram s = stft(w, cfg.n_fft, cfg.hop);
  Eigen::MatrixXd mag = s.bins.cwiseAbs();
  Eigen::MatrixXd fb = mel_filterbank(cfg.n_fft, cfg.n_mels, cfg.sample_rate);
  Eigen::MatrixXd mel = (fb * mag).transpose();  // T x D

  MelSpectrogram out;
  out.frames = mel.cwiseMax(cfg.log_floor).array().log().matrix();
  out.n_mels = cfg.n_mels;
  out.hop = cfg.hop;
  out.sample_rate = cfg.sample_rate;
  return out;
}

std::pair<Waveform, double> mix_at_snr(const Waveform& signal, const Waveform& interference,
                                       double snr_db) {
  if (signal.samples.size() != interference.samples.size())
    throw std::invalid_argument("mix_at_snr: length mismatch");
  if (signal.sample_rate != interference.sample_rate)
    throw std::invalid_argument("mix_at_snr: sample rate mismatch");
  const double p_sig = signal.power();
  const double p_int = interference.power();
  if (p_int <= 0.0) throw std::invalid_argument("mix_at_snr: interference has zero power");
  if (p_sig <= 0.0) throw std::invalid_argument("mix_at_snr: signal has zero power");

  const double scale = std::sqrt(p_sig / p_int) * std::pow(10.0, -snr_db / 20.0);
  Waveform out;
  out.sample_rate = signal.sample_rate;
  out.samples.resize(signal.samples.size());
  for (size_t i = 0; i < out.samples.size(); ++i)
    out.samples[i] = signal.samples[i] + scale * interference.samples[i];
  return {out, scale};
}

double si_sdr(const Waveform& estimate, const Waveform& reference) {
  if (estimate.samples.size() != reference.samples.size())
    throw std::invalid_argument("si_sdr: length mismatch");
  double dot = 0.0, ref_sq = 0.0;
  for (size_t i = 0; i < reference.samples.size(); ++i) {
    dot += estimate.samples[i] * reference.samples[i];
    ref_sq += reference.samples[i] * reference.samples[i];
  }
  if (ref_sq <= 0.0) throw std::invalid_argument("si_sdr: zero reference");
  const double alpha = dot / ref_sq;
  double target_sq = alpha * alpha * ref_sq;
  double err_sq = 0.0;
  for (size_t i = 0; i < reference.samples.size(); ++i) {
    const double e = alpha * reference.samples[i] - estimate.samples[i];
    err_sq += e * e;
  }
  if (err_sq <= 0.0 || target_sq / err_sq >= std::pow(10.0, kSiSdrCapDb / 10.0))
    return kSiSdrCapDb;
  return 10.0 * std::log10(target_sq / err_sq);
}

void rfft(const double* in, std::complex<double>* out, int n) {
  FftPlans& plans = plans_for(n);
  std::vector<double> buf(in, in + n);  // r2c may destroy its input
  fftw_execute_dft_r2c(plans.r2c, buf.data(), reinterpret_cast<fftw_complex*>(out));
}

void irfft(const std::complex<double>* in, double* out, int n) {
  FftPlans& plans = plans_for(n);
  std::vector<std::complex<double>> buf(in, in + n / 2 + 1);  // c2r destroys its input
  fftw_execute_dft_c2r(plans.c2r, reinterpret_cast<fftw_complex*>(buf.data()), out);
}

Waveform resample_linear(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw std::invalid_argument("resample_linear: bad target rate");
  if (w.sample_rate == target_rate) return w;
  if (w.samples.empty()) return {.samples = {}, .sample_rate = target_rate};

  const double ratio = static_cast<double>(w.sample_rate) / target_rate;
  const size_t out_len =
      static_cast<size_t>(std::floor((w.samples.size() - 1) / ratio)) + 1;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  for (size_t i = 0; i < out_len; ++i) {
    const double pos = i * ratio;
    const size_t i0 = static_cast<size_t>(pos);
    const size_t i1 = std::min(i0 + 1, w.samples.size() - 1);
    const double frac = pos - i0;
    out.samples[i] = (1.0 - frac) * w.samples[i0] + frac * w.samples[i1];
  }
  return out;
}

}  // namespace flowtse
