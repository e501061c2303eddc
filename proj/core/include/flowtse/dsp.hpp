#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "flowtse/config.hpp"

namespace flowtse {

struct Waveform {
  std::vector<double> samples;  // mono, nominal range [-1, 1]
  int sample_rate = 24000;

  size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  double power() const;  // mean square
  void check_finite(const std::string& what) const;
};

// One-sided complex STFT, F x T with F = n_fft/2 + 1.
struct ComplexSpectrogram {
  Eigen::MatrixXcd bins;  // F x T
  int n_fft = 0;
  int hop = 0;
  std::string window = "hann";

  int n_bins() const { return static_cast<int>(bins.rows()); }
  int n_frames() const { return static_cast<int>(bins.cols()); }
};

// Log-mel features, T x D.
struct MelSpectrogram {
  Eigen::MatrixXd frames;  // T x D
  int n_mels = 100;
  int hop = 256;
  int sample_rate = 24000;

  int n_frames() const { return static_cast<int>(frames.rows()); }
};

// Frame layout: frame i is centered at sample i*hop (reflect padding at
// the edges), so n_frames = ceil(len / hop). Deterministic and shared by
// the mel front end and the vocoder STFT path.
int stft_num_frames(size_t n_samples, int hop);

std::vector<double> hann_window_periodic(int n);

ComplexSpectrogram stft(const Waveform& w, int n_fft, int hop);
Waveform istft(const ComplexSpectrogram& s, size_t out_len, int sample_rate = 24000);

// D x F triangular mel filterbank (HTK mel scale) spanning [0, sr/2].
Eigen::MatrixXd mel_filterbank(int n_fft, int n_mels, int sample_rate);

// center frequencies (Hz) of each band, for tests and diagnostics
std::vector<double> mel_band_centers_hz(int n_fft, int n_mels, int sample_rate);

// frames = log(max(filterbank * |stft|, log_floor)), natural log
MelSpectrogram log_mel(const Waveform& w, const FeatureConfig& cfg);

// Returns signal + scale * interference and the scale that realizes the
// requested power-ratio SNR exactly.
std::pair<Waveform, double> mix_at_snr(const Waveform& signal, const Waveform& interference,
                                       double snr_db);

// Scale-invariant SDR in dB, clamped at +si_sdr_cap_db for near-perfect
// estimates.
inline constexpr double kSiSdrCapDb = 60.0;
double si_sdr(const Waveform& estimate, const Waveform& reference);

// Linear resampling; returns input unchanged when rates already match.
Waveform resample_linear(const Waveform& w, int target_rate);

// Low-level FFT helpers (FFTW-backed, plan-cached). out has n/2+1 bins;
// irfft is unnormalized (inverse of rfft scaled by n).
void rfft(const double* in, std::complex<double>* out, int n);
void irfft(const std::complex<double>* in, double* out, int n);

}  // namespace flowtse
