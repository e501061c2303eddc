#include "flowtse/metrics.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "flowtse/rng.hpp"
#include "flowtse/wav.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace flowtse {

namespace {
constexpr double kMagFloor = 1e-10;
}

double log_spectral_distance(const Waveform& estimate, const Waveform& reference,
                             const FeatureConfig& feat) {
  if (estimate.samples.size() != reference.samples.size())
    throw std::invalid_argument("log_spectral_distance: length mismatch");
  ComplexSpectrogram se = stft(estimate, feat.n_fft, feat.hop);
  ComplexSpectrogram sr = stft(reference, feat.n_fft, feat.hop);
  // RMS over frames of the per-frame RMS
  double sq = 0.0;
  for (int t = 0; t < se.n_frames(); ++t) {
    double frame_acc = 0.0;
    for (int f = 0; f < se.n_bins(); ++f) {
      const double le = 20.0 * std::log10(std::max(std::abs(se.bins(f, t)), kMagFloor));
      const double lr = 20.0 * std::log10(std::max(std::abs(sr.bins(f, t)), kMagFloor));
      frame_acc += (le - lr) * (le - lr);
    }
    const double frame_rms = std::sqrt(frame_acc / se.n_bins());
    sq += frame_rms * frame_rms;
  }
  return std::sqrt(sq / se.n_frames());
}

double mel_cosine_similarity(const Waveform& estimate, const Waveform& reference,
                             const FeatureConfig& feat) {
  if (estimate.power() <= 0.0 || reference.power() <= 0.0)
    throw std::invalid_argument("mel_cosine_similarity: silent input");
  MelSpectrogram me = log_mel(estimate, feat);
  MelSpectrogram mr = log_mel(reference, feat);
  Eigen::VectorXd ve = me.frames.colwise().mean();
  Eigen::VectorXd vr = mr.frames.colwise().mean();
  ve.array() -= ve.mean();
  vr.array() -= vr.mean();
  const double ne = ve.norm(), nr = vr.norm();
  if (ne <= 0.0 || nr <= 0.0)
    throw std::invalid_argument("mel_cosine_similarity: degenerate (flat) mel profile");
  return ve.dot(vr) / (ne * nr);
}

namespace {

AggregateMetric aggregate(const std::vector<double>& values, Rng& rng, int n_resamples) {
  AggregateMetric a;
  if (values.empty()) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / values.size();

  std::vector<double> means(n_resamples);
  for (int b = 0; b < n_resamples; ++b) {
    double s = 0.0;
    for (size_t i = 0; i < values.size(); ++i) s += values[rng.uniform_int(values.size())];
    means[b] = s / values.size();
  }
  std::sort(means.begin(), means.end());
  a.ci_lo = means[static_cast<size_t>(0.025 * (n_resamples - 1))];
  a.ci_hi = means[static_cast<size_t>(0.975 * (n_resamples - 1))];
  return a;
}

}  // namespace

EvalReport evaluate(const DatasetManifest& manifest, const std::string& outputs_dir,
                    const FeatureConfig& feat, uint64_t bootstrap_seed) {
  EvalReport report;
  report.config_hash = std::to_string(feat.hash());

  for (const auto& row : manifest.rows) {
    const std::string out_path = (fs::path(outputs_dir) / (row.id + ".wav")).string();
    if (!fs::exists(out_path)) {
      report.missing.push_back(row.id);
      continue;
    }
    Waveform est = load_audio(out_path, feat.sample_rate);
    Waveform target = load_audio(row.target, feat.sample_rate);
    Waveform mixed = load_audio(row.mixed, feat.sample_rate);
    const size_t n = std::min({est.samples.size(), target.samples.size(), mixed.samples.size()});
    est.samples.resize(n);
    target.samples.resize(n);
    mixed.samples.resize(n);

    ExampleMetrics m;
    m.example_id = row.id;
    m.si_sdr_db = si_sdr(est, target);
    m.si_sdr_mixture_db = si_sdr(mixed, target);
    m.lsd_db = log_spectral_distance(est, target, feat);
    m.mel_cosine = mel_cosine_similarity(est, target, feat);
    report.per_example.push_back(std::move(m));
  }

  Rng rng(bootstrap_seed);
  std::vector<double> v_sisdr, v_base, v_impr, v_lsd, v_cos;
  for (const auto& m : report.per_example) {
    v_sisdr.push_back(m.si_sdr_db);
    v_base.push_back(m.si_sdr_mixture_db);
    v_impr.push_back(m.si_sdr_db - m.si_sdr_mixture_db);
    v_lsd.push_back(m.lsd_db);
    v_cos.push_back(m.mel_cosine);
  }
  const int kResamples = 1000;
  report.si_sdr_db = aggregate(v_sisdr, rng, kResamples);
  report.si_sdr_mixture_db = aggregate(v_base, rng, kResamples);
  report.si_sdr_improvement_db = aggregate(v_impr, rng, kResamples);
  report.lsd_db = aggregate(v_lsd, rng, kResamples);
  report.mel_cosine = aggregate(v_cos, rng, kResamples);
  return report;
}

void EvalReport::write_json(const std::string& path) const {
  json j;
  j["note"] =
      "reference-based metrics only; perceptual metrics requiring external "
      "pretrained models are out of scope and replaced by SI-SDR, LSD and "
      "mel-cosine";
  j["config_hash"] = config_hash;
  j["missing"] = missing;
  json rows = json::array();
  for (const auto& m : per_example)
    rows.push_back({{"example_id", m.example_id},
                    {"si_sdr_db", m.si_sdr_db},
                    {"si_sdr_mixture_db", m.si_sdr_mixture_db},
                    {"lsd_db", m.lsd_db},
                    {"mel_cosine", m.mel_cosine}});
  j["per_example"] = rows;
  auto agg = [](const AggregateMetric& a) {
    return json{{"mean", a.mean}, {"ci95_lo", a.ci_lo}, {"ci95_hi", a.ci_hi}};
  };
  j["aggregate"] = {{"si_sdr_db", agg(si_sdr_db)},
                    {"si_sdr_mixture_db", agg(si_sdr_mixture_db)},
                    {"si_sdr_improvement_db", agg(si_sdr_improvement_db)},
                    {"lsd_db", agg(lsd_db)},
                    {"mel_cosine", agg(mel_cosine)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("EvalReport: cannot write " + path);
  out << j.dump(2) << "\n";
}

void EvalReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("EvalReport: cannot write " + path);
  out << "example_id,si_sdr_db,si_sdr_mixture_db,lsd_db,mel_cosine\n";
  out << std::setprecision(17);
  for (const auto& m : per_example)
    out << m.example_id << "," << m.si_sdr_db << "," << m.si_sdr_mixture_db << ","
        << m.lsd_db << "," << m.mel_cosine << "\n";
}

}  // namespace flowtse
