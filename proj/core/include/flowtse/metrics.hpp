#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flowtse/config.hpp"
#include "flowtse/dsp.hpp"
#include "flowtse/mixture.hpp"

namespace flowtse {

// RMS over frames of the per-frame RMS difference of log-magnitude
// (dB) spectra.
double log_spectral_distance(const Waveform& estimate, const Waveform& reference,
                             const FeatureConfig& feat);

// Cosine similarity between mean-centered, time-averaged log-mel
// vectors; gain-invariant by centering. Throws on silent input.
double mel_cosine_similarity(const Waveform& estimate, const Waveform& reference,
                             const FeatureConfig& feat);

struct ExampleMetrics {
  std::string example_id;
  double si_sdr_db = 0.0;
  double si_sdr_mixture_db = 0.0;  // do-nothing baseline
  double lsd_db = 0.0;
  double mel_cosine = 0.0;
};

struct AggregateMetric {
  double mean = 0.0;
  double ci_lo = 0.0;  // 95% bootstrap percentile interval
  double ci_hi = 0.0;
};

struct EvalReport {
  std::vector<ExampleMetrics> per_example;
  std::vector<std::string> missing;  // manifest rows with no output file
  AggregateMetric si_sdr_db, si_sdr_mixture_db, si_sdr_improvement_db, lsd_db, mel_cosine;
  std::string config_hash;

  void write_json(const std::string& path) const;
  void write_csv(const std::string& path) const;
};

// Expects one <row.id>.wav per manifest row under outputs_dir. Missing
// outputs are listed and skipped. Bootstrap is seed-fixed (1000
// percentile resamples).
EvalReport evaluate(const DatasetManifest& manifest, const std::string& outputs_dir,
                    const FeatureConfig& feat, uint64_t bootstrap_seed = 0);

}  // namespace flowtse
