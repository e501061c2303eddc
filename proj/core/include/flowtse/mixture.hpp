#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flowtse/config.hpp"
#include "flowtse/dsp.hpp"
#include "flowtse/rng.hpp"

namespace flowtse {

struct UtteranceRecord {
  std::string speaker_id;
  std::string utterance_id;
  std::string path;
  double duration = 0.0;  // seconds
};

// JSONL, one UtteranceRecord per line.
struct CorpusManifest {
  std::vector<UtteranceRecord> utterances;

  static CorpusManifest load(const std::string& path, bool check_files = true);
  void save(const std::string& path) const;
  std::vector<std::string> speaker_ids() const;
  std::vector<const UtteranceRecord*> utterances_of(const std::string& speaker) const;
};

struct MixingConfig {
  double snr_lo_db = -5.0;
  double snr_hi_db = 5.0;
  double noise_prob = 0.75;
  double enroll_min_s = 1.0;
  double enroll_max_s = 5.0;
  double peak_limit = 0.9;
  int sample_rate = 24000;
};

struct MixtureExample {
  Waveform mixed;
  Waveform target;
  Waveform enrollment;
  std::optional<Waveform> noise;  // scaled noise stem actually added
  double speech_snr_db = 0.0;
  std::optional<double> noise_snr_db;
  std::string target_speaker_id;
  std::string interferer_speaker_id;
  std::string target_utterance_id;
  std::string enrollment_utterance_id;
  uint64_t seed = 0;
};

// One row of a dataset manifest (JSONL), pointing at stems on disk.
struct DatasetRow {
  std::string id;
  std::string mixed;
  std::string target;
  std::string enrollment;
  std::optional<std::string> noise;
  double speech_snr_db = 0.0;
  std::optional<double> noise_snr_db;
  std::string target_speaker_id;
  std::string interferer_speaker_id;
  uint64_t seed = 0;
};

struct DatasetManifest {
  std::vector<DatasetRow> rows;

  static DatasetManifest load(const std::string& path);
  void save(const std::string& path) const;
};

// Draw one mixture, fully determined by rng_seed. noise_corpus may be
// empty, in which case no noise is ever added.
MixtureExample sample_mixture(const CorpusManifest& corpus, const CorpusManifest& noise_corpus,
                              uint64_t rng_seed, const MixingConfig& cfg);

// Render n_examples to out_dir (float32 WAV stems) plus manifest.jsonl.
// Per-example seeds derive from hash(base_seed, index) so the result is
// independent of worker scheduling.
DatasetManifest build_dataset(const CorpusManifest& corpus, const CorpusManifest& noise_corpus,
                              int n_examples, uint64_t base_seed, const std::string& out_dir,
                              const MixingConfig& cfg);

struct ToyCorpusConfig {
  int n_speakers = 2;
  int utterances_per_speaker = 4;
  double min_duration_s = 1.1;
  double max_duration_s = 1.6;
  int n_noise_clips = 0;  // when > 0, a noise manifest is written alongside
  int sample_rate = 24000;
  uint64_t seed = 0;
};

// Deterministic stand-in corpus: each "speaker" is a harmonic tone
// complex with a speaker-specific fundamental and AM envelope. Writes
// WAVs under out_dir and returns the speech manifest; the noise manifest
// (if requested) is written to out_dir/noise_manifest.jsonl.
CorpusManifest synthetic_toy_corpus(const ToyCorpusConfig& cfg, const std::string& out_dir);

}  // namespace flowtse
