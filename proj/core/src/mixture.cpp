#include "flowtse/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "flowtse/wav.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace flowtse {

namespace {

std::string resolve(const std::string& manifest_path, const std::string& p) {
  fs::path fp(p);
  if (fp.is_absolute()) return p;
  return (fs::path(manifest_path).parent_path() / fp).string();
}

}  // namespace

CorpusManifest CorpusManifest::load(const std::string& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("corpus manifest: cannot open " + path);
  CorpusManifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    UtteranceRecord r;
    r.speaker_id = j.at("speaker_id").get<std::string>();
    r.utterance_id = j.at("utterance_id").get<std::string>();
    r.path = resolve(path, j.at("path").get<std::string>());
    r.duration = j.at("duration").get<double>();
    if (r.duration <= 0.0)
      throw std::runtime_error("corpus manifest: non-positive duration for " + r.utterance_id);
    if (check_files && !fs::exists(r.path))
      throw std::runtime_error("corpus manifest: missing file " + r.path);
    m.utterances.push_back(std::move(r));
  }
  return m;
}

void CorpusManifest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("corpus manifest: cannot write " + path);
  for (const auto& r : utterances) {
    json j = {{"speaker_id", r.speaker_id},
              {"utterance_id", r.utterance_id},
              {"path", r.path},
              {"duration", r.duration}};
    out << j.dump() << "\n";
  }
}

std::vector<std::string> CorpusManifest::speaker_ids() const {
  std::vector<std::string> ids;
  for (const auto& r : utterances)
    if (std::find(ids.begin(), ids.end(), r.speaker_id) == ids.end())
      ids.push_back(r.speaker_id);
  return ids;
}

std::vector<const UtteranceRecord*> CorpusManifest::utterances_of(
    const std::string& speaker) const {
  std::vector<const UtteranceRecord*> out;
  for (const auto& r : utterances)
    if (r.speaker_id == speaker) out.push_back(&r);
  return out;
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset manifest: cannot open " + path);
  DatasetManifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    DatasetRow r;
    r.id = j.at("id").get<std::string>();
    r.mixed = resolve(path, j.at("mixed").get<std::string>());
    r.target = resolve(path, j.at("target").get<std::string>());
    r.enrollment = resolve(path, j.at("enrollment").get<std::string>());
    if (j.contains("noise") && !j["noise"].is_null())
      r.noise = resolve(path, j["noise"].get<std::string>());
    r.speech_snr_db = j.at("speech_snr_db").get<double>();
    if (j.contains("noise_snr_db") && !j["noise_snr_db"].is_null())
      r.noise_snr_db = j["noise_snr_db"].get<double>();
    r.target_speaker_id = j.at("target_speaker_id").get<std::string>();
    r.interferer_speaker_id = j.at("interferer_speaker_id").get<std::string>();
    r.seed = j.at("seed").get<uint64_t>();
    m.rows.push_back(std::move(r));
  }
  return m;
}

void DatasetManifest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dataset manifest: cannot write " + path);
  for (const auto& r : rows) {
    json j = {{"id", r.id},
              {"mixed", r.mixed},
              {"target", r.target},
              {"enrollment", r.enrollment},
              {"speech_snr_db", r.speech_snr_db},
              {"target_speaker_id", r.target_speaker_id},
              {"interferer_speaker_id", r.interferer_speaker_id},
              {"seed", r.seed}};
    j["noise"] = r.noise ? json(*r.noise) : json(nullptr);
    j["noise_snr_db"] = r.noise_snr_db ? json(*r.noise_snr_db) : json(nullptr);
    out << j.dump() << "\n";
  }
}

namespace {

Waveform truncate(const Waveform& w, size_t len) {
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.begin(), w.samples.begin() + len);
  return out;
}

// loop short clips, random-crop long ones
Waveform fit_noise(const Waveform& noise, size_t len, Rng& rng) {
  Waveform out;
  out.sample_rate = noise.sample_rate;
  out.samples.resize(len);
  if (noise.samples.size() >= len) {
    const size_t start = rng.uniform_int(noise.samples.size() - len + 1);
    std::copy_n(noise.samples.begin() + start, len, out.samples.begin());
  } else {
    for (size_t i = 0; i < len; ++i) out.samples[i] = noise.samples[i % noise.samples.size()];
  }
  return out;
}

}  // namespace

MixtureExample sample_mixture(const CorpusManifest& corpus, const CorpusManifest& noise_corpus,
                              uint64_t rng_seed, const MixingConfig& cfg) {
  const auto speakers = corpus.speaker_ids();
  if (speakers.size() < 2)
    throw std::runtime_error("sample_mixture: corpus needs at least 2 speakers");
  bool any_multi = false;
  for (const auto& s : speakers)
    if (corpus.utterances_of(s).size() >= 2) any_multi = true;
  if (!any_multi)
    throw std::runtime_error("sample_mixture: no speaker has 2+ utterances for enrollment");

  Rng rng(rng_seed);

  // target must have a spare utterance for enrollment; resample otherwise
  std::string target_spk;
  std::vector<const UtteranceRecord*> target_utts;
  for (;;) {
    target_spk = speakers[rng.uniform_int(speakers.size())];
    target_utts = corpus.utterances_of(target_spk);
    if (target_utts.size() >= 2) break;
  }
  std::string interf_spk;
  do {
    interf_spk = speakers[rng.uniform_int(speakers.size())];
  } while (interf_spk == target_spk);
  const auto interf_utts = corpus.utterances_of(interf_spk);

  const UtteranceRecord* target_utt = target_utts[rng.uniform_int(target_utts.size())];
  const UtteranceRecord* enroll_utt;
  do {
    enroll_utt = target_utts[rng.uniform_int(target_utts.size())];
  } while (enroll_utt->utterance_id == target_utt->utterance_id);
  const UtteranceRecord* interf_utt = interf_utts[rng.uniform_int(interf_utts.size())];

  Waveform target_full = load_audio(target_utt->path, cfg.sample_rate);
  Waveform interf_full = load_audio(interf_utt->path, cfg.sample_rate);
  const size_t mix_len = std::min(target_full.samples.size(), interf_full.samples.size());
  if (mix_len == 0) throw std::runtime_error("sample_mixture: empty utterance audio");
  Waveform target = truncate(target_full, mix_len);
  Waveform interf = truncate(interf_full, mix_len);

  MixtureExample ex;
  ex.seed = rng_seed;
  ex.target_speaker_id = target_spk;
  ex.interferer_speaker_id = interf_spk;
  ex.target_utterance_id = target_utt->utterance_id;
  ex.enrollment_utterance_id = enroll_utt->utterance_id;

  ex.speech_snr_db = rng.uniform(cfg.snr_lo_db, cfg.snr_hi_db);
  auto [mixed, speech_scale] = mix_at_snr(target, interf, ex.speech_snr_db);
  (void)speech_scale;

  const bool use_noise = !noise_corpus.utterances.empty() && rng.uniform() < cfg.noise_prob;
  if (use_noise) {
    const auto& nrec = noise_corpus.utterances[rng.uniform_int(noise_corpus.utterances.size())];
    Waveform noise_clip = load_audio(nrec.path, cfg.sample_rate);
    Waveform noise_fit = fit_noise(noise_clip, mix_len, rng);
    const double nsnr = rng.uniform(cfg.snr_lo_db, cfg.snr_hi_db);
    // noise SNR is measured against the two-speaker speech mixture
    auto [noisy, nscale] = mix_at_snr(mixed, noise_fit, nsnr);
    Waveform noise_stem;
    noise_stem.sample_rate = cfg.sample_rate;
    noise_stem.samples.resize(mix_len);
    for (size_t i = 0; i < mix_len; ++i) noise_stem.samples[i] = nscale * noise_fit.samples[i];
    mixed = std::move(noisy);
    ex.noise = std::move(noise_stem);
    ex.noise_snr_db = nsnr;
  }

  // contiguous enrollment crop, uniform duration and position
  Waveform enroll_full = load_audio(enroll_utt->path, cfg.sample_rate);
  const double utt_dur = static_cast<double>(enroll_full.samples.size()) / cfg.sample_rate;
  const double lo = std::min(cfg.enroll_min_s, utt_dur);
  const double hi = std::min(cfg.enroll_max_s, utt_dur);
  const double dur = rng.uniform(lo, hi);
  const size_t enroll_len = std::max<size_t>(1, static_cast<size_t>(dur * cfg.sample_rate));
  const size_t max_start = enroll_full.samples.size() - std::min(enroll_len, enroll_full.samples.size());
  const size_t start = max_start > 0 ? rng.uniform_int(max_start + 1) : 0;
  Waveform enroll;
  enroll.sample_rate = cfg.sample_rate;
  enroll.samples.assign(enroll_full.samples.begin() + start,
                        enroll_full.samples.begin() + start + std::min(enroll_len, enroll_full.samples.size()));

  ex.mixed = std::move(mixed);
  ex.target = std::move(target);
  ex.enrollment = std::move(enroll);

  // shared peak gain keeps relative SNRs intact
  double peak = 0.0;
  for (double s : ex.mixed.samples) peak = std::max(peak, std::fabs(s));
  if (peak > cfg.peak_limit) {
    const double g = cfg.peak_limit / peak;
    for (double& s : ex.mixed.samples) s *= g;
    for (double& s : ex.target.samples) s *= g;
    for (double& s : ex.enrollment.samples) s *= g;
    if (ex.noise)
      for (double& s : ex.noise->samples) s *= g;
  }
  return ex;
}

DatasetManifest build_dataset(const CorpusManifest& corpus, const CorpusManifest& noise_corpus,
                              int n_examples, uint64_t base_seed, const std::string& out_dir,
                              const MixingConfig& cfg) {
  fs::create_directories(out_dir);
  DatasetManifest manifest;
  for (int i = 0; i < n_examples; ++i) {
    const uint64_t seed = Rng::derive_seed(base_seed, static_cast<uint64_t>(i));
    MixtureExample ex;
    try {
      ex = sample_mixture(corpus, noise_corpus, seed, cfg);
    } catch (const std::exception& e) {
      throw std::runtime_error("build_dataset: example " + std::to_string(i) + ": " + e.what());
    }

    std::ostringstream id;
    id << "ex" << std::setw(6) << std::setfill('0') << i;
    DatasetRow row;
    row.id = id.str();
    auto stem = [&](const std::string& kind) { return row.id + "_" + kind + ".wav"; };
    try {
      write_wav((fs::path(out_dir) / stem("mixed")).string(), ex.mixed);
      write_wav((fs::path(out_dir) / stem("target")).string(), ex.target);
      write_wav((fs::path(out_dir) / stem("enrollment")).string(), ex.enrollment);
      if (ex.noise) write_wav((fs::path(out_dir) / stem("noise")).string(), *ex.noise);
    } catch (const std::exception& e) {
      throw std::runtime_error("build_dataset: example " + std::to_string(i) + ": " + e.what());
    }
    row.mixed = stem("mixed");
    row.target = stem("target");
    row.enrollment = stem("enrollment");
    if (ex.noise) row.noise = stem("noise");
    row.speech_snr_db = ex.speech_snr_db;
    row.noise_snr_db = ex.noise_snr_db;
    row.target_speaker_id = ex.target_speaker_id;
    row.interferer_speaker_id = ex.interferer_speaker_id;
    row.seed = seed;
    manifest.rows.push_back(std::move(row));
  }
  manifest.save((fs::path(out_dir) / "manifest.jsonl").string());
  return manifest;
}

namespace {

Waveform render_toy_utterance(int speaker, uint64_t seed, double duration_s, int sr) {
  Rng rng(seed);
  const double f0_base = 150.0 + 80.0 * speaker;
  const double f0 = f0_base * (1.0 + 0.02 * (rng.uniform() - 0.5));
  const double am_rate = 2.0 + 1.3 * speaker;
  const double am_phase = rng.uniform(0.0, 2.0 * M_PI);
  const int n_harm = 8;
  std::vector<double> phases(n_harm), amps(n_harm);
  for (int h = 0; h < n_harm; ++h) {
    phases[h] = rng.uniform(0.0, 2.0 * M_PI);
    amps[h] = 1.0 / std::pow(h + 1.0, 1.0 + 0.15 * speaker);
  }

  Waveform w;
  w.sample_rate = sr;
  const size_t n = static_cast<size_t>(duration_s * sr);
  w.samples.resize(n);
  double peak = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double env = 1.0 + 0.5 * std::sin(2.0 * M_PI * am_rate * t + am_phase);
    const double vib = 1.0 + 0.005 * std::sin(2.0 * M_PI * 5.0 * t);
    double v = 0.0;
    for (int h = 0; h < n_harm; ++h)
      v += amps[h] * std::sin(2.0 * M_PI * f0 * vib * (h + 1) * t + phases[h]);
    w.samples[i] = env * v;
    peak = std::max(peak, std::fabs(w.samples[i]));
  }
  if (peak > 0.0)
    for (double& s : w.samples) s *= 0.5 / peak;
  return w;
}

Waveform render_toy_noise(uint64_t seed, double duration_s, int sr) {
  Rng rng(seed);
  Waveform w;
  w.sample_rate = sr;
  const size_t n = static_cast<size_t>(duration_s * sr);
  w.samples.resize(n);
  double y = 0.0;
  for (size_t i = 0; i < n; ++i) {
    y = 0.98 * y + rng.normal();  // one-pole lowpass, pink-ish
    w.samples[i] = y;
  }
  const double rms = std::sqrt(w.power());
  if (rms > 0.0)
    for (double& s : w.samples) s *= 0.1 / rms;
  return w;
}

}  // namespace

CorpusManifest synthetic_toy_corpus(const ToyCorpusConfig& cfg, const std::string& out_dir) {
  if (cfg.n_speakers < 2)
    throw std::invalid_argument("synthetic_toy_corpus: need at least 2 speakers");
  fs::create_directories(out_dir);

  CorpusManifest manifest;
  CorpusManifest on_disk;  // relative paths for the serialized manifest
  uint64_t counter = 0;
  for (int s = 0; s < cfg.n_speakers; ++s) {
    for (int u = 0; u < cfg.utterances_per_speaker; ++u) {
      const uint64_t seed = Rng::derive_seed(cfg.seed, counter++);
      Rng rng(seed);
      const double dur = rng.uniform(cfg.min_duration_s, cfg.max_duration_s);
      Waveform w = render_toy_utterance(s, seed ^ 0x5eedULL, dur, cfg.sample_rate);

      std::ostringstream name;
      name << "spk" << s << "_utt" << u << ".wav";
      const std::string path = (fs::path(out_dir) / name.str()).string();
      write_wav(path, w);

      UtteranceRecord r;
      r.speaker_id = "spk" + std::to_string(s);
      r.utterance_id = "spk" + std::to_string(s) + "_utt" + std::to_string(u);
      r.duration = w.duration();
      r.path = name.str();
      on_disk.utterances.push_back(r);
      r.path = path;
      manifest.utterances.push_back(std::move(r));
    }
  }
  on_disk.save((fs::path(out_dir) / "manifest.jsonl").string());

  if (cfg.n_noise_clips > 0) {
    CorpusManifest noise_disk;
    for (int i = 0; i < cfg.n_noise_clips; ++i) {
      const uint64_t seed = Rng::derive_seed(cfg.seed ^ 0xA05EULL, static_cast<uint64_t>(i));
      Rng rng(seed);
      const double dur = rng.uniform(1.5, 2.5);
      Waveform w = render_toy_noise(seed, dur, cfg.sample_rate);
      std::ostringstream name;
      name << "noise" << i << ".wav";
      write_wav((fs::path(out_dir) / name.str()).string(), w);
      UtteranceRecord r;
      r.speaker_id = "noise";
      r.utterance_id = "noise" + std::to_string(i);
      r.path = name.str();
      r.duration = w.duration();
      noise_disk.utterances.push_back(std::move(r));
    }
    noise_disk.save((fs::path(out_dir) / "noise_manifest.jsonl").string());
  }
  return manifest;
}

}  // namespace flowtse
