#include "flowtse/cli.hpp"

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "flowtse/cfm.hpp"
#include "flowtse/checkpoint.hpp"
#include "flowtse/melfile.hpp"
#include "flowtse/metrics.hpp"
#include "flowtse/mixture.hpp"
#include "flowtse/sampler.hpp"
#include "flowtse/vocoder.hpp"
#include "flowtse/wav.hpp"

namespace fs = std::filesystem;

namespace flowtse {

namespace {

Config load_config_or_default(const std::string& path) {
  if (path.empty()) return Config{};
  return Config::load(path);
}

FlowModel load_flow_model(const std::string& ckpt_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (ckpt.kind != "flow")
    throw std::runtime_error("checkpoint " + ckpt_path + " has kind '" + ckpt.kind +
                             "', expected 'flow'");
  FlowModel model(model_config_from_json(ckpt.model_config), ckpt.features, /*init_seed=*/0);
  restore_params(model.params(), ckpt);
  return model;
}

PhaseVocoder load_vocoder(const std::string& ckpt_path, const FeatureConfig& expected_feat,
                          bool check_features) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (ckpt.kind != "vocoder")
    throw std::runtime_error("checkpoint " + ckpt_path + " has kind '" + ckpt.kind +
                             "', expected 'vocoder'");
  if (check_features && !(ckpt.features == expected_feat))
    throw std::runtime_error("vocoder checkpoint feature config mismatch");
  PhaseVocoder voc(vocoder_config_from_json(ckpt.model_config), ckpt.features, /*init_seed=*/0);
  restore_params(voc.params(), ckpt);
  return voc;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
  CLI::App app{"flowtse: conditional flow-matching target speaker extraction"};
  app.require_subcommand(1);

  // ---- toy-corpus ----
  auto* toy = app.add_subcommand("toy-corpus", "generate a synthetic speaker corpus");
  ToyCorpusConfig toy_cfg;
  std::string toy_out;
  toy->add_option("--out", toy_out, "output directory")->required();
  toy->add_option("--speakers", toy_cfg.n_speakers, "number of speakers");
  toy->add_option("--utts", toy_cfg.utterances_per_speaker, "utterances per speaker");
  toy->add_option("--noise", toy_cfg.n_noise_clips, "number of noise clips");
  toy->add_option("--min-dur", toy_cfg.min_duration_s, "min utterance seconds");
  toy->add_option("--max-dur", toy_cfg.max_duration_s, "max utterance seconds");
  toy->add_option("--seed", toy_cfg.seed, "rng seed");

  // ---- mix ----
  auto* mix = app.add_subcommand("mix", "build a mixture dataset from a corpus");
  std::string mix_corpus, mix_noise, mix_out, mix_config;
  int mix_n = 8;
  uint64_t mix_seed = 0;
  mix->add_option("--corpus", mix_corpus, "speech corpus manifest (jsonl)")->required();
  mix->add_option("--noise", mix_noise, "noise corpus manifest (jsonl)");
  mix->add_option("--n", mix_n, "number of examples")->required();
  mix->add_option("--seed", mix_seed, "base seed");
  mix->add_option("--out", mix_out, "output directory")->required();
  mix->add_option("--config", mix_config, "config file");

  // ---- train ----
  auto* train = app.add_subcommand("train", "train the flow model (CFM objective)");
  std::string train_manifest, train_config, train_out;
  uint64_t train_seed = 0;
  bool train_seed_set = false;
  train->add_option("--manifest", train_manifest, "dataset manifest")->required();
  train->add_option("--config", train_config, "config file");
  train->add_option("--out-dir", train_out, "output directory")->required();
  train->add_option("--seed", train_seed, "training seed")
      ->each([&](const std::string&) { train_seed_set = true; });

  // ---- extract ----
  auto* extract_cmd = app.add_subcommand("extract", "run TSE inference");
  std::string ex_ckpt, ex_mixed, ex_enroll, ex_out, ex_vocoder;
  SamplerConfig ex_sampler;
  extract_cmd->add_option("--ckpt", ex_ckpt, "flow model checkpoint")->required();
  extract_cmd->add_option("--mixed", ex_mixed, "mixed input wav")->required();
  extract_cmd->add_option("--enroll", ex_enroll,
                          "enrollment wav (defaults to the mixture: enhancement mode)");
  extract_cmd->add_option("--steps", ex_sampler.n_steps, "ODE steps");
  extract_cmd->add_option("--method", ex_sampler.method, "euler|midpoint");
  extract_cmd->add_option("--cfg", ex_sampler.cfg_scale, "guidance scale");
  extract_cmd->add_option("--seed", ex_sampler.seed, "sampling seed");
  extract_cmd->add_option("--out", ex_out, "output .mel container or .wav")->required();
  extract_cmd->add_option("--vocoder-ckpt", ex_vocoder, "vocoder checkpoint (for .wav output)");

  // ---- train-vocoder ----
  auto* tv = app.add_subcommand("train-vocoder", "train the phase-conditioned vocoder");
  std::string tv_manifest, tv_config, tv_out;
  uint64_t tv_seed = 0;
  tv->add_option("--manifest", tv_manifest, "dataset manifest")->required();
  tv->add_option("--config", tv_config, "config file");
  tv->add_option("--out", tv_out, "output directory")->required();
  tv->add_option("--seed", tv_seed, "training seed");

  // ---- vocode ----
  auto* voc = app.add_subcommand("vocode", "mel + mixed wav -> waveform");
  std::string v_ckpt, v_mel, v_mixed, v_out;
  uint64_t v_seed = 0;
  voc->add_option("--ckpt", v_ckpt, "vocoder checkpoint")->required();
  voc->add_option("--mel", v_mel, "input mel container")->required();
  voc->add_option("--mixed", v_mixed, "mixed input wav")->required();
  voc->add_option("--out", v_out, "output wav")->required();
  voc->add_option("--seed", v_seed, "unused, accepted for interface uniformity");

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "score extraction outputs against references");
  std::string e_manifest, e_outputs, e_report, e_config;
  uint64_t e_seed = 0;
  ev->add_option("--manifest", e_manifest, "dataset manifest")->required();
  ev->add_option("--outputs", e_outputs, "directory with <id>.wav outputs")->required();
  ev->add_option("--report-dir", e_report, "report output directory")->required();
  ev->add_option("--config", e_config, "config file");
  ev->add_option("--seed", e_seed, "bootstrap seed");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (toy->parsed()) {
      synthetic_toy_corpus(toy_cfg, toy_out);
      std::cout << "wrote corpus to " << toy_out << "\n";
    } else if (mix->parsed()) {
      Config cfg = load_config_or_default(mix_config);
      CorpusManifest corpus = CorpusManifest::load(mix_corpus);
      CorpusManifest noise;
      if (!mix_noise.empty()) noise = CorpusManifest::load(mix_noise);
      MixingConfig mcfg;
      mcfg.sample_rate = cfg.features.sample_rate;
      build_dataset(corpus, noise, mix_n, mix_seed, mix_out, mcfg);
      std::cout << "wrote " << mix_n << " examples to " << mix_out << "\n";
    } else if (train->parsed()) {
      Config cfg = load_config_or_default(train_config);
      if (train_seed_set) cfg.train.seed = train_seed;
      FlowModel model(cfg.model, cfg.features, cfg.train.seed ^ 0x11117777ULL);
      auto manifest = DatasetManifest::load(train_manifest);
      auto examples = load_flow_examples(manifest, model);
      TrainResult r = train_flow(examples, model, cfg.train, train_out);
      cfg.save((fs::path(train_out) / "config_snapshot.ini").string());
      std::cout << "final loss " << (r.losses.empty() ? 0.0 : r.losses.back()) << ", checkpoint "
                << r.final_checkpoint << "\n";
    } else if (extract_cmd->parsed()) {
      FlowModel model = load_flow_model(ex_ckpt);
      const FeatureConfig& feat = model.feature_config();
      Waveform mixed = load_audio(ex_mixed, feat.sample_rate);
      // enhancement mode: the mixture doubles as its own enrollment
      Waveform enroll = ex_enroll.empty() ? mixed : load_audio(ex_enroll, feat.sample_rate);
      MelSpectrogram mel = extract(model, enroll, mixed, ex_sampler);
      if (ex_out.size() > 4 && ex_out.substr(ex_out.size() - 4) == ".wav") {
        if (ex_vocoder.empty())
          throw std::runtime_error("waveform output requires --vocoder-ckpt");
        PhaseVocoder vocoder = load_vocoder(ex_vocoder, feat, /*check_features=*/true);
        ComplexSpectrogram s_m = stft(mixed, feat.n_fft, feat.hop);
        auto [wave, head] = vocoder.vocode(mel, s_m, mixed.samples.size());
        write_wav(ex_out, wave);
      } else {
        write_mel_file(ex_out, mel, feat);
      }
      std::cout << "wrote " << ex_out << "\n";
    } else if (tv->parsed()) {
      Config cfg = load_config_or_default(tv_config);
      cfg.train.seed = tv_seed;
      PhaseVocoder vocoder(cfg.vocoder, cfg.features, tv_seed ^ 0x22228888ULL);
      auto manifest = DatasetManifest::load(tv_manifest);
      VocoderTrainResult r = train_vocoder(manifest, vocoder, cfg.train, tv_out);
      std::cout << "final loss " << (r.losses.empty() ? 0.0 : r.losses.back()) << ", checkpoint "
                << r.final_checkpoint << "\n";
    } else if (voc->parsed()) {
      Checkpoint probe = load_checkpoint(v_ckpt);
      PhaseVocoder vocoder = load_vocoder(v_ckpt, probe.features, false);
      const FeatureConfig& feat = vocoder.feature_config();
      MelSpectrogram mel = read_mel_file(v_mel, feat);
      Waveform mixed = load_audio(v_mixed, feat.sample_rate);
      ComplexSpectrogram s_m = stft(mixed, feat.n_fft, feat.hop);
      if (s_m.n_frames() != mel.n_frames())
        throw std::runtime_error("vocode: mel frames (" + std::to_string(mel.n_frames()) +
                                 ") do not match mixed STFT frames (" +
                                 std::to_string(s_m.n_frames()) + ")");
      auto [wave, head] = vocoder.vocode(mel, s_m, mixed.samples.size());
      write_wav(v_out, wave);
      std::cout << "wrote " << v_out << "\n";
    } else if (ev->parsed()) {
      Config cfg = load_config_or_default(e_config);
      auto manifest = DatasetManifest::load(e_manifest);
      EvalReport report = evaluate(manifest, e_outputs, cfg.features, e_seed);
      fs::create_directories(e_report);
      report.write_json((fs::path(e_report) / "report.json").string());
      report.write_csv((fs::path(e_report) / "report.csv").string());
      for (const auto& id : report.missing)
        std::cerr << "warning: no output for " << id << "\n";
      std::cout << "si_sdr_improvement_db mean " << report.si_sdr_improvement_db.mean << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace flowtse
