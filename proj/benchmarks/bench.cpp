#include <benchmark/benchmark.h>

#include "flowtse/cfm.hpp"
#include "flowtse/sampler.hpp"
#include "flowtse/vocoder.hpp"

using namespace flowtse;

namespace {

Waveform random_wave(size_t n, uint64_t seed) {
  Rng rng(seed);
  Waveform w;
  w.sample_rate = 24000;
  w.samples.resize(n);
  for (auto& s : w.samples) s = rng.uniform(-0.5, 0.5);
  return w;
}

MelSpectrogram random_mel(int t, int d, uint64_t seed) {
  Rng rng(seed);
  MelSpectrogram m;
  m.n_mels = d;
  m.frames.resize(t, d);
  for (int r = 0; r < t; ++r)
    for (int c = 0; c < d; ++c) m.frames(r, c) = -6.0 + 2.0 * rng.normal();
  return m;
}

void BM_Stft(benchmark::State& state) {
  Waveform w = random_wave(static_cast<size_t>(state.range(0)), 1);
  for (auto _ : state) {
    auto s = stft(w, 1024, 256);
    benchmark::DoNotOptimize(s.bins.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Stft)->Arg(24000)->Arg(96000);

void BM_LogMel(benchmark::State& state) {
  FeatureConfig feat;
  Waveform w = random_wave(24000, 2);
  for (auto _ : state) {
    auto m = log_mel(w, feat);
    benchmark::DoNotOptimize(m.frames.data());
  }
}
BENCHMARK(BM_LogMel);

void BM_FlowVelocity(benchmark::State& state) {
  ModelConfig cfg;  // desk profile
  FeatureConfig feat;
  FlowModel model(cfg, feat, 3);
  const int t_e = 47, t_m = static_cast<int>(state.range(0));
  ConditioningInput cond{random_mel(t_e, cfg.mel_dim, 4), random_mel(t_m, cfg.mel_dim, 5),
                         false};
  Rng rng(6);
  FlowState st;
  st.time = 0.5;
  st.values.resize(t_e + t_m, cfg.mel_dim);
  for (int r = 0; r < st.values.rows(); ++r)
    for (int c = 0; c < st.values.cols(); ++c) st.values(r, c) = rng.normal();
  for (auto _ : state) {
    auto v = model.velocity(st, cond);
    benchmark::DoNotOptimize(v.data());
  }
}
BENCHMARK(BM_FlowVelocity)->Arg(94)->Arg(188);

void BM_FlowTrainStep(benchmark::State& state) {
  ModelConfig cfg;
  FeatureConfig feat;
  FlowModel model(cfg, feat, 7);
  const int t_e = 47, t_m = 94;
  Rng rng(8);
  Eigen::MatrixXd x1(t_e + t_m, cfg.mel_dim), cond(t_e + t_m, cfg.mel_dim);
  for (int r = 0; r < x1.rows(); ++r)
    for (int c = 0; c < x1.cols(); ++c) {
      x1(r, c) = rng.normal();
      cond(r, c) = rng.normal();
    }
  std::vector<bool> mask(t_e + t_m, false);
  for (int r = t_e; r < t_e + t_m; ++r) mask[r] = true;
  ag::AdamW opt(model.params(), 0.01, 1.0);
  for (auto _ : state) {
    model.params().zero_grads();
    PathSample s = make_path_sample(x1, rng.uniform(), rng);
    ag::Var out = model.forward(ag::constant(s.xt), s.t, cond, t_e, t_m, false);
    ag::Var loss = cfm_loss_graph(out, s, mask);
    ag::backward(loss);
    opt.step(1e-4);
  }
}
BENCHMARK(BM_FlowTrainStep);

void BM_SamplerExtract(benchmark::State& state) {
  ModelConfig cfg;
  FeatureConfig feat;
  FlowModel model(cfg, feat, 9);
  Waveform enroll = random_wave(24000, 10);
  Waveform mixed = random_wave(24000, 11);
  SamplerConfig sc;
  sc.n_steps = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto m = extract(model, enroll, mixed, sc);
    benchmark::DoNotOptimize(m.frames.data());
  }
}
BENCHMARK(BM_SamplerExtract)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_VocoderForward(benchmark::State& state) {
  FeatureConfig feat;
  VocoderConfig vcfg;
  PhaseVocoder voc(vcfg, feat, 12);
  Waveform mixed = random_wave(24000, 13);
  auto s_m = stft(mixed, feat.n_fft, feat.hop);
  MelSpectrogram mel = log_mel(mixed, feat);
  for (auto _ : state) {
    auto [wave, head] = voc.vocode(mel, s_m, mixed.samples.size());
    benchmark::DoNotOptimize(wave.samples.data());
  }
  state.SetLabel("1s audio");
}
BENCHMARK(BM_VocoderForward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
