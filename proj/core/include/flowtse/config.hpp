#pragma once

#include <cstdint>
#include <string>

namespace flowtse {

// Front-end feature geometry shared by every module. A checkpoint stores
// the hash of the config it was trained with and refuses to load against
// a different one.
struct FeatureConfig {
  int sample_rate = 24000;
  int n_fft = 1024;
  int hop = 256;
  int n_mels = 100;
  double log_floor = 1e-5;

  std::string canonical_string() const;
  uint64_t hash() const;
  bool operator==(const FeatureConfig&) const = default;
};

struct ModelConfig {
  int n_layers = 4;
  int n_heads = 4;
  int embed_dim = 128;
  int ff_dim = 256;
  int mel_dim = 100;
  double cond_drop_prob = 0.2;
  // affine normalization applied to log-mels before they enter the model
  double mel_mean = -6.0;
  double mel_std = 4.0;

  // full-scale profile: 22 layers / 16 heads / 1024 embed / 2048 ff
  static ModelConfig full_scale();

  void validate() const;  // throws on embed_dim % n_heads != 0 etc.
};

struct TrainConfig {
  double lr_peak = 1e-4;
  int warmup_steps = -1;  // <0: 10% of total steps
  int total_steps = 10000;
  int batch_frames = 11000;
  double cond_drop_prob = 0.2;
  double weight_decay = 0.01;
  double grad_clip = 1.0;
  int checkpoint_every = 1000;
  uint64_t seed = 0;
};

struct SamplerConfig {
  int n_steps = 32;
  std::string method = "midpoint";  // euler | midpoint
  double cfg_scale = 2.0;
  uint64_t seed = 0;
};

struct VocoderConfig {
  int n_blocks = 3;
  int channels = 96;
  int cross_attn_every = 1;
  int n_heads = 4;
  int conv_kernel = 7;
  // STFT geometry mirrors FeatureConfig; kept here so a vocoder checkpoint
  // is self-describing
  int n_fft = 1024;
  int hop = 256;
};

// One config file, INI-style sections: [features] [model] [train]
// [sampler] [vocoder]. Missing keys keep their defaults.
struct Config {
  FeatureConfig features;
  ModelConfig model;
  TrainConfig train;
  SamplerConfig sampler;
  VocoderConfig vocoder;

  static Config load(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace flowtse
