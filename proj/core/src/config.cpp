#include "flowtse/config.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace flowtse {

std::string FeatureConfig::canonical_string() const {
  std::ostringstream os;
  os << "sample_rate=" << sample_rate << ";n_fft=" << n_fft << ";hop=" << hop
     << ";n_mels=" << n_mels << ";log_floor=" << log_floor;
  return os.str();
}

uint64_t FeatureConfig::hash() const {
  // FNV-1a over the canonical serialization
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : canonical_string()) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.n_layers = 22;
  c.n_heads = 16;
  c.embed_dim = 1024;
  c.ff_dim = 2048;
  return c;
}

void ModelConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || embed_dim < 1 || ff_dim < 1 || mel_dim < 1)
    throw std::invalid_argument("ModelConfig: all dimensions must be positive");
  if (embed_dim % n_heads != 0)
    throw std::invalid_argument("ModelConfig: embed_dim must be divisible by n_heads");
  if (cond_drop_prob < 0.0 || cond_drop_prob > 1.0)
    throw std::invalid_argument("ModelConfig: cond_drop_prob must be in [0,1]");
  if (mel_std <= 0.0) throw std::invalid_argument("ModelConfig: mel_std must be positive");
}

namespace {

using IniMap = std::map<std::string, std::map<std::string, std::string>>;

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

IniMap parse_ini(std::istream& in) {
  IniMap out;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key=value");
    out[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

template <typename T>
void get(const IniMap& m, const std::string& sec, const std::string& key, T& dst) {
  auto s = m.find(sec);
  if (s == m.end()) return;
  auto k = s->second.find(key);
  if (k == s->second.end()) return;
  std::istringstream is(k->second);
  T v;
  if (!(is >> v)) throw std::runtime_error("config [" + sec + "] " + key + ": bad value '" + k->second + "'");
  dst = v;
}

}  // namespace

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  IniMap m = parse_ini(in);

  Config c;
  get(m, "features", "sample_rate", c.features.sample_rate);
  get(m, "features", "n_fft", c.features.n_fft);
  get(m, "features", "hop", c.features.hop);
  get(m, "features", "n_mels", c.features.n_mels);
  get(m, "features", "log_floor", c.features.log_floor);

  std::string profile;
  get(m, "model", "profile", profile);
  if (profile == "full") c.model = ModelConfig::full_scale();
  get(m, "model", "n_layers", c.model.n_layers);
  get(m, "model", "n_heads", c.model.n_heads);
  get(m, "model", "embed_dim", c.model.embed_dim);
  get(m, "model", "ff_dim", c.model.ff_dim);
  get(m, "model", "mel_dim", c.model.mel_dim);
  get(m, "model", "cond_drop_prob", c.model.cond_drop_prob);
  get(m, "model", "mel_mean", c.model.mel_mean);
  get(m, "model", "mel_std", c.model.mel_std);

  get(m, "train", "lr_peak", c.train.lr_peak);
  get(m, "train", "warmup_steps", c.train.warmup_steps);
  get(m, "train", "total_steps", c.train.total_steps);
  get(m, "train", "batch_frames", c.train.batch_frames);
  get(m, "train", "cond_drop_prob", c.train.cond_drop_prob);
  get(m, "train", "weight_decay", c.train.weight_decay);
  get(m, "train", "grad_clip", c.train.grad_clip);
  get(m, "train", "checkpoint_every", c.train.checkpoint_every);
  get(m, "train", "seed", c.train.seed);

  get(m, "sampler", "n_steps", c.sampler.n_steps);
  get(m, "sampler", "method", c.sampler.method);
  get(m, "sampler", "cfg_scale", c.sampler.cfg_scale);
  get(m, "sampler", "seed", c.sampler.seed);

  get(m, "vocoder", "n_blocks", c.vocoder.n_blocks);
  get(m, "vocoder", "channels", c.vocoder.channels);
  get(m, "vocoder", "cross_attn_every", c.vocoder.cross_attn_every);
  get(m, "vocoder", "n_heads", c.vocoder.n_heads);
  get(m, "vocoder", "conv_kernel", c.vocoder.conv_kernel);
  c.vocoder.n_fft = c.features.n_fft;
  c.vocoder.hop = c.features.hop;

  c.model.validate();
  if (c.model.mel_dim != c.features.n_mels)
    throw std::runtime_error("config: model.mel_dim must equal features.n_mels");
  return c;
}

void Config::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file: " + path);
  out << "[features]\n"
      << "sample_rate = " << features.sample_rate << "\n"
      << "n_fft = " << features.n_fft << "\n"
      << "hop = " << features.hop << "\n"
      << "n_mels = " << features.n_mels << "\n"
      << "log_floor = " << features.log_floor << "\n\n";
  out << "[model]\n"
      << "n_layers = " << model.n_layers << "\n"
      << "n_heads = " << model.n_heads << "\n"
      << "embed_dim = " << model.embed_dim << "\n"
      << "ff_dim = " << model.ff_dim << "\n"
      << "mel_dim = " << model.mel_dim << "\n"
      << "cond_drop_prob = " << model.cond_drop_prob << "\n"
      << "mel_mean = " << model.mel_mean << "\n"
      << "mel_std = " << model.mel_std << "\n\n";
  out << "[train]\n"
      << "lr_peak = " << train.lr_peak << "\n"
      << "warmup_steps = " << train.warmup_steps << "\n"
      << "total_steps = " << train.total_steps << "\n"
      << "batch_frames = " << train.batch_frames << "\n"
      << "cond_drop_prob = " << train.cond_drop_prob << "\n"
      << "weight_decay = " << train.weight_decay << "\n"
      << "grad_clip = " << train.grad_clip << "\n"
      << "checkpoint_every = " << train.checkpoint_every << "\n"
      << "seed = " << train.seed << "\n\n";
  out << "[sampler]\n"
      << "n_steps = " << sampler.n_steps << "\n"
      << "method = " << sampler.method << "\n"
      << "cfg_scale = " << sampler.cfg_scale << "\n"
      << "seed = " << sampler.seed << "\n\n";
  out << "[vocoder]\n"
      << "n_blocks = " << vocoder.n_blocks << "\n"
      << "channels = " << vocoder.channels << "\n"
      << "cross_attn_every = " << vocoder.cross_attn_every << "\n"
      << "n_heads = " << vocoder.n_heads << "\n"
      << "conv_kernel = " << vocoder.conv_kernel << "\n";
}

}  // namespace flowtse
