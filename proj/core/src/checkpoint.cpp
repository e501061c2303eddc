#include "flowtse/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace flowtse {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'F', 'T', 'S', 'E', 'C', 'K', 'P', '1'};
}

void save_checkpoint(const std::string& path, const std::string& kind, int64_t step,
                     const FeatureConfig& feat, const json& model_config,
                     const ag::ParamStore& params) {
  json header;
  header["kind"] = kind;
  header["step"] = step;
  header["features"] = {{"sample_rate", feat.sample_rate},
                        {"n_fft", feat.n_fft},
                        {"hop", feat.hop},
                        {"n_mels", feat.n_mels},
                        {"log_floor", feat.log_floor}};
  header["feature_hash"] = feat.hash();
  header["model_config"] = model_config;
  json dir = json::array();
  for (const auto& [name, p] : params.params)
    dir.push_back({{"name", name},
                   {"rows", p->value.rows()},
                   {"cols", p->value.cols()}});
  header["tensors"] = dir;

  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, 8);
  const uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, p] : params.params)
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kMagic, 8))
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  json header = json::parse(hs);

  Checkpoint ckpt;
  ckpt.kind = header.at("kind").get<std::string>();
  ckpt.step = header.at("step").get<int64_t>();
  const auto& f = header.at("features");
  ckpt.features.sample_rate = f.at("sample_rate").get<int>();
  ckpt.features.n_fft = f.at("n_fft").get<int>();
  ckpt.features.hop = f.at("hop").get<int>();
  ckpt.features.n_mels = f.at("n_mels").get<int>();
  ckpt.features.log_floor = f.at("log_floor").get<double>();
  if (header.at("feature_hash").get<uint64_t>() != ckpt.features.hash())
    throw std::runtime_error("load_checkpoint: feature hash inconsistent in " + path);
  ckpt.model_config = header.at("model_config");

  for (const auto& e : header.at("tensors")) {
    const auto name = e.at("name").get<std::string>();
    const auto rows = e.at("rows").get<Eigen::Index>();
    const auto cols = e.at("cols").get<Eigen::Index>();
    Eigen::MatrixXd m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated tensor " + name);
    ckpt.tensors[name] = std::move(m);
  }
  return ckpt;
}

void restore_params(ag::ParamStore& params, const Checkpoint& ckpt) {
  for (auto& [name, p] : params.params) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end())
      throw std::runtime_error("restore_params: checkpoint missing tensor " + name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw std::runtime_error("restore_params: shape mismatch for " + name);
    p->value = it->second;
  }
  if (ckpt.tensors.size() != params.params.size())
    throw std::runtime_error("restore_params: checkpoint has extra tensors");
}

json model_config_to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},   {"n_heads", c.n_heads},
          {"embed_dim", c.embed_dim}, {"ff_dim", c.ff_dim},
          {"mel_dim", c.mel_dim},     {"cond_drop_prob", c.cond_drop_prob},
          {"mel_mean", c.mel_mean},   {"mel_std", c.mel_std}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.mel_dim = j.at("mel_dim").get<int>();
  c.cond_drop_prob = j.at("cond_drop_prob").get<double>();
  c.mel_mean = j.at("mel_mean").get<double>();
  c.mel_std = j.at("mel_std").get<double>();
  return c;
}

json vocoder_config_to_json(const VocoderConfig& c) {
  return {{"n_blocks", c.n_blocks}, {"channels", c.channels},
          {"cross_attn_every", c.cross_attn_every}, {"n_heads", c.n_heads},
          {"conv_kernel", c.conv_kernel}, {"n_fft", c.n_fft}, {"hop", c.hop}};
}

VocoderConfig vocoder_config_from_json(const json& j) {
  VocoderConfig c;
  c.n_blocks = j.at("n_blocks").get<int>();
  c.channels = j.at("channels").get<int>();
  c.cross_attn_every = j.at("cross_attn_every").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.conv_kernel = j.at("conv_kernel").get<int>();
  c.n_fft = j.at("n_fft").get<int>();
  c.hop = j.at("hop").get<int>();
  return c;
}

}  // namespace flowtse
