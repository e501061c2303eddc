#pragma once

#include <map>
#include <string>

#include "flowtse/config.hpp"
#include "flowtse/nn_ops.hpp"
#include "json.hpp"

namespace flowtse {

// Versioned checkpoint container: JSON header (kind tag, step, feature
// config + hash, model hyperparameters, tensor directory) followed by
// raw little-endian doubles. Loading refuses a mismatched feature
// config.
struct Checkpoint {
  std::string kind;  // "flow" | "vocoder"
  int64_t step = 0;
  FeatureConfig features;
  nlohmann::json model_config;
  std::map<std::string, Eigen::MatrixXd> tensors;
};

void save_checkpoint(const std::string& path, const std::string& kind, int64_t step,
                     const FeatureConfig& feat, const nlohmann::json& model_config,
                     const ag::ParamStore& params);

Checkpoint load_checkpoint(const std::string& path);

// Copies tensors into an existing store; throws on any name/shape
// mismatch or missing tensor.
void restore_params(ag::ParamStore& params, const Checkpoint& ckpt);

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json vocoder_config_to_json(const VocoderConfig& c);
VocoderConfig vocoder_config_from_json(const nlohmann::json& j);

}  // namespace flowtse
