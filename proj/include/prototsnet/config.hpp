#pragma once

#include <string>

#include <json.hpp>

#include "prototsnet/model.hpp"
#include "prototsnet/trainer.hpp"

namespace prototsnet {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Everything a training run needs besides the data.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    bool normalize = false;
};

// Sections "encoder", "model", "train" plus a top-level "normalize" flag.
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);

nlohmann::json to_json(const EncoderConfig& config);
nlohmann::json to_json(const ModelConfig& config);  // includes the "encoder" section
nlohmann::json to_json(const TrainConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);
ModelConfig model_config_from_json(const nlohmann::json& model, const nlohmann::json& encoder);
TrainConfig train_config_from_json(const nlohmann::json& j);

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

}  // namespace prototsnet
