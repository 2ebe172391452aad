#pragma once

#include <json.hpp>

#include "vmamba/model.hpp"

namespace vmamba::detail {

nlohmann::json model_config_to_json(const model::ModelConfig& cfg);
/// Starts from `base` and overrides the keys present; unknown keys throw ConfigError.
model::ModelConfig model_config_from_json(const nlohmann::json& j, model::ModelConfig base);

}  // namespace vmamba::detail
