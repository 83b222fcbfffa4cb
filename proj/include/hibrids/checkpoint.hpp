#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "hibrids/model.hpp"

namespace hibrids {

struct LoadedModel {
    Vocabulary vocab;
    Model model;
};

/// JSON checkpoint: the model config, the vocabulary, every named tensor with
/// its shape, and bias tables as explicit (head, key) -> value entries.
nlohmann::json checkpoint_to_json(const Model& model, const Vocabulary& vocab);
/// `clip_override` rebuilds the tables with other bounds; entries whose key
/// falls outside them raise ConfigError.
LoadedModel checkpoint_from_json(const nlohmann::json& j, std::optional<ClipBounds> clip_override = std::nullopt);

void save_checkpoint(const std::string& path, const Model& model, const Vocabulary& vocab);
LoadedModel load_checkpoint(const std::string& path, std::optional<ClipBounds> clip_override = std::nullopt);

nlohmann::json bias_table_to_json(const BiasTable& table);
void bias_table_from_json(BiasTable& table, const nlohmann::json& j);

}  // namespace hibrids
