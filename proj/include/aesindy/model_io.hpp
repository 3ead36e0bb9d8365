#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "aesindy/trainer.hpp"

namespace aesindy {

inline constexpr int kModelFormatVersion = 1;

/// JSON encodings of the model pieces. Doubles print in shortest round-trip form.
nlohmann::json to_json(const TrainConfig& cfg);
/// Reads a (possibly partial) config on top of `base`. Unknown keys are a DataError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

nlohmann::json to_json(const ParamTransform& t);
ParamTransform param_transform_from_json(const nlohmann::json& j);

nlohmann::json to_json(const FeatureLibrary& lib);
FeatureLibrary feature_library_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& j);

std::string serialize_model(const TrainedModel& model);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

/// Reads and parses a JSON file, throwing DataError on I/O or syntax errors.
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace aesindy
