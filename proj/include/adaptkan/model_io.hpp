#pragma once

#include "adaptkan/network.hpp"

#include <json.hpp>

#include <string>

namespace adaptkan {

inline constexpr int kModelFormatVersion = 1;

struct ModelFile {
    AdaptKanNet net;
    /// Free-form training metadata (seed, plan, ...).
    nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json model_to_json(const AdaptKanNet& net, const nlohmann::json& metadata = nlohmann::json::object());
/// Throws ConfigError on structural problems or an unknown format version.
ModelFile model_from_json(const nlohmann::json& doc);

void save_model(const std::string& path, const AdaptKanNet& net,
                const nlohmann::json& metadata = nlohmann::json::object());
ModelFile load_model(const std::string& path);

nlohmann::json adapt_config_to_json(const AdaptConfig& cfg);
/// Missing keys keep their defaults.
AdaptConfig adapt_config_from_json(const nlohmann::json& j);

}  // namespace adaptkan
