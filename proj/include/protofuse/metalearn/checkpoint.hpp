#pragma once

#include <filesystem>
#include <json.hpp>

#include "protofuse/metalearn/learner.hpp"

namespace protofuse::metalearn {

inline constexpr int kCheckpointVersion = 1;

nlohmann::json encoder_config_json(const encoder::EncoderConfig& cfg);
encoder::EncoderConfig encoder_config_from_json(const nlohmann::json& j);
nlohmann::json fusion_json(const fusion::FusionStrategy& f);
fusion::FusionStrategy fusion_from_json(const nlohmann::json& j);
nlohmann::json meta_config_json(const MetaConfig& cfg);
MetaConfig meta_config_from_json(const nlohmann::json& j);

/// Whole learner state as one JSON document: version, configs, vocabulary,
/// every named parameter tensor, optimizer moments and the rng stream.
/// Doubles are written in shortest round-trip form, so a save/load cycle
/// reproduces every bit.
nlohmann::json checkpoint_json(const LearnerState& state);
LearnerState checkpoint_from_json(const nlohmann::json& j);

/// Throws std::runtime_error when the file cannot be written or read, and
/// std::invalid_argument on a malformed or wrong-version document.
void save_checkpoint(const LearnerState& state, const std::filesystem::path& path);
LearnerState load_checkpoint(const std::filesystem::path& path);

}  // namespace protofuse::metalearn
