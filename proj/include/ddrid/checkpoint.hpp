#pragma once

#include <filesystem>

#include "ddrid/train.hpp"

namespace ddrid::ckpt {

// Versioned binary container: per network a spec fingerprint and every
// parameter array (shape + little-endian float32 payload, including running
// batch-norm statistics), extended with z_c, the decoded template, optimizer
// state, the TrainConfig echo, and the selected score kind. Loading
// verifies the spec fingerprints.
void save_checkpoint(const train::TrainedModel& model, const std::filesystem::path& path);
train::TrainedModel load_checkpoint(const std::filesystem::path& path);

// TrainConfig <-> key=value text (used for the checkpoint echo and the CLI).
std::string train_config_text(const train::TrainConfig& cfg);
train::TrainConfig parse_train_config_text(const std::string& text);

}  // namespace ddrid::ckpt
