#pragma once

#include <filesystem>

#include "fznet/modelzoo.hpp"

namespace fznet {

// Checkpoint file: magic "FZNET1", u64 LE manifest length, JSON manifest
// (config, feature specs, parameter names and shapes), then each parameter's
// raw float64 LE values in manifest order.
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace fznet
