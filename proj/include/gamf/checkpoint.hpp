#pragma once

#include <string>

#include <json.hpp>

#include "gamf/params.hpp"

namespace gamf::nn {

inline constexpr int kCheckpointFormatVersion = 1;

// Checkpoint layout: one JSON header line (format version, parameter
// manifest with names/shapes, caller extras such as the scenario hash and
// hyperparameters), then the parameter tensors as little-endian 64-bit
// floats concatenated in manifest order.
void save_checkpoint(const std::string& path, const ParamStore& store,
                     const nlohmann::json& extras);
ParamStore load_checkpoint(const std::string& path, nlohmann::json* header_out = nullptr);

}  // namespace gamf::nn
