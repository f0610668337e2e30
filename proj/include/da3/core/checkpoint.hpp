#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "da3/core/parameters.hpp"

namespace da3 {

// A checkpoint is a pair of files sharing a stem:
//   <stem>.json  manifest: {"format", "params": [{name, shape, offset}], "meta"}
//   <stem>.bin   flat little-endian IEEE-754 binary64 values, offsets in bytes
void save_checkpoint(const std::filesystem::path& stem, const ParameterSet& params,
                     const nlohmann::json& meta = nlohmann::json::object());

// Loads values into an existing set with identical names and shapes.
// Returns the manifest "meta" object. Layout mismatch throws.
nlohmann::json load_checkpoint(const std::filesystem::path& stem, ParameterSet& params);

nlohmann::json read_checkpoint_manifest(const std::filesystem::path& stem);

}  // namespace da3
