#pragma once

#include <filesystem>

#include "core/toymodel.hpp"

namespace modec::toymodel {

// On-disk layout: <dir>/model.json manifest plus one tensor blob per weight.
// The manifest carries the config, blob file names, and the per-head rotary
// index selections of compressed models.
void save_model(const std::filesystem::path& dir, const Model& m);
Model load_model(const std::filesystem::path& dir);

}  // namespace modec::toymodel
