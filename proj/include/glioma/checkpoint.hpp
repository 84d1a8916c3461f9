#pragma once

#include <filesystem>

#include "glioma/model.hpp"

namespace glioma {

// Checkpoint container: 8-byte magic, little-endian manifest length, JSON
// manifest (version tag, op list, parameter shapes, seed, step count), then
// raw little-endian float32 payloads in manifest order.
void save_checkpoint(const std::filesystem::path& path, DualPathModel& model);
DualPathModel load_checkpoint(const std::filesystem::path& path);

}  // namespace glioma
