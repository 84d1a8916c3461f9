#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace glioma {

inline constexpr const char* kToolVersion = "0.1.0";

// One manifest is written next to every command's outputs; the config
// snapshot plus seed is enough to reproduce the run.
struct RunManifest {
  std::string command;
  std::string tool_version = kToolVersion;
  uint64_t seed = 0;
  std::map<std::string, std::string> config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double wall_time_s = 0;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace glioma
