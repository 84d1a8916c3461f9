#include "glioma/manifest.hpp"

#include <json.hpp>

#include "glioma/errors.hpp"
#include "glioma/volume_io.hpp"

namespace glioma {

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["tool_version"] = m.tool_version;
  j["seed"] = m.seed;
  j["config"] = m.config;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["wall_time_s"] = m.wall_time_s;
  std::string s = j.dump(2);
  s.push_back('\n');
  write_file_bytes(path, std::vector<uint8_t>(s.begin(), s.end()));
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::DataError, std::string("bad manifest: ") + e.what());
  }
  RunManifest m;
  m.command = j.value("command", "");
  m.tool_version = j.value("tool_version", "");
  m.seed = j.value("seed", uint64_t(0));
  if (j.contains("config")) {
    for (auto& [k, v] : j["config"].items()) {
      m.config[k] = v.get<std::string>();
    }
  }
  if (j.contains("inputs")) {
    m.inputs = j["inputs"].get<std::vector<std::string>>();
  }
  if (j.contains("outputs")) {
    m.outputs = j["outputs"].get<std::vector<std::string>>();
  }
  m.wall_time_s = j.value("wall_time_s", 0.0);
  return m;
}

}  // namespace glioma
