#include "glioma/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "glioma/volume_io.hpp"

namespace glioma {

namespace {

constexpr char kMagic[8] = {'G', 'L', 'I', 'O', 'M', 'A', 'C', 'K'};
constexpr int kVersion = 1;

void put_f32_le(std::vector<uint8_t>& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  out.push_back(uint8_t(bits));
  out.push_back(uint8_t(bits >> 8));
  out.push_back(uint8_t(bits >> 16));
  out.push_back(uint8_t(bits >> 24));
}

float get_f32_le(const uint8_t* p) {
  uint32_t bits = uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
                  uint32_t(p[3]) << 24;
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, DualPathModel& model) {
  nlohmann::json manifest;
  manifest["version"] = kVersion;
  manifest["seed"] = model.seed;
  manifest["step"] = model.trained_steps;
  manifest["class_count"] = model.class_count;
  manifest["fusion"] =
      model.fusion == FusionMode::ConcatConv ? "concat_conv" : "average";
  manifest["local"] = {{"levels", model.local_cfg.levels},
                       {"base_channels", model.local_cfg.base_channels}};
  manifest["global"] = {{"levels", model.global_cfg.levels},
                        {"base_channels", model.global_cfg.base_channels}};
  manifest["ops"] = {"conv3d",   "instance_norm",      "relu",
                     "max_pool3d", "upsample_trilinear2", "concat_channels",
                     "softmax_channels"};
  auto params = model.all_parameters();
  nlohmann::json plist = nlohmann::json::array();
  for (auto* p : params) {
    const auto& s = p->tensor.shape();
    plist.push_back({{"name", p->name},
                     {"shape", {s[0], s[1], s[2], s[3], s[4]}},
                     {"count", p->tensor.numel()}});
  }
  manifest["params"] = plist;

  std::string mstr = manifest.dump();
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 8);
  uint32_t mlen = uint32_t(mstr.size());
  out.push_back(uint8_t(mlen));
  out.push_back(uint8_t(mlen >> 8));
  out.push_back(uint8_t(mlen >> 16));
  out.push_back(uint8_t(mlen >> 24));
  out.insert(out.end(), mstr.begin(), mstr.end());
  for (auto* p : params) {
    for (float v : p->tensor.values()) put_f32_le(out, v);
  }
  write_file_bytes(path, out);
}

DualPathModel load_checkpoint(const std::filesystem::path& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    fail(ErrorCode::BadMagic, "not a checkpoint file: " + path.string());
  }
  uint32_t mlen = uint32_t(bytes[8]) | uint32_t(bytes[9]) << 8 |
                  uint32_t(bytes[10]) << 16 | uint32_t(bytes[11]) << 24;
  if (bytes.size() < 12 + size_t(mlen)) {
    fail(ErrorCode::TruncatedData, "checkpoint manifest truncated");
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 12,
                                     bytes.begin() + 12 + mlen);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::BadHeader, std::string("bad checkpoint manifest: ") + e.what());
  }
  if (!manifest.contains("version") || manifest["version"] != kVersion) {
    fail(ErrorCode::BadHeader, "missing or unsupported checkpoint version");
  }

  PathConfig local{manifest["local"]["levels"], manifest["local"]["base_channels"],
                   InputResolution::Original};
  PathConfig global_cfg{manifest["global"]["levels"],
                        manifest["global"]["base_channels"],
                        InputResolution::Half};
  FusionMode fusion = manifest["fusion"] == "average" ? FusionMode::Average
                                                      : FusionMode::ConcatConv;
  DualPathModel model = build_model<float>(
      local, global_cfg, manifest["seed"].get<uint64_t>(), fusion, 4,
      manifest["class_count"].get<int>());
  model.trained_steps = manifest["step"].get<int64_t>();

  auto params = model.all_parameters();
  const auto& plist = manifest["params"];
  if (plist.size() != params.size()) {
    fail(ErrorCode::BadHeader, "checkpoint parameter list mismatch");
  }
  size_t off = 12 + mlen;
  for (size_t i = 0; i < params.size(); ++i) {
    int64_t count = plist[i]["count"].get<int64_t>();
    if (count != params[i]->tensor.numel() ||
        plist[i]["name"].get<std::string>() != params[i]->name) {
      fail(ErrorCode::BadHeader, "checkpoint shape mismatch at parameter " +
                                     params[i]->name);
    }
    if (bytes.size() < off + size_t(count) * 4) {
      fail(ErrorCode::TruncatedData, "checkpoint payload truncated");
    }
    auto& vals = params[i]->tensor.values();
    for (int64_t j = 0; j < count; ++j) {
      vals[size_t(j)] = get_f32_le(bytes.data() + off + size_t(j) * 4);
    }
    off += size_t(count) * 4;
  }
  return model;
}

}  // namespace glioma
