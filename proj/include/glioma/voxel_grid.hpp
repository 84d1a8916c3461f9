#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "glioma/errors.hpp"

namespace glioma {

enum class NiftiDatatype : int16_t {
  Uint8 = 2,    // DT_UINT8
  Int16 = 4,    // DT_INT16
  Float32 = 16  // DT_FLOAT32
};

struct NiftiHeader {
  std::array<int32_t, 3> dims{0, 0, 0};
  NiftiDatatype datatype = NiftiDatatype::Float32;
  std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
  float scale_slope = 1.0f;
  float scale_intercept = 0.0f;
  bool big_endian_source = false;
  // orientation affine, stored but never interpreted (volumes are co-registered)
  int16_t qform_code = 0;
  int16_t sform_code = 0;
  std::array<float, 12> srow{};
};

// One scalar 3D image, x-fastest ordering: values[(z*H + y)*W + x] with
// dims = {W, H, D}. Spacing in mm.
struct VoxelGrid {
  NiftiHeader header;
  std::vector<float> values;

  int64_t width() const { return header.dims[0]; }
  int64_t height() const { return header.dims[1]; }
  int64_t depth() const { return header.dims[2]; }
  int64_t numel() const { return width() * height() * depth(); }

  float& at(int64_t x, int64_t y, int64_t z) {
    return values[(z * height() + y) * width() + x];
  }
  float at(int64_t x, int64_t y, int64_t z) const {
    return values[(z * height() + y) * width() + x];
  }

  bool same_shape(const VoxelGrid& other) const {
    return header.dims == other.header.dims;
  }
};

VoxelGrid make_grid(std::array<int32_t, 3> dims, float fill = 0.0f,
                    std::array<float, 3> spacing = {1.0f, 1.0f, 1.0f});

// Integer tumor labels over {0,1,2,4}: 1 = necrotic/non-enhancing core,
// 2 = peritumoral edema, 4 = enhancing tumor.
struct LabelVolume {
  std::array<int32_t, 3> dims{0, 0, 0};
  std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
  std::vector<uint8_t> values;

  int64_t numel() const {
    return int64_t(dims[0]) * dims[1] * dims[2];
  }
};

enum class Region { WT, TC, ET };

const char* region_name(Region r);

// Binary mask derived from a LabelVolume: WT = {1,2,4}, TC = {1,4}, ET = {4}.
struct RegionMask {
  Region region = Region::WT;
  std::array<int32_t, 3> dims{0, 0, 0};
  std::vector<uint8_t> values;

  int64_t numel() const {
    return int64_t(dims[0]) * dims[1] * dims[2];
  }
  int64_t count() const;
};

struct MultimodalCase {
  std::string case_id;
  VoxelGrid flair, t1, t1ce, t2;
  std::optional<LabelVolume> labels;
  std::optional<double> age_days;  // carried but unused by the model

  std::array<int32_t, 3> dims() const { return flair.header.dims; }
  const VoxelGrid& modality(int i) const;
  VoxelGrid& modality(int i);
};

inline constexpr int kModalityCount = 4;
inline constexpr const char* kModalityNames[kModalityCount] = {"flair", "t1",
                                                               "t1ce", "t2"};

}  // namespace glioma
