#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "glioma/voxel_grid.hpp"

namespace glioma {

// Single-file NIfTI-1 ("n+1"), datatypes uint8/int16/float32 only.
// Little- and big-endian headers are accepted; output is always
// little-endian with scl_slope = 1 and scl_inter = 0.
VoxelGrid parse_nifti(const std::vector<uint8_t>& bytes, bool allow_gzip = true);
std::vector<uint8_t> write_nifti(const VoxelGrid& grid, bool gzip = false);

VoxelGrid read_nifti_file(const std::filesystem::path& path);
void write_nifti_file(const std::filesystem::path& path, const VoxelGrid& grid);

// Conversions between label volumes and uint8 grids. Values outside
// {0,1,2,4} raise BadLabelValue.
LabelVolume grid_to_labels(const VoxelGrid& grid);
VoxelGrid labels_to_grid(const LabelVolume& labels);

// BraTS directory convention: <dir>/<id>/<id>_<mod>.nii[.gz], with the
// flat layout <dir>/<id>_<mod>.nii[.gz] also accepted. _seg is optional.
MultimodalCase load_case(const std::filesystem::path& directory,
                         const std::string& case_id);
std::vector<std::string> list_case_ids(const std::filesystem::path& directory);

RegionMask derive_region_mask(const LabelVolume& labels, Region region);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      const std::vector<uint8_t>& bytes);

}  // namespace glioma
