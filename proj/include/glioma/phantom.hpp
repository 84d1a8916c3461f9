#pragma once

#include <filesystem>

#include "glioma/voxel_grid.hpp"

namespace glioma {

// Deterministic synthetic multimodal cases: a brain ellipsoid containing
// nested tumor ellipsoids (enhancing core inside necrotic shell inside
// edema), constant per-tissue intensities plus Gaussian noise, an optional
// multiplicative log-polynomial bias field, and survival days planted as a
// linear function of the whole-tumor volume fraction.
struct PhantomSpec {
  std::array<int32_t, 3> dims{64, 64, 64};
  uint64_t seed = 0;

  std::array<double, 3> brain_semi_axes{0.42, 0.40, 0.38};  // fraction of dims
  int tumor_count = 1;
  double tumor_radius_min = 7.0;  // voxels
  double tumor_radius_max = 14.0;
  double tc_ratio = 0.70;  // necrotic shell boundary (fraction of WT radius)
  double et_ratio = 0.45;  // enhancing core boundary; must be < tc_ratio

  // rows: brain, necrotic(1), edema(2), enhancing(4); columns follow
  // kModalityNames
  std::array<std::array<double, 4>, 4> tissue_intensity{{
      {0.30, 0.70, 0.70, 0.35},
      {0.50, 0.30, 0.25, 0.60},
      {0.90, 0.45, 0.45, 0.85},
      {0.70, 0.60, 1.00, 0.70},
  }};
  double intensity_scale = 600.0;
  double noise_std = 0.02;  // relative to intensity_scale

  bool bias_field = false;
  int bias_degree = 2;
  double bias_amplitude = 0.25;  // log-field coefficient range

  double survival_intercept = 100.0;
  double survival_slope = 2800.0;  // days per unit whole-tumor volume fraction
  double survival_noise_std = 30.0;
};

struct PhantomCase {
  MultimodalCase data;   // labels always present
  VoxelGrid bias_field;  // field actually applied (all ones when disabled)
  double true_days = 0;
};

PhantomCase generate_case(const PhantomSpec& spec, int index);

// BraTS directory layout loadable by load_case, plus survival_truth.csv
void generate_dataset(const PhantomSpec& spec, int n,
                      const std::filesystem::path& out_dir);

}  // namespace glioma
