#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "glioma/voxel_grid.hpp"

namespace glioma {

// Voxels with nonzero raw intensity in any modality. All preprocessing
// statistics are computed over this mask only.
struct BrainMask {
  std::array<int32_t, 3> dims{0, 0, 0};
  std::vector<uint8_t> values;

  int64_t numel() const { return int64_t(dims[0]) * dims[1] * dims[2]; }
  int64_t count() const;
};

struct HistogramMapping {
  int bins = 0;
  double source_min = 0, source_width = 0;     // bin geometry
  double reference_min = 0, reference_width = 0;
  std::vector<double> source_cdf;     // cumulative mass per source bin
  std::vector<double> reference_cdf;  // cumulative mass per reference bin
  // per reference bin: smallest/largest masked value, for exact inversion of
  // single-valued bins
  std::vector<double> reference_bin_min, reference_bin_max;
  std::vector<double> lookup;  // target intensity at each source bin's upper quantile

  // binned piecewise-linear view of the map (histogram_match itself uses
  // exact source ranks, which keeps it invariant to monotone relabeling)
  double map(double v) const;
};

BrainMask compute_brain_mask(const MultimodalCase& c);

// (v - mean) / std over the mask (population std); voxels outside the mask
// are set to 0.
VoxelGrid zscore_normalize(const VoxelGrid& grid, const BrainMask& mask);

HistogramMapping build_histogram_mapping(const VoxelGrid& source,
                                         const VoxelGrid& reference,
                                         const BrainMask& mask_s,
                                         const BrainMask& mask_r, int bins);
VoxelGrid histogram_match(const VoxelGrid& source, const VoxelGrid& reference,
                          const BrainMask& mask_s, const BrainMask& mask_r,
                          int bins);

// Divides masked voxels by exp(P*), P* the least-squares polynomial of the
// given total degree fit to masked log-intensities, re-centered so the
// masked geometric mean is preserved. Voxels outside the mask are left
// unchanged.
VoxelGrid bias_correct(const VoxelGrid& grid, const BrainMask& mask,
                       int degree);

enum class ResampleFactor { Down2, Up2 };
VoxelGrid resample(const VoxelGrid& grid, ResampleFactor factor);

// original_index = output_index + offset[axis]; negative offsets mean the
// output was padded below.
struct CropPadOffset {
  std::array<int32_t, 3> offset{0, 0, 0};
  std::array<int32_t, 3> original_dims{0, 0, 0};
};

std::pair<VoxelGrid, CropPadOffset> crop_pad_to_shape(
    const VoxelGrid& grid, std::array<int32_t, 3> target_dims);

// Map a label volume produced at the cropped/padded shape back onto the
// original grid; padded regions are dropped, cropped regions become 0.
LabelVolume uncrop_labels(const LabelVolume& labels, const CropPadOffset& off);

struct PreprocessConfig {
  std::string reference_case;  // empty = lexicographically first training case
  int histogram_bins = 256;
  int bias_degree = 3;
  bool enable_bias_correction = true;
  bool enable_histogram_match = true;
};

// bias correction -> histogram matching -> z-score, per modality.
MultimodalCase preprocess_case(const MultimodalCase& c,
                               const MultimodalCase& reference,
                               const PreprocessConfig& cfg);

}  // namespace glioma
