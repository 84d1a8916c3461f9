#pragma once

#include <array>
#include <span>
#include <vector>

#include "glioma/voxel_grid.hpp"

namespace glioma {

// worst-case plate diagonal, reported when exactly one mask is empty
inline constexpr double kHd95Sentinel = 373.13;

struct OverlapStats {
  double dice = 0, sensitivity = 0, specificity = 0;
};

struct RegionReport {
  Region region = Region::WT;
  double dice = 0, sensitivity = 0, specificity = 0;
  double hd95 = 0;
  bool hd95_sentinel = false;  // exactly one of pred/truth was empty
};

struct OverlapReport {
  std::array<RegionReport, 3> regions;  // ET, WT, TC
};

// dice = 2TP/(2TP+FP+FN); both masks empty counts as perfect agreement
OverlapStats overlap_metrics(const RegionMask& pred, const RegionMask& truth);

// Max of the two directed 95th-percentile surface distances (nearest-rank
// percentile). Surface voxels have a six-connected background neighbor;
// out-of-volume counts as background. Distances are Euclidean between voxel
// centers, scaled by spacing. Both masks empty -> 0; exactly one empty ->
// kHd95Sentinel.
double hausdorff95(const RegionMask& pred, const RegionMask& truth,
                   std::array<float, 3> spacing);

// Pearson correlation of average ranks (ties averaged)
double spearman_r(std::span<const double> x, std::span<const double> y);

struct SeSummary {
  double mse = 0, median_se = 0, std_se = 0;
};
SeSummary squared_error_summary(std::span<const double> pred,
                                std::span<const double> truth);

OverlapReport evaluate_case(const LabelVolume& pred, const LabelVolume& truth,
                            std::array<float, 3> spacing);

}  // namespace glioma
