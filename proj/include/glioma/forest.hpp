#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "glioma/errors.hpp"

namespace glioma {

struct ForestConfig {
  int tree_count = 30;
  int max_depth = 10;
  int features_per_split = 0;  // 0 = ceil(d/3)
  uint64_t seed = 0;
};

// Flat CART node: feature < 0 marks a leaf carrying the mean target.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1, right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct ForestModel {
  ForestConfig config;
  int dims = 0;
  std::vector<Tree> trees;

  // mean of per-tree leaf values, clamped to >= 0
  double predict(std::span<const double> features) const;
};

// Bootstrap-bagged regression trees; splits maximize variance reduction over
// a random ceil(d/3)-feature subset, thresholds at midpoints of consecutive
// sorted unique values.
ForestModel fit_forest(const std::vector<std::vector<double>>& features,
                       std::span<const double> targets,
                       const ForestConfig& config);

using CvScorer = std::function<double(std::span<const double> pred,
                                      std::span<const double> truth)>;

struct CvResult {
  ForestConfig best;
  // (tree_count, depth, mean score) per grid entry
  std::vector<std::tuple<int, int, double>> scores;
};

// Deterministic seed-derived fold assignment; ties prefer fewer trees, then
// shallower depth.
CvResult cross_validate(const std::vector<std::vector<double>>& features,
                        std::span<const double> targets, int folds,
                        const std::vector<std::pair<int, int>>& grid,
                        uint64_t seed, const CvScorer& scorer);

void save_forest(const std::filesystem::path& path, const ForestModel& model);
ForestModel load_forest(const std::filesystem::path& path);

}  // namespace glioma
