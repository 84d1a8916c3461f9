#include "glioma/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "glioma/rng.hpp"
#include "glioma/volume_io.hpp"

namespace glioma {

namespace {

struct Builder {
  const std::vector<std::vector<double>>& X;
  std::vector<double> y;       // bootstrap targets
  std::vector<int64_t> rows;   // bootstrap row indices into X
  int dims;
  int max_depth;
  int features_per_split;
  uint64_t tree_seed;
  Tree tree;

  // sample indices are positions into rows/y
  int build(std::vector<int64_t> samples, int depth, uint64_t node_id) {
    double sum = 0.0, ss = 0.0;
    for (int64_t s : samples) sum += y[size_t(s)];
    const double mean = sum / double(samples.size());
    for (int64_t s : samples) {
      double d = y[size_t(s)] - mean;
      ss += d * d;
    }

    int node_idx = int(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[size_t(node_idx)].value = mean;
    if (depth >= max_depth || samples.size() < 2 || ss <= 0.0) {
      return node_idx;
    }

    // random feature subset for this node, keyed by (tree, node path) so a
    // deeper tree is a pure refinement of the shallower one
    Rng rng(Rng::derive(tree_seed, node_id));
    std::vector<int> feats(static_cast<size_t>(dims));
    std::iota(feats.begin(), feats.end(), 0);
    for (int i = 0; i < features_per_split; ++i) {
      int j = i + int(rng.below(uint64_t(dims - i)));
      std::swap(feats[size_t(i)], feats[size_t(j)]);
    }
    feats.resize(size_t(features_per_split));
    std::sort(feats.begin(), feats.end());

    // best split by variance reduction; scanning features then thresholds in
    // ascending order with strict improvement pins the tie-break to the
    // lowest feature index, then the lowest threshold
    int best_feature = -1;
    double best_threshold = 0.0;
    double best_score = -std::numeric_limits<double>::infinity();
    std::vector<int64_t> order;
    for (int f : feats) {
      order = samples;
      std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        return X[size_t(rows[size_t(a)])][size_t(f)] <
               X[size_t(rows[size_t(b)])][size_t(f)];
      });
      double left_sum = 0.0;
      for (size_t i = 0; i + 1 < order.size(); ++i) {
        left_sum += y[size_t(order[i])];
        double v0 = X[size_t(rows[size_t(order[i])])][size_t(f)];
        double v1 = X[size_t(rows[size_t(order[i + 1])])][size_t(f)];
        if (v0 == v1) continue;
        double nl = double(i + 1), nr = double(order.size() - i - 1);
        double right_sum = sum - left_sum;
        double score = left_sum * left_sum / nl + right_sum * right_sum / nr;
        if (score > best_score) {
          best_score = score;
          best_feature = f;
          best_threshold = (v0 + v1) / 2.0;
        }
      }
    }
    if (best_feature < 0) return node_idx;  // no usable split

    std::vector<int64_t> left, right;
    for (int64_t s : samples) {
      double v = X[size_t(rows[size_t(s)])][size_t(best_feature)];
      (v <= best_threshold ? left : right).push_back(s);
    }
    if (left.empty() || right.empty()) return node_idx;

    tree.nodes[size_t(node_idx)].feature = best_feature;
    tree.nodes[size_t(node_idx)].threshold = best_threshold;
    int l = build(std::move(left), depth + 1, node_id * 2);
    int r = build(std::move(right), depth + 1, node_id * 2 + 1);
    tree.nodes[size_t(node_idx)].left = l;
    tree.nodes[size_t(node_idx)].right = r;
    return node_idx;
  }
};

double tree_predict(const Tree& t, std::span<const double> x) {
  int i = 0;
  while (t.nodes[size_t(i)].feature >= 0) {
    const TreeNode& n = t.nodes[size_t(i)];
    i = x[size_t(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return t.nodes[size_t(i)].value;
}

}  // namespace

double ForestModel::predict(std::span<const double> features) const {
  if (int(features.size()) != dims) {
    fail(ErrorCode::DimensionMismatch,
         "expected " + std::to_string(dims) + " features, got " +
             std::to_string(features.size()));
  }
  double sum = 0.0;
  for (const Tree& t : trees) sum += tree_predict(t, features);
  double mean = sum / double(trees.size());
  return mean < 0.0 ? 0.0 : mean;
}

ForestModel fit_forest(const std::vector<std::vector<double>>& features,
                       std::span<const double> targets,
                       const ForestConfig& config) {
  const int64_t n = int64_t(features.size());
  if (n < 2 || targets.size() != size_t(n)) {
    fail(ErrorCode::EmptyData, "need at least 2 samples");
  }
  const int d = int(features[0].size());
  for (const auto& row : features) {
    if (int(row.size()) != d) {
      fail(ErrorCode::DimensionMismatch, "ragged feature matrix");
    }
    for (double v : row) {
      if (!std::isfinite(v)) fail(ErrorCode::NonFiniteInput, "non-finite feature");
    }
  }
  for (double v : targets) {
    if (!std::isfinite(v)) fail(ErrorCode::NonFiniteInput, "non-finite target");
  }

  ForestModel model;
  model.config = config;
  if (model.config.features_per_split <= 0) {
    model.config.features_per_split = (d + 2) / 3;  // ceil(d/3)
  }
  model.config.features_per_split = std::min(model.config.features_per_split, d);
  model.dims = d;
  model.trees.resize(size_t(config.tree_count));

#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < config.tree_count; ++t) {
    uint64_t tree_seed = Rng::derive(config.seed, uint64_t(t));
    Rng boot(Rng::derive(tree_seed, 0xb007ULL));
    Builder b{features, {}, {}, d, model.config.max_depth,
              model.config.features_per_split, tree_seed, {}};
    b.rows.resize(size_t(n));
    b.y.resize(size_t(n));
    for (int64_t i = 0; i < n; ++i) {
      int64_t r = int64_t(boot.below(uint64_t(n)));
      b.rows[size_t(i)] = r;
      b.y[size_t(i)] = targets[size_t(r)];
    }
    std::vector<int64_t> all(static_cast<size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    b.build(std::move(all), 0, 1);
    model.trees[size_t(t)] = std::move(b.tree);
  }
  return model;
}

CvResult cross_validate(const std::vector<std::vector<double>>& features,
                        std::span<const double> targets, int folds,
                        const std::vector<std::pair<int, int>>& grid,
                        uint64_t seed, const CvScorer& scorer) {
  const int64_t n = int64_t(features.size());
  if (n < folds) {
    fail(ErrorCode::TooFewSamples, "need at least one sample per fold");
  }
  if (grid.empty()) fail(ErrorCode::BadConfig, "empty hyperparameter grid");

  // deterministic fold assignment: shuffled order, position modulo folds
  std::vector<int64_t> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(Rng::derive(seed, 0xf01d5ULL));
  for (int64_t i = n - 1; i > 0; --i) {
    int64_t j = int64_t(rng.below(uint64_t(i + 1)));
    std::swap(perm[size_t(i)], perm[size_t(j)]);
  }
  std::vector<int> fold_of(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) fold_of[size_t(perm[size_t(i)])] = int(i % folds);

  CvResult result;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& [trees, depth] : grid) {
    double score_sum = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<std::vector<double>> train_x;
      std::vector<double> train_y, test_pred, test_true;
      std::vector<std::span<const double>> test_rows;
      for (int64_t i = 0; i < n; ++i) {
        if (fold_of[size_t(i)] == f) continue;
        train_x.push_back(features[size_t(i)]);
        train_y.push_back(targets[size_t(i)]);
      }
      ForestConfig cfg;
      cfg.tree_count = trees;
      cfg.max_depth = depth;
      cfg.seed = Rng::derive(seed, uint64_t(f) + 0x10000ULL);
      ForestModel model = fit_forest(train_x, train_y, cfg);
      for (int64_t i = 0; i < n; ++i) {
        if (fold_of[size_t(i)] != f) continue;
        test_pred.push_back(model.predict(features[size_t(i)]));
        test_true.push_back(targets[size_t(i)]);
      }
      score_sum += scorer(test_pred, test_true);
    }
    double mean_score = score_sum / double(folds);
    result.scores.emplace_back(trees, depth, mean_score);
    if (mean_score > best_score) {
      best_score = mean_score;
      result.best.tree_count = trees;
      result.best.max_depth = depth;
      result.best.seed = seed;
    }
  }
  return result;
}

void save_forest(const std::filesystem::path& path, const ForestModel& model) {
  nlohmann::json j;
  j["tree_count"] = model.config.tree_count;
  j["max_depth"] = model.config.max_depth;
  j["features_per_split"] = model.config.features_per_split;
  j["seed"] = model.config.seed;
  j["dims"] = model.dims;
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& t : model.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& n : t.nodes) {
      nodes.push_back({{"f", n.feature},
                       {"t", n.threshold},
                       {"l", n.left},
                       {"r", n.right},
                       {"v", n.value}});
    }
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  std::string s = j.dump();
  write_file_bytes(path, std::vector<uint8_t>(s.begin(), s.end()));
}

ForestModel load_forest(const std::filesystem::path& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::DataError, std::string("bad forest file: ") + e.what());
  }
  ForestModel model;
  model.config.tree_count = j["tree_count"].get<int>();
  model.config.max_depth = j["max_depth"].get<int>();
  model.config.features_per_split = j["features_per_split"].get<int>();
  model.config.seed = j["seed"].get<uint64_t>();
  model.dims = j["dims"].get<int>();
  for (const auto& tj : j["trees"]) {
    Tree t;
    for (const auto& nj : tj) {
      t.nodes.push_back({nj["f"].get<int>(), nj["t"].get<double>(),
                         nj["l"].get<int>(), nj["r"].get<int>(),
                         nj["v"].get<double>()});
    }
    model.trees.push_back(std::move(t));
  }
  return model;
}

}  // namespace glioma
