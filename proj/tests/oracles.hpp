// Independent oracles used by the unit and acceptance suites. These must not
// share code with the implementation paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "glioma/metrics.hpp"
#include "glioma/rng.hpp"
#include "glioma/tensor.hpp"
#include "glioma/voxel_grid.hpp"

namespace oracle {

// --- central finite differences ----------------------------------------------

struct FdReport {
  double max_rel_error = 0.0;
  int checked = 0;
};

// make_loss() must rebuild the graph from the current values of x.
template <class MakeLoss>
FdReport fd_check(glioma::TensorT<double>& x, MakeLoss&& make_loss,
                  double h = 1e-4, int max_elements = -1, uint64_t seed = 1) {
  using glioma::backward;
  x.zero_grad();
  auto loss = make_loss();
  backward(loss);
  std::vector<double> analytic = x.grad();

  std::vector<int64_t> indices;
  if (max_elements > 0 && x.numel() > max_elements) {
    glioma::Rng rng(seed);
    for (int i = 0; i < max_elements; ++i) {
      indices.push_back(int64_t(rng.below(uint64_t(x.numel()))));
    }
  } else {
    for (int64_t i = 0; i < x.numel(); ++i) indices.push_back(i);
  }

  FdReport report;
  for (int64_t i : indices) {
    double orig = x.values()[size_t(i)];
    x.values()[size_t(i)] = orig + h;
    double fp = make_loss().scalar();
    x.values()[size_t(i)] = orig - h;
    double fm = make_loss().scalar();
    x.values()[size_t(i)] = orig;
    double fd = (fp - fm) / (2.0 * h);
    double a = analytic[size_t(i)];
    double denom = std::max({std::fabs(a), std::fabs(fd), 1e-6});
    report.max_rel_error =
        std::max(report.max_rel_error, std::fabs(a - fd) / denom);
    report.checked += 1;
  }
  return report;
}

// one-hot target for probe losses; sum(softmax(x)) is constant, so gradient
// checks must pull back through a non-degenerate functional such as
// dice_ce_loss against this target
template <class T>
glioma::TensorT<T> random_onehot(typename glioma::TensorT<T>::Shape s,
                                 glioma::Rng& rng) {
  glioma::TensorT<T> target = glioma::TensorT<T>::zeros(s);
  const int64_t C = s[1];
  const int64_t spatial = s[2] * s[3] * s[4];
  for (int64_t b = 0; b < s[0]; ++b) {
    for (int64_t i = 0; i < spatial; ++i) {
      int64_t hot = int64_t(rng.below(uint64_t(C)));
      target.values()[size_t((b * C + hot) * spatial + i)] = T(1);
    }
  }
  return target;
}

// --- brute-force HD95 ----------------------------------------------------------

// All-pairs directed distances over independently extracted surfaces. Both
// routes evaluate dx*dx*wx + dy*dy*wy + dz*dz*wz, so agreement is exact.
inline double hd95_bruteforce(const glioma::RegionMask& pred,
                              const glioma::RegionMask& truth,
                              std::array<float, 3> spacing) {
  const int64_t W = pred.dims[0], H = pred.dims[1], D = pred.dims[2];
  auto surface = [&](const glioma::RegionMask& m) {
    std::vector<std::array<int64_t, 3>> pts;
    auto at = [&](int64_t x, int64_t y, int64_t z) -> bool {
      if (x < 0 || x >= W || y < 0 || y >= H || z < 0 || z >= D) return false;
      return m.values[size_t((z * H + y) * W + x)] != 0;
    };
    for (int64_t z = 0; z < D; ++z)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
          if (at(x, y, z) &&
              !(at(x - 1, y, z) && at(x + 1, y, z) && at(x, y - 1, z) &&
                at(x, y + 1, z) && at(x, y, z - 1) && at(x, y, z + 1)))
            pts.push_back({x, y, z});
    return pts;
  };
  int64_t np = 0, nt = 0;
  for (auto v : pred.values) np += v != 0;
  for (auto v : truth.values) nt += v != 0;
  if (np == 0 && nt == 0) return 0.0;
  if (np == 0 || nt == 0) return glioma::kHd95Sentinel;

  auto sp = surface(pred);
  auto st = surface(truth);
  const double wx = double(spacing[0]) * double(spacing[0]);
  const double wy = double(spacing[1]) * double(spacing[1]);
  const double wz = double(spacing[2]) * double(spacing[2]);
  auto directed = [&](const std::vector<std::array<int64_t, 3>>& from,
                      const std::vector<std::array<int64_t, 3>>& to) {
    std::vector<double> d2;
    d2.reserve(from.size());
    for (const auto& a : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& b : to) {
        double dx = double(a[0] - b[0]), dy = double(a[1] - b[1]),
               dz = double(a[2] - b[2]);
        double d = dx * dx * wx + dy * dy * wy + dz * dz * wz;
        if (d < best) best = d;
      }
      d2.push_back(best);
    }
    std::sort(d2.begin(), d2.end());
    size_t k = size_t(std::ceil(0.95 * double(d2.size())));
    if (k == 0) k = 1;
    return d2[k - 1];
  };
  return std::sqrt(std::max(directed(sp, st), directed(st, sp)));
}

// --- confusion counting ---------------------------------------------------------

struct Confusion {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion count_confusion(const glioma::RegionMask& pred,
                                 const glioma::RegionMask& truth) {
  Confusion c;
  for (size_t i = 0; i < pred.values.size(); ++i) {
    bool p = pred.values[i] != 0, t = truth.values[i] != 0;
    if (p && t) c.tp++;
    else if (p) c.fp++;
    else if (t) c.fn++;
    else c.tn++;
  }
  return c;
}

// --- scalar dice + cross-entropy reimplementation -------------------------------

// mirrors the stated definition directly: smoothing 1.0, unweighted mean
// foreground dice, weighted mean voxel cross-entropy
inline double dice_ce_scalar(const std::vector<double>& probs,
                             const std::vector<double>& target,
                             const std::vector<double>& weights, int64_t C,
                             int64_t spatial) {
  double dice_sum = 0.0;
  for (int64_t c = 1; c < C; ++c) {
    double S = 0, P = 0, T = 0;
    for (int64_t i = 0; i < spatial; ++i) {
      double p = probs[size_t(c * spatial + i)];
      double t = target[size_t(c * spatial + i)];
      S += p * t;
      P += p;
      T += t;
    }
    dice_sum += (2.0 * S + 1.0) / (P + T + 1.0);
  }
  double dice_loss = 1.0 - dice_sum / double(C - 1);
  double ce = 0.0;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t i = 0; i < spatial; ++i) {
      double t = target[size_t(c * spatial + i)];
      if (t != 0.0) {
        ce -= weights[size_t(c)] * t *
              std::log(std::max(probs[size_t(c * spatial + i)], 1e-12));
      }
    }
  }
  return dice_loss + ce / double(spatial);
}

// --- misc helpers ---------------------------------------------------------------

// Kolmogorov-Smirnov distance between two empirical distributions
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double ks = 0.0;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) ++i;
    else ++j;
    double fa = double(i) / double(a.size());
    double fb = double(j) / double(b.size());
    ks = std::max(ks, std::fabs(fa - fb));
  }
  return ks;
}

inline glioma::RegionMask random_mask(std::array<int32_t, 3> dims,
                                      double density, glioma::Rng& rng) {
  glioma::RegionMask m;
  m.region = glioma::Region::WT;
  m.dims = dims;
  m.values.resize(size_t(int64_t(dims[0]) * dims[1] * dims[2]));
  for (auto& v : m.values) v = rng.uniform01() < density ? 1 : 0;
  return m;
}

}  // namespace oracle
