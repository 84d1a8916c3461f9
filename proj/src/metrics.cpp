#include "glioma/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "glioma/volume_io.hpp"

namespace glioma {

OverlapStats overlap_metrics(const RegionMask& pred, const RegionMask& truth) {
  if (pred.dims != truth.dims) {
    fail(ErrorCode::ShapeMismatch, "mask dims differ");
  }
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  const int64_t n = pred.numel();
  for (int64_t i = 0; i < n; ++i) {
    bool p = pred.values[size_t(i)] != 0;
    bool t = truth.values[size_t(i)] != 0;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
    tn += !p && !t;
  }
  OverlapStats s;
  int64_t dice_den = 2 * tp + fp + fn;
  s.dice = dice_den > 0 ? 2.0 * double(tp) / double(dice_den) : 1.0;
  s.sensitivity =
      tp + fn > 0 ? double(tp) / double(tp + fn) : (fp > 0 ? 0.0 : 1.0);
  s.specificity =
      tn + fp > 0 ? double(tn) / double(tn + fp) : (fn > 0 ? 0.0 : 1.0);
  return s;
}

namespace {

struct SurfacePoint {
  int32_t x, y, z;
};

std::vector<SurfacePoint> extract_surface(const RegionMask& m) {
  std::vector<SurfacePoint> pts;
  const int64_t W = m.dims[0], H = m.dims[1], D = m.dims[2];
  auto inside = [&](int64_t x, int64_t y, int64_t z) {
    return x >= 0 && x < W && y >= 0 && y < H && z >= 0 && z < D &&
           m.values[size_t((z * H + y) * W + x)] != 0;
  };
  for (int64_t z = 0; z < D; ++z) {
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        if (!m.values[size_t((z * H + y) * W + x)]) continue;
        bool boundary = !inside(x - 1, y, z) || !inside(x + 1, y, z) ||
                        !inside(x, y - 1, z) || !inside(x, y + 1, z) ||
                        !inside(x, y, z - 1) || !inside(x, y, z + 1);
        if (boundary) pts.push_back({int32_t(x), int32_t(y), int32_t(z)});
      }
    }
  }
  return pts;
}

// Squared distance between voxel centers. Both this implementation and the
// brute-force oracle in the tests must evaluate this exact expression so the
// two routes agree to the last bit.
inline double sq_dist(const SurfacePoint& a, const SurfacePoint& b, double wx,
                      double wy, double wz) {
  double dx = double(a.x - b.x), dy = double(a.y - b.y),
         dz = double(a.z - b.z);
  return dx * dx * wx + dy * dy * wy + dz * dz * wz;
}

// Directed nearest-surface squared distances via an expanding-shell search
// over the target's occupancy grid; exact because the shell lower bound is
// conservative.
std::vector<double> directed_sq_distances(const std::vector<SurfacePoint>& from,
                                          const std::vector<SurfacePoint>& to,
                                          std::array<int32_t, 3> dims,
                                          std::array<float, 3> spacing) {
  const int64_t W = dims[0], H = dims[1], D = dims[2];
  std::vector<uint8_t> occ(size_t(W * H * D), 0);
  for (const auto& p : to) {
    occ[size_t((int64_t(p.z) * H + p.y) * W + p.x)] = 1;
  }
  const double wx = double(spacing[0]) * double(spacing[0]);
  const double wy = double(spacing[1]) * double(spacing[1]);
  const double wz = double(spacing[2]) * double(spacing[2]);
  const double smin =
      std::min({double(spacing[0]), double(spacing[1]), double(spacing[2])});
  const int64_t rmax = std::max({W, H, D});

  std::vector<double> result(from.size());
  const int64_t nq = int64_t(from.size());
#pragma omp parallel
  {
    SurfacePoint warm{-1, -1, -1};
#pragma omp for schedule(static)
    for (int64_t q = 0; q < nq; ++q) {
      const SurfacePoint a = from[size_t(q)];
      double best = std::numeric_limits<double>::infinity();
      SurfacePoint best_pt = warm;
      if (warm.x >= 0) best = sq_dist(a, warm, wx, wy, wz);
      for (int64_t r = 0; r <= rmax; ++r) {
        double bound = double(r) * smin;
        if (best * (1.0 + 1e-9) < bound * bound) break;
        const int64_t zlo = std::max<int64_t>(0, a.z - r);
        const int64_t zhi = std::min<int64_t>(D - 1, a.z + r);
        for (int64_t z = zlo; z <= zhi; ++z) {
          const bool zface = (z == a.z - r || z == a.z + r);
          const int64_t ylo = std::max<int64_t>(0, a.y - r);
          const int64_t yhi = std::min<int64_t>(H - 1, a.y + r);
          for (int64_t y = ylo; y <= yhi; ++y) {
            const bool yface = (y == a.y - r || y == a.y + r);
            int64_t xlo = std::max<int64_t>(0, a.x - r);
            int64_t xhi = std::min<int64_t>(W - 1, a.x + r);
            int64_t xstep = 1;
            if (!zface && !yface) {
              // interior rows touch the shell only at its two x faces
              if (a.x - r >= 0 && a.x + r < W && r > 0) {
                xstep = 2 * r;
              } else if (a.x - r < 0 && a.x + r >= W) {
                continue;
              } else {
                xlo = xhi = (a.x - r >= 0) ? a.x - r : a.x + r;
              }
            }
            const uint8_t* row = occ.data() + size_t((z * H + y) * W);
            for (int64_t x = xlo; x <= xhi; x += xstep) {
              if (!row[x]) continue;
              SurfacePoint b{int32_t(x), int32_t(y), int32_t(z)};
              double d = sq_dist(a, b, wx, wy, wz);
              if (d < best) {
                best = d;
                best_pt = b;
              }
            }
          }
        }
      }
      result[size_t(q)] = best;
      warm = best_pt;
    }
  }
  return result;
}

// nearest-rank percentile of squared distances
double percentile95(std::vector<double> d) {
  std::sort(d.begin(), d.end());
  size_t k = size_t(std::ceil(0.95 * double(d.size())));
  if (k == 0) k = 1;
  return d[k - 1];
}

}  // namespace

double hausdorff95(const RegionMask& pred, const RegionMask& truth,
                   std::array<float, 3> spacing) {
  if (pred.dims != truth.dims) {
    fail(ErrorCode::ShapeMismatch, "mask dims differ");
  }
  bool pe = pred.count() == 0, te = truth.count() == 0;
  if (pe && te) return 0.0;
  if (pe || te) return kHd95Sentinel;
  auto sp = extract_surface(pred);
  auto st = extract_surface(truth);
  auto d_pt = directed_sq_distances(sp, st, pred.dims, spacing);
  auto d_tp = directed_sq_distances(st, sp, pred.dims, spacing);
  return std::sqrt(std::max(percentile95(std::move(d_pt)),
                            percentile95(std::move(d_tp))));
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  const size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    double avg = (double(i) + double(j)) / 2.0 + 1.0;  // 1-based
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    fail(ErrorCode::LengthMismatch, "need two sequences of equal length >= 2");
  }
  std::vector<double> rx = average_ranks(x), ry = average_ranks(y);
  const size_t n = rx.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    fail(ErrorCode::DegenerateRanks, "all values tied");
  }
  return sxy / std::sqrt(sxx * syy);
}

SeSummary squared_error_summary(std::span<const double> pred,
                                std::span<const double> truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    fail(ErrorCode::LengthMismatch, "need two sequences of equal length >= 1");
  }
  const size_t n = pred.size();
  std::vector<double> se(n);
  for (size_t i = 0; i < n; ++i) {
    double d = pred[i] - truth[i];
    se[i] = d * d;
  }
  SeSummary s;
  double sum = 0;
  for (double v : se) sum += v;
  s.mse = sum / double(n);
  std::vector<double> sorted = se;
  std::sort(sorted.begin(), sorted.end());
  s.median_se = n % 2 ? sorted[n / 2]
                      : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
  double ss = 0;
  for (double v : se) ss += (v - s.mse) * (v - s.mse);
  s.std_se = std::sqrt(ss / double(n));
  return s;
}

OverlapReport evaluate_case(const LabelVolume& pred, const LabelVolume& truth,
                            std::array<float, 3> spacing) {
  if (pred.dims != truth.dims) {
    fail(ErrorCode::ShapeMismatch, "label volume dims differ");
  }
  OverlapReport report;
  const Region order[3] = {Region::ET, Region::WT, Region::TC};
  for (int i = 0; i < 3; ++i) {
    RegionMask mp = derive_region_mask(pred, order[i]);
    RegionMask mt = derive_region_mask(truth, order[i]);
    RegionReport& r = report.regions[size_t(i)];
    r.region = order[i];
    OverlapStats s = overlap_metrics(mp, mt);
    r.dice = s.dice;
    r.sensitivity = s.sensitivity;
    r.specificity = s.specificity;
    bool pe = mp.count() == 0, te = mt.count() == 0;
    r.hd95 = hausdorff95(mp, mt, spacing);
    r.hd95_sentinel = pe != te;
  }
  return report;
}

}  // namespace glioma
