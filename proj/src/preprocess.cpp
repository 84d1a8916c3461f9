#include "glioma/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace glioma {

int64_t BrainMask::count() const {
  return std::count(values.begin(), values.end(), uint8_t(1));
}

BrainMask compute_brain_mask(const MultimodalCase& c) {
  BrainMask m;
  m.dims = c.dims();
  int64_t n = c.flair.numel();
  m.values.assign(n, 0);
  int64_t set = 0;
  for (int64_t i = 0; i < n; ++i) {
    bool in = false;
    for (int mod = 0; mod < kModalityCount && !in; ++mod) {
      in = std::fabs(c.modality(mod).values[i]) > 0.0f;
    }
    if (in) {
      m.values[i] = 1;
      ++set;
    }
  }
  if (set == 0) fail(ErrorCode::EmptyMask, "no voxel has nonzero intensity");
  return m;
}

namespace {

void require_mask_shape(const VoxelGrid& g, const BrainMask& m) {
  if (g.header.dims != m.dims) {
    fail(ErrorCode::ShapeMismatch, "mask dims disagree with grid");
  }
}

}  // namespace

VoxelGrid zscore_normalize(const VoxelGrid& grid, const BrainMask& mask) {
  require_mask_shape(grid, mask);
  int64_t n = grid.numel();
  double sum = 0.0;
  int64_t cnt = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (mask.values[i]) {
      sum += grid.values[i];
      ++cnt;
    }
  }
  if (cnt == 0) fail(ErrorCode::EmptyMask, "empty mask");
  double mean = sum / double(cnt);
  double ss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    if (mask.values[i]) {
      double d = grid.values[i] - mean;
      ss += d * d;
    }
  }
  double var = ss / double(cnt);
  if (var <= 0.0) fail(ErrorCode::ZeroVariance, "masked intensity is constant");
  double inv_std = 1.0 / std::sqrt(var);
  VoxelGrid out = grid;
  for (int64_t i = 0; i < n; ++i) {
    out.values[i] = mask.values[i]
                        ? float((grid.values[i] - mean) * inv_std)
                        : 0.0f;
  }
  return out;
}

namespace {

struct HistogramStats {
  double min = 0, max = 0, width = 0;
  std::vector<double> cdf;  // cumulative mass at each bin's upper edge
  std::vector<double> bin_min, bin_max;  // masked value range per bin
};

HistogramStats masked_histogram(const VoxelGrid& g, const BrainMask& m,
                                int bins) {
  HistogramStats h;
  int64_t n = g.numel();
  bool first = true;
  for (int64_t i = 0; i < n; ++i) {
    if (!m.values[i]) continue;
    double v = g.values[i];
    if (first) {
      h.min = h.max = v;
      first = false;
    } else {
      h.min = std::min(h.min, v);
      h.max = std::max(h.max, v);
    }
  }
  if (first) fail(ErrorCode::EmptyMask, "empty mask");
  h.width = (h.max - h.min) / double(bins);
  std::vector<int64_t> counts(bins, 0);
  h.bin_min.assign(size_t(bins), 0.0);
  h.bin_max.assign(size_t(bins), 0.0);
  int64_t total = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (!m.values[i]) continue;
    double v = g.values[i];
    int b = 0;
    if (h.width > 0) {
      b = int((v - h.min) / h.width);
      b = std::clamp(b, 0, bins - 1);
    }
    if (counts[b] == 0) {
      h.bin_min[size_t(b)] = h.bin_max[size_t(b)] = v;
    } else {
      h.bin_min[size_t(b)] = std::min(h.bin_min[size_t(b)], v);
      h.bin_max[size_t(b)] = std::max(h.bin_max[size_t(b)], v);
    }
    counts[b]++;
    total++;
  }
  h.cdf.resize(bins);
  int64_t run = 0;
  for (int b = 0; b < bins; ++b) {
    run += counts[b];
    h.cdf[b] = double(run) / double(total);
  }
  return h;
}

// piecewise-linear CDF: 0 at the range minimum, cdf[b] at bin b's upper edge
double interp_cdf(const HistogramStats& h, double v) {
  if (h.width <= 0) return 1.0;
  double t = (v - h.min) / h.width;
  if (t <= 0) return 0.0;
  int bins = int(h.cdf.size());
  if (t >= bins) return 1.0;
  int b = std::min(int(t), bins - 1);
  double lo = b > 0 ? h.cdf[b - 1] : 0.0;
  return lo + (h.cdf[b] - lo) * (t - b);
}

// Smallest intensity whose CDF reaches u. A bin holding a single distinct
// value inverts to that value exactly; otherwise the bin's span is
// interpolated linearly in quantile.
double invert_cdf(const HistogramStats& h, double u) {
  if (h.width <= 0) return h.min;
  int bins = int(h.cdf.size());
  if (u <= 0) return h.min;
  int j = int(std::lower_bound(h.cdf.begin(), h.cdf.end(), u) - h.cdf.begin());
  if (j >= bins) return h.max;
  double lo = j > 0 ? h.cdf[j - 1] : 0.0;
  if (h.cdf[j] <= lo) return h.min + h.width * j;  // empty bin: left edge
  if (h.bin_min[size_t(j)] == h.bin_max[size_t(j)]) {
    return h.bin_min[size_t(j)];
  }
  double edge = h.min + h.width * j;
  double frac = (u - lo) / (h.cdf[j] - lo);
  return edge + h.width * frac;
}

HistogramStats stats_of(const HistogramMapping& m, bool reference) {
  HistogramStats h;
  if (reference) {
    h.min = m.reference_min;
    h.width = m.reference_width;
    h.max = m.reference_min + m.reference_width * m.bins;
    h.cdf = m.reference_cdf;
    h.bin_min = m.reference_bin_min;
    h.bin_max = m.reference_bin_max;
  } else {
    h.min = m.source_min;
    h.width = m.source_width;
    h.max = m.source_min + m.source_width * m.bins;
    h.cdf = m.source_cdf;
    h.bin_min.assign(size_t(m.bins), h.min);  // unused for the source side
    h.bin_max.assign(size_t(m.bins), h.max);
  }
  return h;
}

}  // namespace

double HistogramMapping::map(double v) const {
  HistogramStats s = stats_of(*this, false);
  HistogramStats r = stats_of(*this, true);
  return invert_cdf(r, interp_cdf(s, v));
}

HistogramMapping build_histogram_mapping(const VoxelGrid& source,
                                         const VoxelGrid& reference,
                                         const BrainMask& mask_s,
                                         const BrainMask& mask_r, int bins) {
  require_mask_shape(source, mask_s);
  require_mask_shape(reference, mask_r);
  if (bins < 2) fail(ErrorCode::BadConfig, "histogram bins must be >= 2");
  HistogramStats hs = masked_histogram(source, mask_s, bins);
  if (hs.width <= 0) {
    fail(ErrorCode::DegenerateHistogram, "all source intensity in one bin");
  }
  HistogramStats hr = masked_histogram(reference, mask_r, bins);

  HistogramMapping m;
  m.bins = bins;
  m.source_min = hs.min;
  m.source_width = hs.width;
  m.reference_min = hr.min;
  m.reference_width = hr.width;
  m.source_cdf = hs.cdf;
  m.reference_cdf = hr.cdf;
  m.reference_bin_min = hr.bin_min;
  m.reference_bin_max = hr.bin_max;
  m.lookup.resize(bins);
  for (int b = 0; b < bins; ++b) {
    m.lookup[b] = invert_cdf(hr, hs.cdf[b]);
  }
  return m;
}

VoxelGrid histogram_match(const VoxelGrid& source, const VoxelGrid& reference,
                          const BrainMask& mask_s, const BrainMask& mask_r,
                          int bins) {
  HistogramMapping m =
      build_histogram_mapping(source, reference, mask_s, mask_r, bins);
  HistogramStats hr = stats_of(m, true);

  // exact empirical source quantiles: invariant under any strictly monotone
  // relabeling of the source intensities
  std::vector<float> sorted;
  int64_t n = source.numel();
  for (int64_t i = 0; i < n; ++i) {
    if (mask_s.values[i]) sorted.push_back(source.values[i]);
  }
  std::sort(sorted.begin(), sorted.end());
  const double total = double(sorted.size());

  VoxelGrid out = source;
  for (int64_t i = 0; i < n; ++i) {
    if (!mask_s.values[i]) continue;
    double u = double(std::upper_bound(sorted.begin(), sorted.end(),
                                       source.values[i]) -
                      sorted.begin()) /
               total;
    out.values[i] = float(invert_cdf(hr, u));
  }
  return out;
}

namespace {

// monomial exponent triples with total degree <= d
std::vector<std::array<int, 3>> polynomial_terms(int degree) {
  std::vector<std::array<int, 3>> terms;
  for (int a = 0; a <= degree; ++a) {
    for (int b = 0; b + a <= degree; ++b) {
      for (int c = 0; c + b + a <= degree; ++c) {
        terms.push_back({a, b, c});
      }
    }
  }
  return terms;
}

// Cholesky solve of the (symmetric) normal equations; throws SingularFit on
// a non-positive pivot.
std::vector<double> solve_spd(std::vector<double> A, std::vector<double> b) {
  size_t n = b.size();
  double scale = 0.0;
  for (size_t i = 0; i < n; ++i) scale = std::max(scale, std::fabs(A[i * n + i]));
  double tol = scale * 1e-12;
  for (size_t k = 0; k < n; ++k) {
    double d = A[k * n + k];
    for (size_t j = 0; j < k; ++j) d -= A[k * n + j] * A[k * n + j];
    if (!(d > tol)) fail(ErrorCode::SingularFit, "rank-deficient design matrix");
    d = std::sqrt(d);
    A[k * n + k] = d;
    for (size_t i = k + 1; i < n; ++i) {
      double s = A[i * n + k];
      for (size_t j = 0; j < k; ++j) s -= A[i * n + j] * A[k * n + j];
      A[i * n + k] = s / d;
    }
  }
  // forward then backward substitution
  for (size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (size_t j = 0; j < i; ++j) s -= A[i * n + j] * b[j];
    b[i] = s / A[i * n + i];
  }
  for (size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (size_t j = ii + 1; j < n; ++j) s -= A[j * n + ii] * b[j];
    b[ii] = s / A[ii * n + ii];
  }
  return b;
}

}  // namespace

VoxelGrid bias_correct(const VoxelGrid& grid, const BrainMask& mask,
                       int degree) {
  require_mask_shape(grid, mask);
  if (degree < 1 || degree > 3) {
    fail(ErrorCode::BadConfig, "bias degree must be in {1,2,3}");
  }
  int64_t W = grid.width(), H = grid.height(), D = grid.depth();

  double vmin = 0;
  bool first = true;
  for (int64_t i = 0; i < grid.numel(); ++i) {
    if (!mask.values[i]) continue;
    double v = grid.values[i];
    vmin = first ? v : std::min(vmin, v);
    first = false;
  }
  if (first) fail(ErrorCode::EmptyMask, "empty mask");
  double shift = vmin > 0 ? 0.0 : (1e-6 - vmin);

  auto terms = polynomial_terms(degree);
  size_t nt = terms.size();
  std::vector<double> A(nt * nt, 0.0), rhs(nt, 0.0), phi(nt);
  auto coord = [](int64_t i, int64_t n) {
    return n > 1 ? 2.0 * double(i) / double(n - 1) - 1.0 : 0.0;
  };
  auto powers = [&](double c, double* p) {
    p[0] = 1.0;
    for (int k = 1; k <= degree; ++k) p[k] = p[k - 1] * c;
  };

  double px[4], py[4], pz[4];
  int64_t idx = 0;
  for (int64_t z = 0; z < D; ++z) {
    powers(coord(z, D), pz);
    for (int64_t y = 0; y < H; ++y) {
      powers(coord(y, H), py);
      for (int64_t x = 0; x < W; ++x, ++idx) {
        if (!mask.values[idx]) continue;
        powers(coord(x, W), px);
        for (size_t t = 0; t < nt; ++t) {
          phi[t] = px[terms[t][0]] * py[terms[t][1]] * pz[terms[t][2]];
        }
        double lv = std::log(double(grid.values[idx]) + shift);
        for (size_t r = 0; r < nt; ++r) {
          rhs[r] += phi[r] * lv;
          for (size_t c = 0; c <= r; ++c) A[r * nt + c] += phi[r] * phi[c];
        }
      }
    }
  }
  for (size_t r = 0; r < nt; ++r) {
    for (size_t c = r + 1; c < nt; ++c) A[r * nt + c] = A[c * nt + r];
  }
  std::vector<double> coef = solve_spd(A, rhs);

  // re-center so the masked geometric mean is preserved
  double fit_sum = 0.0;
  int64_t cnt = 0;
  std::vector<double> fitted(grid.numel(), 0.0);
  idx = 0;
  for (int64_t z = 0; z < D; ++z) {
    powers(coord(z, D), pz);
    for (int64_t y = 0; y < H; ++y) {
      powers(coord(y, H), py);
      for (int64_t x = 0; x < W; ++x, ++idx) {
        if (!mask.values[idx]) continue;
        powers(coord(x, W), px);
        double p = 0.0;
        for (size_t t = 0; t < nt; ++t) {
          p += coef[t] * px[terms[t][0]] * py[terms[t][1]] * pz[terms[t][2]];
        }
        fitted[idx] = p;
        fit_sum += p;
        ++cnt;
      }
    }
  }
  double mean_p = fit_sum / double(cnt);

  VoxelGrid out = grid;
  for (int64_t i = 0; i < grid.numel(); ++i) {
    if (!mask.values[i]) continue;
    double field = std::exp(fitted[i] - mean_p);
    out.values[i] = float((double(grid.values[i]) + shift) / field - shift);
  }
  return out;
}

VoxelGrid resample(const VoxelGrid& grid, ResampleFactor factor) {
  int64_t W = grid.width(), H = grid.height(), D = grid.depth();
  if (factor == ResampleFactor::Down2) {
    if (W % 2 || H % 2 || D % 2) {
      fail(ErrorCode::OddDimension, "down2 requires even dims");
    }
    VoxelGrid out = make_grid({int32_t(W / 2), int32_t(H / 2), int32_t(D / 2)},
                              0.0f,
                              {grid.header.spacing[0] * 2,
                               grid.header.spacing[1] * 2,
                               grid.header.spacing[2] * 2});
    out.header.datatype = grid.header.datatype;
    for (int64_t z = 0; z < D / 2; ++z) {
      for (int64_t y = 0; y < H / 2; ++y) {
        for (int64_t x = 0; x < W / 2; ++x) {
          double s = 0.0;
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx)
                s += grid.at(2 * x + dx, 2 * y + dy, 2 * z + dz);
          out.at(x, y, z) = float(s / 8.0);
        }
      }
    }
    return out;
  }

  // Up2: trilinear, cell-centered (output center i maps to (i+0.5)/2-0.5)
  VoxelGrid out = make_grid({int32_t(W * 2), int32_t(H * 2), int32_t(D * 2)},
                            0.0f,
                            {grid.header.spacing[0] / 2,
                             grid.header.spacing[1] / 2,
                             grid.header.spacing[2] / 2});
  out.header.datatype = grid.header.datatype;
  auto sample_axis = [](int64_t i, int64_t n, int64_t& lo, int64_t& hi,
                        double& w_hi) {
    double src = (double(i) + 0.5) / 2.0 - 0.5;
    if (src <= 0) {
      lo = hi = 0;
      w_hi = 0;
    } else if (src >= double(n - 1)) {
      lo = hi = n - 1;
      w_hi = 0;
    } else {
      lo = int64_t(src);
      hi = lo + 1;
      w_hi = src - double(lo);
    }
  };
  for (int64_t z = 0; z < 2 * D; ++z) {
    int64_t z0, z1;
    double wz;
    sample_axis(z, D, z0, z1, wz);
    for (int64_t y = 0; y < 2 * H; ++y) {
      int64_t y0, y1;
      double wy;
      sample_axis(y, H, y0, y1, wy);
      for (int64_t x = 0; x < 2 * W; ++x) {
        int64_t x0, x1;
        double wx;
        sample_axis(x, W, x0, x1, wx);
        double v =
            (1 - wz) * ((1 - wy) * ((1 - wx) * grid.at(x0, y0, z0) +
                                    wx * grid.at(x1, y0, z0)) +
                        wy * ((1 - wx) * grid.at(x0, y1, z0) +
                              wx * grid.at(x1, y1, z0))) +
            wz * ((1 - wy) * ((1 - wx) * grid.at(x0, y0, z1) +
                              wx * grid.at(x1, y0, z1)) +
                  wy * ((1 - wx) * grid.at(x0, y1, z1) +
                        wx * grid.at(x1, y1, z1)));
        out.at(x, y, z) = float(v);
      }
    }
  }
  return out;
}

std::pair<VoxelGrid, CropPadOffset> crop_pad_to_shape(
    const VoxelGrid& grid, std::array<int32_t, 3> target_dims) {
  CropPadOffset off;
  off.original_dims = grid.header.dims;
  for (int a = 0; a < 3; ++a) {
    int32_t in = grid.header.dims[a], out = target_dims[a];
    if (out >= in) {
      off.offset[a] = -((out - in) / 2);  // pad: low side gets floor
    } else {
      off.offset[a] = (in - out) / 2;  // center crop
    }
  }
  VoxelGrid out = make_grid(target_dims, 0.0f, grid.header.spacing);
  out.header.datatype = grid.header.datatype;
  for (int64_t z = 0; z < target_dims[2]; ++z) {
    int64_t sz = z + off.offset[2];
    if (sz < 0 || sz >= grid.depth()) continue;
    for (int64_t y = 0; y < target_dims[1]; ++y) {
      int64_t sy = y + off.offset[1];
      if (sy < 0 || sy >= grid.height()) continue;
      for (int64_t x = 0; x < target_dims[0]; ++x) {
        int64_t sx = x + off.offset[0];
        if (sx < 0 || sx >= grid.width()) continue;
        out.at(x, y, z) = grid.at(sx, sy, sz);
      }
    }
  }
  return {out, off};
}

LabelVolume uncrop_labels(const LabelVolume& labels, const CropPadOffset& off) {
  LabelVolume out;
  out.dims = off.original_dims;
  out.spacing = labels.spacing;
  out.values.assign(out.numel(), 0);
  int64_t W = labels.dims[0], H = labels.dims[1], Dd = labels.dims[2];
  int64_t OW = out.dims[0], OH = out.dims[1];
  for (int64_t z = 0; z < Dd; ++z) {
    int64_t oz = z + off.offset[2];
    if (oz < 0 || oz >= out.dims[2]) continue;
    for (int64_t y = 0; y < H; ++y) {
      int64_t oy = y + off.offset[1];
      if (oy < 0 || oy >= OH) continue;
      for (int64_t x = 0; x < W; ++x) {
        int64_t ox = x + off.offset[0];
        if (ox < 0 || ox >= OW) continue;
        out.values[(oz * OH + oy) * OW + ox] = labels.values[(z * H + y) * W + x];
      }
    }
  }
  return out;
}

MultimodalCase preprocess_case(const MultimodalCase& c,
                               const MultimodalCase& reference,
                               const PreprocessConfig& cfg) {
  BrainMask mask = compute_brain_mask(c);
  MultimodalCase out = c;
  BrainMask ref_mask;
  bool self_reference = reference.case_id == c.case_id;
  if (cfg.enable_histogram_match && !self_reference) {
    ref_mask = compute_brain_mask(reference);
  }
  for (int m = 0; m < kModalityCount; ++m) {
    VoxelGrid g = c.modality(m);
    if (cfg.enable_bias_correction) {
      g = bias_correct(g, mask, cfg.bias_degree);
    }
    if (cfg.enable_histogram_match && !self_reference) {
      g = histogram_match(g, reference.modality(m), mask, ref_mask,
                          cfg.histogram_bins);
    }
    out.modality(m) = zscore_normalize(g, mask);
  }
  return out;
}

}  // namespace glioma
