#include "glioma/phantom.hpp"

#include <cmath>

#include "glioma/rng.hpp"
#include "glioma/survival.hpp"
#include "glioma/volume_io.hpp"

namespace glioma {

namespace {

struct Ellipsoid {
  std::array<double, 3> center;     // voxel coordinates
  std::array<double, 3> semi_axes;  // voxels

  double norm_dist(double x, double y, double z) const {
    double dx = (x - center[0]) / semi_axes[0];
    double dy = (y - center[1]) / semi_axes[1];
    double dz = (z - center[2]) / semi_axes[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
  }
};

std::string phantom_case_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "PHANTOM_%03d", index);
  return buf;
}

}  // namespace

PhantomCase generate_case(const PhantomSpec& spec, int index) {
  if (spec.et_ratio >= spec.tc_ratio || spec.tc_ratio >= 1.0) {
    fail(ErrorCode::SpecInfeasible, "radii ratios must decrease inward");
  }
  if (spec.tumor_count < 1) {
    fail(ErrorCode::SpecInfeasible, "tumor_count must be >= 1");
  }
  Rng rng(Rng::derive(spec.seed, uint64_t(index)));
  const auto dims = spec.dims;
  const int64_t W = dims[0], H = dims[1], D = dims[2];

  Ellipsoid brain{{double(W) / 2.0, double(H) / 2.0, double(D) / 2.0},
                  {spec.brain_semi_axes[0] * W, spec.brain_semi_axes[1] * H,
                   spec.brain_semi_axes[2] * D}};
  const double min_brain_axis =
      std::min({brain.semi_axes[0], brain.semi_axes[1], brain.semi_axes[2]});
  if (spec.tumor_radius_max * 1.2 >= 0.95 * min_brain_axis) {
    fail(ErrorCode::SpecInfeasible, "tumor cannot fit inside the brain");
  }

  std::vector<Ellipsoid> tumors;
  for (int t = 0; t < spec.tumor_count; ++t) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      double r = rng.uniform(spec.tumor_radius_min, spec.tumor_radius_max);
      Ellipsoid e;
      for (int a = 0; a < 3; ++a) e.semi_axes[size_t(a)] = r * rng.uniform(0.85, 1.15);
      double max_axis =
          std::max({e.semi_axes[0], e.semi_axes[1], e.semi_axes[2]});
      // place the whole tumor inside the brain with some margin
      double limit = 0.95 - max_axis / min_brain_axis;
      if (limit <= 0) continue;
      for (int a = 0; a < 3; ++a) {
        e.center[size_t(a)] =
            brain.center[size_t(a)] +
            rng.uniform(-limit, limit) * brain.semi_axes[size_t(a)];
      }
      if (brain.norm_dist(e.center[0], e.center[1], e.center[2]) +
              max_axis / min_brain_axis >
          0.95) {
        continue;
      }
      bool overlaps = false;
      for (const auto& other : tumors) {
        double dx = e.center[0] - other.center[0];
        double dy = e.center[1] - other.center[1];
        double dz = e.center[2] - other.center[2];
        double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
        double mine = std::max({e.semi_axes[0], e.semi_axes[1], e.semi_axes[2]});
        double theirs = std::max(
            {other.semi_axes[0], other.semi_axes[1], other.semi_axes[2]});
        if (dist < mine + theirs + 2.0) overlaps = true;
      }
      if (overlaps) continue;
      tumors.push_back(e);
      placed = true;
    }
    if (!placed) {
      fail(ErrorCode::SpecInfeasible, "could not place tumor inside brain");
    }
  }

  PhantomCase out;
  out.data.case_id = phantom_case_id(index);

  LabelVolume labels;
  labels.dims = dims;
  labels.values.assign(size_t(W * H * D), 0);
  std::vector<uint8_t> in_brain(size_t(W * H * D), 0);
  int64_t idx = 0;
  for (int64_t z = 0; z < D; ++z) {
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x, ++idx) {
        double fx = double(x), fy = double(y), fz = double(z);
        if (brain.norm_dist(fx, fy, fz) > 1.0) continue;
        in_brain[size_t(idx)] = 1;
        for (const auto& tumor : tumors) {
          double d = tumor.norm_dist(fx, fy, fz);
          if (d <= spec.et_ratio) {
            labels.values[size_t(idx)] = 4;
          } else if (d <= spec.tc_ratio) {
            labels.values[size_t(idx)] = 1;
          } else if (d <= 1.0) {
            labels.values[size_t(idx)] = 2;
          } else {
            continue;
          }
          break;
        }
      }
    }
  }

  // optional multiplicative bias field, exp of a random polynomial with no
  // constant term over [-1,1]^3 coordinates
  out.bias_field = make_grid(dims, 1.0f);
  if (spec.bias_field) {
    std::vector<std::array<int, 3>> terms;
    for (int a = 0; a <= spec.bias_degree; ++a) {
      for (int b = 0; b + a <= spec.bias_degree; ++b) {
        for (int c = 0; c + b + a <= spec.bias_degree; ++c) {
          if (a + b + c == 0) continue;
          terms.push_back({a, b, c});
        }
      }
    }
    std::vector<double> coef(terms.size());
    for (double& c : coef) {
      c = rng.uniform(-spec.bias_amplitude, spec.bias_amplitude);
    }
    idx = 0;
    for (int64_t z = 0; z < D; ++z) {
      double cz = D > 1 ? 2.0 * double(z) / double(D - 1) - 1.0 : 0.0;
      for (int64_t y = 0; y < H; ++y) {
        double cy = H > 1 ? 2.0 * double(y) / double(H - 1) - 1.0 : 0.0;
        for (int64_t x = 0; x < W; ++x, ++idx) {
          double cx = W > 1 ? 2.0 * double(x) / double(W - 1) - 1.0 : 0.0;
          double p = 0.0;
          for (size_t t = 0; t < terms.size(); ++t) {
            p += coef[t] * std::pow(cx, terms[t][0]) *
                 std::pow(cy, terms[t][1]) * std::pow(cz, terms[t][2]);
          }
          out.bias_field.values[size_t(idx)] = float(std::exp(p));
        }
      }
    }
  }

  const double scale = spec.intensity_scale;
  for (int m = 0; m < kModalityCount; ++m) {
    VoxelGrid g = make_grid(dims, 0.0f);
    for (int64_t i = 0; i < W * H * D; ++i) {
      if (!in_brain[size_t(i)]) continue;
      uint8_t lab = labels.values[size_t(i)];
      int tissue = lab == 0 ? 0 : lab == 1 ? 1 : lab == 2 ? 2 : 3;
      double v = spec.tissue_intensity[size_t(tissue)][size_t(m)] * scale;
      if (spec.noise_std > 0) v += rng.normal() * spec.noise_std * scale;
      v *= double(out.bias_field.values[size_t(i)]);
      if (v < 1e-3 * scale) v = 1e-3 * scale;  // keep log-able
      g.values[size_t(i)] = float(v);
    }
    out.data.modality(m) = std::move(g);
  }
  out.data.labels = std::move(labels);

  int64_t brain_count = 0, wt_count = 0;
  for (int64_t i = 0; i < W * H * D; ++i) {
    brain_count += in_brain[size_t(i)];
    wt_count += out.data.labels->values[size_t(i)] != 0;
  }
  double nv_wt = double(wt_count) / double(brain_count);
  double days = spec.survival_intercept + spec.survival_slope * nv_wt;
  if (spec.survival_noise_std > 0) {
    days += rng.normal() * spec.survival_noise_std;
  }
  out.true_days = std::max(days, 1.0);
  return out;
}

void generate_dataset(const PhantomSpec& spec, int n,
                      const std::filesystem::path& out_dir) {
  if (n < 1) fail(ErrorCode::SpecInfeasible, "need n >= 1 cases");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + out_dir.string());

  std::vector<std::pair<std::string, double>> truth;
  for (int i = 0; i < n; ++i) {
    PhantomCase c = generate_case(spec, i);
    const std::string& id = c.data.case_id;
    std::filesystem::path case_dir = out_dir / id;
    std::filesystem::create_directories(case_dir, ec);
    if (ec) fail(ErrorCode::IoError, "cannot create " + case_dir.string());
    for (int m = 0; m < kModalityCount; ++m) {
      write_nifti_file(case_dir / (id + "_" + kModalityNames[m] + ".nii.gz"),
                       c.data.modality(m));
    }
    write_nifti_file(case_dir / (id + "_seg.nii.gz"),
                     labels_to_grid(*c.data.labels));
    truth.emplace_back(id, c.true_days);
  }
  write_truth_csv(out_dir / "survival_truth.csv", truth);
}

}  // namespace glioma
