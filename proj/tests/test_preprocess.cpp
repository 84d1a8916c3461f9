#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "glioma/phantom.hpp"
#include "glioma/preprocess.hpp"
#include "glioma/rng.hpp"
#include "glioma/volume_io.hpp"
#include "oracles.hpp"

using namespace glioma;

namespace {

BrainMask full_mask(std::array<int32_t, 3> dims) {
  BrainMask m;
  m.dims = dims;
  m.values.assign(size_t(int64_t(dims[0]) * dims[1] * dims[2]), 1);
  return m;
}

std::vector<double> masked_values(const VoxelGrid& g, const BrainMask& m) {
  std::vector<double> out;
  for (int64_t i = 0; i < g.numel(); ++i) {
    if (m.values[size_t(i)]) out.push_back(g.values[size_t(i)]);
  }
  return out;
}

double masked_cv(const VoxelGrid& g, const BrainMask& m) {
  auto v = masked_values(g, m);
  double mean = 0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / double(v.size())) / std::fabs(mean);
}

MultimodalCase zero_case(std::array<int32_t, 3> dims) {
  MultimodalCase c;
  c.case_id = "Z";
  c.flair = make_grid(dims);
  c.t1 = make_grid(dims);
  c.t1ce = make_grid(dims);
  c.t2 = make_grid(dims);
  return c;
}

}  // namespace

TEST_CASE("brain mask covers voxels with any nonzero modality") {
  SUBCASE("all-zero case is an error") {
    CHECK_THROWS_AS(compute_brain_mask(zero_case({3, 3, 3})), Error);
  }
  SUBCASE("one nonzero voxel in t1 only") {
    MultimodalCase c = zero_case({3, 3, 3});
    c.t1.at(1, 2, 0) = -5.0f;
    BrainMask m = compute_brain_mask(c);
    CHECK(m.count() == 1);
    CHECK(m.values[size_t((0 * 3 + 2) * 3 + 1)] == 1);
  }
  SUBCASE("phantom mask equals the generator brain ellipsoid") {
    PhantomSpec spec;
    spec.dims = {24, 24, 24};
    spec.tumor_radius_min = 3;
    spec.tumor_radius_max = 4;
    spec.noise_std = 0.0;
    PhantomCase pc = generate_case(spec, 0);
    BrainMask m = compute_brain_mask(pc.data);
    // generator ground truth: brain voxels carry the positive tissue
    // constant, background is exactly zero
    int64_t inside = 0;
    for (int64_t i = 0; i < pc.data.flair.numel(); ++i) {
      bool nonzero = pc.data.flair.values[size_t(i)] != 0.0f;
      CHECK(nonzero == (m.values[size_t(i)] == 1));
      inside += nonzero;
    }
    CHECK(inside > 0);
    CHECK(inside < pc.data.flair.numel());
  }
}

TEST_CASE("zscore matches the worked example") {
  VoxelGrid g = make_grid({3, 1, 1});
  g.values = {1, 2, 3};
  VoxelGrid out = zscore_normalize(g, full_mask({3, 1, 1}));
  CHECK(out.values[0] == doctest::Approx(-1.224745).epsilon(1e-6));
  CHECK(out.values[1] == doctest::Approx(0.0));
  CHECK(out.values[2] == doctest::Approx(1.224745).epsilon(1e-6));
}

TEST_CASE("zscore post-statistics hold on random masked grids") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::array<int32_t, 3> dims = {8, 7, 6};
    VoxelGrid g = make_grid(dims);
    BrainMask m;
    m.dims = dims;
    m.values.resize(size_t(g.numel()));
    int64_t cnt = 0;
    for (int64_t i = 0; i < g.numel(); ++i) {
      m.values[size_t(i)] = rng.uniform01() < 0.6 ? 1 : 0;
      cnt += m.values[size_t(i)];
      g.values[size_t(i)] = float(rng.normal(50.0, 20.0));
    }
    if (cnt < 2) continue;
    VoxelGrid out = zscore_normalize(g, m);
    auto v = masked_values(out, m);
    double mean = 0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    double stdev = std::sqrt(ss / double(v.size()));
    CHECK(std::fabs(mean) < 1e-6);
    CHECK(std::fabs(stdev - 1.0) < 1e-6);
    for (int64_t i = 0; i < g.numel(); ++i) {
      if (!m.values[size_t(i)]) CHECK(out.values[size_t(i)] == 0.0f);
    }
  }
}

TEST_CASE("zscore errors") {
  VoxelGrid g = make_grid({3, 1, 1}, 7.5f);
  CHECK_THROWS_AS(zscore_normalize(g, full_mask({3, 1, 1})), Error);
  try {
    zscore_normalize(g, full_mask({3, 1, 1}));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroVariance);
  }
}

TEST_CASE("zscore is idempotent on normalized input") {
  Rng rng(13);
  VoxelGrid g = make_grid({6, 6, 6});
  for (auto& v : g.values) v = float(rng.normal());
  BrainMask m = full_mask({6, 6, 6});
  VoxelGrid once = zscore_normalize(g, m);
  VoxelGrid twice = zscore_normalize(once, m);
  for (int64_t i = 0; i < g.numel(); ++i) {
    CHECK(std::fabs(double(twice.values[size_t(i)]) -
                    double(once.values[size_t(i)])) < 1e-6);
  }
}

TEST_CASE("histogram matching: self-match stays within one bin width") {
  Rng rng(17);
  VoxelGrid g = make_grid({8, 8, 8});
  for (auto& v : g.values) v = float(rng.uniform(10.0, 90.0));
  BrainMask m = full_mask({8, 8, 8});
  int bins = 64;
  VoxelGrid out = histogram_match(g, g, m, m, bins);
  double width = (90.0 - 10.0) / bins;  // conservative: true range is tighter
  for (int64_t i = 0; i < g.numel(); ++i) {
    CHECK(std::fabs(double(out.values[size_t(i)]) -
                    double(g.values[size_t(i)])) <= width);
  }
}

TEST_CASE("histogram matching: two equal-proportion levels map exactly") {
  // source has values {a, b}, reference {c, d}, equal counts; the 2-bin CDF
  // inversion sends a -> c and b -> d
  const double a = 3.0, b = 9.0, c = 100.0, d = 260.0;
  std::array<int32_t, 3> dims = {4, 4, 1};
  VoxelGrid src = make_grid(dims), ref = make_grid(dims);
  for (int64_t i = 0; i < src.numel(); ++i) {
    src.values[size_t(i)] = float(i % 2 ? a : b);
    ref.values[size_t(i)] = float(i % 2 ? c : d);
  }
  BrainMask m = full_mask(dims);
  VoxelGrid out = histogram_match(src, ref, m, m, 2);
  for (int64_t i = 0; i < src.numel(); ++i) {
    double expected = i % 2 ? c : d;
    CHECK(out.values[size_t(i)] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("histogram matching reduces the KS distance on phantom pairs") {
  PhantomSpec spec;
  spec.dims = {24, 24, 24};
  spec.tumor_radius_min = 3;
  spec.tumor_radius_max = 4.5;
  spec.noise_std = 0.05;
  PhantomCase p0 = generate_case(spec, 0);
  PhantomSpec spec_shifted = spec;
  // a different intensity table makes the histograms genuinely disagree
  for (auto& row : spec_shifted.tissue_intensity) {
    for (auto& v : row) v = v * 1.3 + 0.05;
  }
  PhantomCase p1 = generate_case(spec_shifted, 1);
  BrainMask m0 = compute_brain_mask(p0.data);
  BrainMask m1 = compute_brain_mask(p1.data);
  VoxelGrid matched = histogram_match(p1.data.flair, p0.data.flair, m1, m0, 256);
  double ks_before =
      oracle::ks_distance(masked_values(p1.data.flair, m1),
                          masked_values(p0.data.flair, m0));
  double ks_after = oracle::ks_distance(masked_values(matched, m1),
                                        masked_values(p0.data.flair, m0));
  CHECK(ks_after < ks_before);
}

TEST_CASE("histogram mapping lookup is monotone and CDFs end at 1") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    std::array<int32_t, 3> dims = {8, 8, 4};
    VoxelGrid s = make_grid(dims), r = make_grid(dims);
    for (auto& v : s.values) v = float(rng.normal(40, 15));
    for (auto& v : r.values) v = float(rng.uniform(0, 200));
    BrainMask m = full_mask(dims);
    HistogramMapping map = build_histogram_mapping(s, r, m, m, 128);
    CHECK(std::fabs(map.source_cdf.back() - 1.0) < 1e-9);
    CHECK(std::fabs(map.reference_cdf.back() - 1.0) < 1e-9);
    for (size_t i = 1; i < map.lookup.size(); ++i) {
      CHECK(map.lookup[i] >= map.lookup[i - 1]);
    }
  }
}

TEST_CASE("histogram matching is invariant to monotone relabeling") {
  Rng rng(29);
  std::array<int32_t, 3> dims = {10, 10, 4};
  VoxelGrid s = make_grid(dims), r = make_grid(dims);
  for (auto& v : s.values) v = float(rng.uniform(1.0, 2.0));
  for (auto& v : r.values) v = float(rng.normal(70, 12));
  VoxelGrid s_relabeled = s;
  for (auto& v : s_relabeled.values) v = v * v * v;  // strictly monotone
  BrainMask m = full_mask(dims);
  const int bins = 256;
  VoxelGrid out_a = histogram_match(s, r, m, m, bins);
  VoxelGrid out_b = histogram_match(s_relabeled, r, m, m, bins);
  double ks = oracle::ks_distance(masked_values(out_a, m),
                                  masked_values(out_b, m));
  CHECK(ks <= 2.0 / bins);
}

TEST_CASE("degenerate source histogram is an error") {
  std::array<int32_t, 3> dims = {3, 3, 1};
  VoxelGrid s = make_grid(dims, 5.0f), r = make_grid(dims);
  for (int64_t i = 0; i < r.numel(); ++i) r.values[size_t(i)] = float(i);
  BrainMask m = full_mask(dims);
  try {
    histogram_match(s, r, m, m, 16);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateHistogram);
  }
}

TEST_CASE("bias correction leaves a flat image unchanged") {
  std::array<int32_t, 3> dims = {6, 6, 6};
  VoxelGrid g = make_grid(dims, 120.0f);
  BrainMask m = full_mask(dims);
  for (int degree : {1, 2, 3}) {
    VoxelGrid out = bias_correct(g, m, degree);
    for (int64_t i = 0; i < g.numel(); ++i) {
      CHECK(std::fabs(double(out.values[size_t(i)]) - 120.0) < 1e-9 * 120.0);
    }
  }
}

TEST_CASE("bias correction recovers planted log-polynomial fields") {
  std::array<int32_t, 3> dims = {12, 10, 8};
  BrainMask m = full_mask(dims);

  auto planted = [&](int degree, std::vector<double> coef) {
    VoxelGrid g = make_grid(dims, 0.0f);
    int64_t idx = 0;
    for (int64_t z = 0; z < dims[2]; ++z) {
      double cz = 2.0 * double(z) / double(dims[2] - 1) - 1.0;
      for (int64_t y = 0; y < dims[1]; ++y) {
        double cy = 2.0 * double(y) / double(dims[1] - 1) - 1.0;
        for (int64_t x = 0; x < dims[0]; ++x, ++idx) {
          double cx = 2.0 * double(x) / double(dims[0] - 1) - 1.0;
          double p = coef[0] * cx + coef[1] * cy + coef[2] * cz;
          if (degree >= 2) p += coef[3] * cx * cy + coef[4] * cz * cz;
          if (degree >= 3) p += coef[5] * cx * cx * cz;
          g.values[size_t(idx)] = float(200.0 * std::exp(p));
        }
      }
    }
    return g;
  };

  SUBCASE("degree 1 ramp") {
    VoxelGrid g = planted(1, {0.4, -0.3, 0.2});
    CHECK(masked_cv(bias_correct(g, m, 1), m) < 1e-6);
  }
  SUBCASE("degree 2") {
    VoxelGrid g = planted(2, {0.3, -0.2, 0.15, 0.25, -0.2});
    CHECK(masked_cv(bias_correct(g, m, 2), m) < 1e-6);
  }
  SUBCASE("degree 3") {
    VoxelGrid g = planted(3, {0.3, -0.2, 0.15, 0.25, -0.2, 0.3});
    CHECK(masked_cv(bias_correct(g, m, 3), m) < 1e-6);
  }
}

TEST_CASE("rank-deficient bias fits are rejected") {
  // two masked voxels cannot support a 20-term cubic fit
  std::array<int32_t, 3> dims = {6, 6, 6};
  VoxelGrid g = make_grid(dims, 50.0f);
  g.values[0] = 60.0f;
  BrainMask m;
  m.dims = dims;
  m.values.assign(size_t(g.numel()), 0);
  m.values[0] = 1;
  m.values[1] = 1;
  try {
    bias_correct(g, m, 3);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularFit);
  }
}

TEST_CASE("resample block mean and identity") {
  SUBCASE("2x2x2 block of 1..8 averages to 4.5") {
    VoxelGrid g = make_grid({2, 2, 2});
    for (int64_t i = 0; i < 8; ++i) g.values[size_t(i)] = float(i + 1);
    VoxelGrid d = resample(g, ResampleFactor::Down2);
    REQUIRE(d.numel() == 1);
    CHECK(d.values[0] == 4.5f);
    CHECK(d.header.spacing[0] == 2.0f);
  }
  SUBCASE("constant grid stays constant both ways") {
    VoxelGrid g = make_grid({4, 4, 4}, 3.25f);
    VoxelGrid d = resample(g, ResampleFactor::Down2);
    for (float v : d.values) CHECK(v == 3.25f);
    VoxelGrid u = resample(d, ResampleFactor::Up2);
    CHECK(u.header.dims == g.header.dims);
    for (float v : u.values) CHECK(v == 3.25f);
  }
  SUBCASE("down2 preserves the global mean") {
    Rng rng(31);
    VoxelGrid g = make_grid({8, 6, 4});
    for (auto& v : g.values) v = float(rng.normal(10, 5));
    VoxelGrid d = resample(g, ResampleFactor::Down2);
    double m1 = 0, m2 = 0;
    for (float v : g.values) m1 += v;
    for (float v : d.values) m2 += v;
    m1 /= double(g.numel());
    m2 /= double(d.numel());
    CHECK(std::fabs(m1 - m2) < 1e-6 * std::max(1.0, std::fabs(m1)));
  }
  SUBCASE("odd dims are rejected") {
    VoxelGrid g = make_grid({3, 4, 4});
    try {
      resample(g, ResampleFactor::Down2);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::OddDimension);
    }
  }
}

TEST_CASE("crop/pad conventions and inversion") {
  SUBCASE("identity at target dims") {
    VoxelGrid g = make_grid({4, 4, 4}, 2.0f);
    auto [out, off] = crop_pad_to_shape(g, {4, 4, 4});
    CHECK(out.values == g.values);
    CHECK(off.offset == std::array<int32_t, 3>{0, 0, 0});
  }
  SUBCASE("pad 3 to 4 appends the zero plane on the high side") {
    VoxelGrid g = make_grid({3, 1, 1});
    g.values = {1, 2, 3};
    auto [out, off] = crop_pad_to_shape(g, {4, 1, 1});
    CHECK(out.values == std::vector<float>{1, 2, 3, 0});
    CHECK(off.offset[0] == 0);  // low side got floor(1/2) = 0
  }
  SUBCASE("crop then inverse-map recovers original coordinates") {
    Rng rng(37);
    LabelVolume lv;
    lv.dims = {7, 6, 5};
    lv.values.resize(210);
    const uint8_t opts[4] = {0, 1, 2, 4};
    for (auto& v : lv.values) v = opts[rng.below(4)];
    VoxelGrid g = labels_to_grid(lv);
    auto [cropped, off] = crop_pad_to_shape(g, {4, 4, 4});
    LabelVolume cropped_lv = grid_to_labels(cropped);
    LabelVolume back = uncrop_labels(cropped_lv, off);
    CHECK(back.dims == lv.dims);
    // every voxel that survived the crop must land at its original spot
    for (int64_t z = 0; z < 4; ++z) {
      for (int64_t y = 0; y < 4; ++y) {
        for (int64_t x = 0; x < 4; ++x) {
          int64_t ox = x + off.offset[0], oy = y + off.offset[1],
                  oz = z + off.offset[2];
          CHECK(back.values[size_t((oz * 6 + oy) * 7 + ox)] ==
                cropped_lv.values[size_t((z * 4 + y) * 4 + x)]);
        }
      }
    }
  }
  SUBCASE("pad then inverse-map is lossless") {
    Rng rng(41);
    LabelVolume lv;
    lv.dims = {3, 5, 4};
    lv.values.resize(60);
    const uint8_t opts[4] = {0, 1, 2, 4};
    for (auto& v : lv.values) v = opts[rng.below(4)];
    auto [padded, off] = crop_pad_to_shape(labels_to_grid(lv), {8, 8, 8});
    LabelVolume back = uncrop_labels(grid_to_labels(padded), off);
    CHECK(back.dims == lv.dims);
    CHECK(back.values == lv.values);
  }
}
