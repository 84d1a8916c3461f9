#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "glioma/gzip.hpp"
#include "glioma/rng.hpp"
#include "glioma/volume_io.hpp"

using namespace glioma;
namespace fs = std::filesystem;

namespace {

// Hand-built single-file NIfTI-1 from the published field offsets; kept
// independent of write_nifti so it cross-checks the byte layout.
std::vector<uint8_t> reference_nifti_bytes() {
  std::vector<uint8_t> b(352 + 64 * 4, 0);
  auto put32 = [&](size_t off, uint32_t v) {
    b[off] = uint8_t(v);
    b[off + 1] = uint8_t(v >> 8);
    b[off + 2] = uint8_t(v >> 16);
    b[off + 3] = uint8_t(v >> 24);
  };
  auto put16 = [&](size_t off, uint16_t v) {
    b[off] = uint8_t(v);
    b[off + 1] = uint8_t(v >> 8);
  };
  auto putf = [&](size_t off, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put32(off, bits);
  };
  put32(0, 348);                      // sizeof_hdr
  put16(40, 3);                       // dim[0]
  put16(42, 4);                       // dim[1]
  put16(44, 4);                       // dim[2]
  put16(46, 4);                       // dim[3]
  for (size_t i = 4; i < 8; ++i) put16(40 + 2 * i, 1);
  put16(70, 16);                      // datatype = float32
  put16(72, 32);                      // bitpix
  putf(80, 1.5f);                     // pixdim[1]
  putf(84, 2.0f);                     // pixdim[2]
  putf(88, 2.5f);                     // pixdim[3]
  putf(108, 352.0f);                  // vox_offset
  putf(112, 1.0f);                    // scl_slope
  std::memcpy(b.data() + 344, "n+1\0", 4);
  for (int i = 0; i < 64; ++i) putf(352 + size_t(i) * 4, float(i) * 0.5f);
  return b;
}

VoxelGrid random_grid(Rng& rng, NiftiDatatype dt,
                      std::array<int32_t, 3> dims = {5, 4, 3}) {
  VoxelGrid g = make_grid(dims, 0.0f,
                          {float(rng.uniform(0.5, 3.0)),
                           float(rng.uniform(0.5, 3.0)),
                           float(rng.uniform(0.5, 3.0))});
  g.header.datatype = dt;
  for (auto& v : g.values) {
    switch (dt) {
      case NiftiDatatype::Uint8: v = float(rng.below(256)); break;
      case NiftiDatatype::Int16:
        v = float(int(rng.below(65536)) - 32768);
        break;
      case NiftiDatatype::Float32:
        v = float(rng.normal() * 100.0);
        break;
    }
  }
  return g;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("glioma_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("parse of a hand-built header matches the byte layout") {
  VoxelGrid g = parse_nifti(reference_nifti_bytes());
  CHECK(g.header.dims == std::array<int32_t, 3>{4, 4, 4});
  CHECK(g.header.datatype == NiftiDatatype::Float32);
  CHECK(g.header.spacing[0] == doctest::Approx(1.5));
  CHECK(g.header.spacing[1] == doctest::Approx(2.0));
  CHECK(g.header.spacing[2] == doctest::Approx(2.5));
  REQUIRE(g.values.size() == 64);
  CHECK(g.values[0] == 0.0f);
  CHECK(g.values[63] == 31.5f);
}

TEST_CASE("round trip is bit-exact for every datatype, with and without gzip") {
  Rng rng(42);
  for (auto dt : {NiftiDatatype::Uint8, NiftiDatatype::Int16,
                  NiftiDatatype::Float32}) {
    for (bool gz : {false, true}) {
      VoxelGrid g = random_grid(rng, dt);
      VoxelGrid back = parse_nifti(write_nifti(g, gz), true);
      REQUIRE(back.header.dims == g.header.dims);
      CHECK(back.header.datatype == g.header.datatype);
      CHECK(std::memcmp(back.header.spacing.data(), g.header.spacing.data(),
                        sizeof(g.header.spacing)) == 0);
      REQUIRE(back.values.size() == g.values.size());
      CHECK(std::memcmp(back.values.data(), g.values.data(),
                        g.values.size() * 4) == 0);
    }
  }
}

TEST_CASE("bad magic is rejected") {
  auto bytes = reference_nifti_bytes();
  std::memcpy(bytes.data() + 344, "abc\0", 4);
  CHECK_THROWS_WITH_AS(parse_nifti(bytes), doctest::Contains("n+1"), Error);
  try {
    parse_nifti(bytes);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadMagic);
  }
}

TEST_CASE("written constant-zero 2x2x2 grid has the documented size") {
  VoxelGrid g = make_grid({2, 2, 2});
  auto bytes = write_nifti(g, false);
  CHECK(bytes.size() == 352 + 32);  // 348-byte header + 4 pad + float payload
  uint32_t sizeof_hdr = uint32_t(bytes[0]) | uint32_t(bytes[1]) << 8 |
                        uint32_t(bytes[2]) << 16 | uint32_t(bytes[3]) << 24;
  CHECK(sizeof_hdr == 348);
  uint16_t datatype = uint16_t(bytes[70]) | uint16_t(bytes[71]) << 8;
  CHECK(datatype == 16);
}

TEST_CASE("label grids are emitted as uint8") {
  LabelVolume lv;
  lv.dims = {2, 2, 2};
  lv.values = {0, 1, 2, 4, 0, 1, 2, 4};
  auto bytes = write_nifti(labels_to_grid(lv), false);
  uint16_t datatype = uint16_t(bytes[70]) | uint16_t(bytes[71]) << 8;
  CHECK(datatype == 2);
  CHECK(bytes.size() == 352 + 8);
  LabelVolume back = grid_to_labels(parse_nifti(bytes));
  CHECK(back.values == lv.values);
}

TEST_CASE("big-endian input is byte-swapped") {
  VoxelGrid g = make_grid({3, 2, 2}, 0.0f, {1.5f, 1.0f, 2.0f});
  for (size_t i = 0; i < g.values.size(); ++i) g.values[i] = float(i) * 1.25f;
  auto le = write_nifti(g, false);
  // swap every 16/32-bit field we consume, plus the float payload
  auto be = le;
  auto swap32 = [&](size_t off) {
    std::swap(be[off], be[off + 3]);
    std::swap(be[off + 1], be[off + 2]);
  };
  auto swap16 = [&](size_t off) { std::swap(be[off], be[off + 1]); };
  swap32(0);
  for (size_t i = 0; i < 8; ++i) swap16(40 + 2 * i);
  swap16(70);
  swap16(72);
  for (size_t i = 0; i < 8; ++i) swap32(76 + 4 * i);
  swap32(108);
  swap32(112);
  swap32(116);
  swap16(252);
  swap16(254);
  for (size_t i = 0; i < 12; ++i) swap32(280 + 4 * i);
  for (size_t i = 0; i < g.values.size(); ++i) swap32(352 + 4 * i);
  VoxelGrid back = parse_nifti(be);
  CHECK(back.header.dims == g.header.dims);
  CHECK(back.values == g.values);
  CHECK(back.header.big_endian_source);
}

TEST_CASE("intensity scaling is applied when slope is nonzero") {
  auto bytes = reference_nifti_bytes();
  auto putf = [&](size_t off, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    bytes[off] = uint8_t(bits);
    bytes[off + 1] = uint8_t(bits >> 8);
    bytes[off + 2] = uint8_t(bits >> 16);
    bytes[off + 3] = uint8_t(bits >> 24);
  };
  putf(112, 2.0f);   // scl_slope
  putf(116, 10.0f);  // scl_inter
  VoxelGrid g = parse_nifti(bytes);
  CHECK(g.values[2] == doctest::Approx(2.0 * 1.0 + 10.0));
  CHECK(g.header.scale_slope == 1.0f);  // normalized on parse
}

TEST_CASE("malformed inputs raise typed errors") {
  auto base = reference_nifti_bytes();

  SUBCASE("truncated payload") {
    auto b = base;
    b.resize(352 + 10);
    CHECK_THROWS_AS(parse_nifti(b), Error);
    try { parse_nifti(b); } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TruncatedData);
    }
  }
  SUBCASE("zero dimension") {
    auto b = base;
    b[42] = 0;
    b[43] = 0;
    try { parse_nifti(b); } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadHeader);
    }
  }
  SUBCASE("unsupported datatype") {
    auto b = base;
    b[70] = 64;  // float64
    try { parse_nifti(b); } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnsupportedDatatype);
    }
  }
  SUBCASE("non-finite voxel") {
    auto b = base;
    uint32_t nan_bits = 0x7fc00000;
    std::memcpy(b.data() + 352, &nan_bits, 4);
    try { parse_nifti(b); } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonFiniteVoxel);
    }
  }
  SUBCASE("short file") {
    std::vector<uint8_t> b(100, 0);
    try { parse_nifti(b); } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TruncatedData);
    }
  }
}

TEST_CASE("load_case reads the BraTS directory convention") {
  fs::path dir = temp_dir("load_case");
  Rng rng(7);
  fs::create_directories(dir / "CASE_A");
  VoxelGrid g = random_grid(rng, NiftiDatatype::Float32, {4, 4, 4});
  for (const char* mod : {"flair", "t1", "t1ce", "t2"}) {
    write_nifti_file(dir / "CASE_A" / (std::string("CASE_A_") + mod + ".nii.gz"),
                     g);
  }
  LabelVolume lv;
  lv.dims = {4, 4, 4};
  lv.values.assign(64, 0);
  lv.values[0] = 4;
  write_nifti_file(dir / "CASE_A" / "CASE_A_seg.nii.gz", labels_to_grid(lv));

  MultimodalCase c = load_case(dir, "CASE_A");
  CHECK(c.case_id == "CASE_A");
  REQUIRE(c.labels.has_value());
  CHECK(c.labels->values[0] == 4);
  CHECK(list_case_ids(dir) == std::vector<std::string>{"CASE_A"});

  SUBCASE("missing modality") {
    fs::remove(dir / "CASE_A" / "CASE_A_t2.nii.gz");
    try { load_case(dir, "CASE_A"); } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingModality);
      CHECK(std::string(e.what()).find("t2") != std::string::npos);
    }
  }
  SUBCASE("bad label value") {
    LabelVolume bad;
    bad.dims = {4, 4, 4};
    bad.values.assign(64, 0);
    VoxelGrid bg = labels_to_grid(bad);
    bg.values[5] = 3.0f;
    write_nifti_file(dir / "CASE_A" / "CASE_A_seg.nii.gz", bg);
    try { load_case(dir, "CASE_A"); } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadLabelValue);
    }
  }
  SUBCASE("shape mismatch") {
    write_nifti_file(dir / "CASE_A" / "CASE_A_t2.nii.gz",
                     random_grid(rng, NiftiDatatype::Float32, {5, 4, 4}));
    try { load_case(dir, "CASE_A"); } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ShapeMismatch);
    }
  }
}

TEST_CASE("region masks follow the label sets") {
  LabelVolume lv;
  lv.dims = {3, 3, 1};
  lv.values = {0, 0, 0, 0, 0, 0, 0, 0, 0};

  SUBCASE("all-zero labels give empty masks") {
    for (auto r : {Region::WT, Region::TC, Region::ET}) {
      CHECK(derive_region_mask(lv, r).count() == 0);
    }
  }
  SUBCASE("a single enhancing voxel appears in all three regions") {
    lv.values[4] = 4;
    for (auto r : {Region::WT, Region::TC, Region::ET}) {
      RegionMask m = derive_region_mask(lv, r);
      CHECK(m.count() == 1);
      CHECK(m.values[4] == 1);
    }
  }
  SUBCASE("one voxel of each label gives counts 3/2/1") {
    lv.values[0] = 1;
    lv.values[1] = 2;
    lv.values[2] = 4;
    CHECK(derive_region_mask(lv, Region::WT).count() == 3);
    CHECK(derive_region_mask(lv, Region::TC).count() == 2);
    CHECK(derive_region_mask(lv, Region::ET).count() == 1);
  }
}

TEST_CASE("region nesting and count identities hold for random labels") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    LabelVolume lv;
    lv.dims = {6, 5, 4};
    lv.values.resize(120);
    int64_t ones = 0, twos = 0;
    for (auto& v : lv.values) {
      const uint8_t options[4] = {0, 1, 2, 4};
      v = options[rng.below(4)];
      ones += v == 1;
      twos += v == 2;
    }
    RegionMask wt = derive_region_mask(lv, Region::WT);
    RegionMask tc = derive_region_mask(lv, Region::TC);
    RegionMask et = derive_region_mask(lv, Region::ET);
    for (size_t i = 0; i < lv.values.size(); ++i) {
      CHECK(et.values[i] <= tc.values[i]);
      CHECK(tc.values[i] <= wt.values[i]);
    }
    CHECK(wt.count() == tc.count() + twos);
    CHECK(tc.count() == et.count() + ones);
  }
}

TEST_CASE("gzip helpers round-trip and detect the wrapper") {
  Rng rng(5);
  std::vector<uint8_t> data(10000);
  for (auto& b : data) b = uint8_t(rng.below(256));
  auto gz = gzip_compress(data);
  CHECK(looks_gzipped(gz));
  CHECK_FALSE(looks_gzipped(data));
  CHECK(gzip_decompress(gz) == data);
  auto corrupt = gz;
  corrupt.resize(corrupt.size() / 2);
  CHECK_THROWS_AS(gzip_decompress(corrupt), Error);
}
