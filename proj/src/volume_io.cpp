#include "glioma/volume_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "glioma/gzip.hpp"

namespace glioma {

namespace {

// NIfTI-1 field offsets inside the 348-byte header
constexpr size_t kHeaderSize = 348;
constexpr size_t kOffDim = 40;       // short dim[8]
constexpr size_t kOffDatatype = 70;  // short
constexpr size_t kOffBitpix = 72;    // short
constexpr size_t kOffPixdim = 76;    // float pixdim[8]
constexpr size_t kOffVoxOffset = 108;
constexpr size_t kOffSclSlope = 112;
constexpr size_t kOffSclInter = 116;
constexpr size_t kOffXyztUnits = 123;
constexpr size_t kOffQformCode = 252;
constexpr size_t kOffSformCode = 254;
constexpr size_t kOffSrow = 280;  // float srow_x[4], srow_y[4], srow_z[4]
constexpr size_t kOffMagic = 344;

uint16_t load_u16(const uint8_t* p, bool swap) {
  uint16_t v = uint16_t(p[0]) | uint16_t(p[1]) << 8;
  return swap ? uint16_t(v >> 8 | v << 8) : v;
}

uint32_t load_u32(const uint8_t* p, bool swap) {
  uint32_t v = uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
               uint32_t(p[3]) << 24;
  if (swap) {
    v = (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
  }
  return v;
}

int16_t load_i16(const uint8_t* p, bool swap) {
  return static_cast<int16_t>(load_u16(p, swap));
}

float load_f32(const uint8_t* p, bool swap) {
  uint32_t bits = load_u32(p, swap);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

void store_u16(uint8_t* p, uint16_t v) {
  p[0] = uint8_t(v);
  p[1] = uint8_t(v >> 8);
}

void store_u32(uint8_t* p, uint32_t v) {
  p[0] = uint8_t(v);
  p[1] = uint8_t(v >> 8);
  p[2] = uint8_t(v >> 16);
  p[3] = uint8_t(v >> 24);
}

void store_f32(uint8_t* p, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  store_u32(p, bits);
}

size_t datatype_bytes(NiftiDatatype dt) {
  switch (dt) {
    case NiftiDatatype::Uint8: return 1;
    case NiftiDatatype::Int16: return 2;
    case NiftiDatatype::Float32: return 4;
  }
  return 0;
}

}  // namespace

VoxelGrid make_grid(std::array<int32_t, 3> dims, float fill,
                    std::array<float, 3> spacing) {
  VoxelGrid g;
  g.header.dims = dims;
  g.header.spacing = spacing;
  g.values.assign(int64_t(dims[0]) * dims[1] * dims[2], fill);
  return g;
}

const char* region_name(Region r) {
  switch (r) {
    case Region::WT: return "WT";
    case Region::TC: return "TC";
    case Region::ET: return "ET";
  }
  return "?";
}

int64_t RegionMask::count() const {
  return std::count(values.begin(), values.end(), uint8_t(1));
}

const VoxelGrid& MultimodalCase::modality(int i) const {
  switch (i) {
    case 0: return flair;
    case 1: return t1;
    case 2: return t1ce;
    default: return t2;
  }
}

VoxelGrid& MultimodalCase::modality(int i) {
  return const_cast<VoxelGrid&>(
      static_cast<const MultimodalCase*>(this)->modality(i));
}

VoxelGrid parse_nifti(const std::vector<uint8_t>& raw, bool allow_gzip) {
  const std::vector<uint8_t>* bytes = &raw;
  std::vector<uint8_t> inflated;
  if (looks_gzipped(raw)) {
    if (!allow_gzip) fail(ErrorCode::BadHeader, "gzip input not allowed here");
    inflated = gzip_decompress(raw);
    bytes = &inflated;
  }
  const std::vector<uint8_t>& b = *bytes;
  if (b.size() < kHeaderSize) {
    fail(ErrorCode::TruncatedData, "file shorter than the 348-byte header");
  }
  const uint8_t* p = b.data();

  bool swap = false;
  uint32_t sizeof_hdr = load_u32(p, false);
  if (sizeof_hdr != kHeaderSize) {
    if (load_u32(p, true) == kHeaderSize) {
      swap = true;
    } else {
      fail(ErrorCode::BadHeader, "sizeof_hdr is not 348");
    }
  }

  char magic[4];
  std::memcpy(magic, p + kOffMagic, 4);
  if (!(magic[0] == 'n' && magic[1] == '+' && magic[2] == '1' &&
        magic[3] == '\0')) {
    fail(ErrorCode::BadMagic, "magic is not \"n+1\"");
  }

  int16_t ndim = load_i16(p + kOffDim, swap);
  if (ndim != 3) fail(ErrorCode::BadHeader, "dim[0] must be 3");

  NiftiHeader hdr;
  hdr.big_endian_source = swap;
  for (int i = 0; i < 3; ++i) {
    int16_t d = load_i16(p + kOffDim + 2 * (i + 1), swap);
    if (d < 1) fail(ErrorCode::BadHeader, "non-positive dimension");
    hdr.dims[i] = d;
  }

  int16_t dtcode = load_i16(p + kOffDatatype, swap);
  if (dtcode != 2 && dtcode != 4 && dtcode != 16) {
    fail(ErrorCode::UnsupportedDatatype,
         "datatype code " + std::to_string(dtcode));
  }
  hdr.datatype = static_cast<NiftiDatatype>(dtcode);
  int16_t bitpix = load_i16(p + kOffBitpix, swap);
  if (bitpix != int16_t(8 * datatype_bytes(hdr.datatype))) {
    fail(ErrorCode::BadHeader, "bitpix disagrees with datatype");
  }

  for (int i = 0; i < 3; ++i) {
    float s = load_f32(p + kOffPixdim + 4 * (i + 1), swap);
    if (!std::isfinite(s) || s <= 0.0f) {
      fail(ErrorCode::BadHeader, "non-positive voxel spacing");
    }
    hdr.spacing[i] = s;
  }

  float vox_offset_f = load_f32(p + kOffVoxOffset, swap);
  if (!std::isfinite(vox_offset_f) || vox_offset_f < float(kHeaderSize) ||
      vox_offset_f != std::floor(vox_offset_f) || vox_offset_f > 1e9f) {
    fail(ErrorCode::BadHeader, "bad vox_offset");
  }
  size_t vox_offset = static_cast<size_t>(vox_offset_f);

  hdr.scale_slope = load_f32(p + kOffSclSlope, swap);
  hdr.scale_intercept = load_f32(p + kOffSclInter, swap);
  if (!std::isfinite(hdr.scale_slope) || !std::isfinite(hdr.scale_intercept)) {
    fail(ErrorCode::BadHeader, "non-finite intensity scaling");
  }

  hdr.qform_code = load_i16(p + kOffQformCode, swap);
  hdr.sform_code = load_i16(p + kOffSformCode, swap);
  for (int i = 0; i < 12; ++i) {
    hdr.srow[i] = load_f32(p + kOffSrow + 4 * i, swap);
  }

  uint64_t numel = uint64_t(hdr.dims[0]) * uint64_t(hdr.dims[1]) *
                   uint64_t(hdr.dims[2]);
  uint64_t payload = numel * datatype_bytes(hdr.datatype);
  if (vox_offset > b.size() || payload > b.size() - vox_offset) {
    fail(ErrorCode::TruncatedData, "voxel payload shorter than dims require");
  }

  VoxelGrid grid;
  grid.header = hdr;
  grid.values.resize(numel);
  const uint8_t* d = p + vox_offset;
  bool identity_scale = (hdr.scale_slope == 0.0f) ||
                        (hdr.scale_slope == 1.0f && hdr.scale_intercept == 0.0f);
  for (uint64_t i = 0; i < numel; ++i) {
    float v = 0.0f;
    switch (hdr.datatype) {
      case NiftiDatatype::Uint8: v = float(d[i]); break;
      case NiftiDatatype::Int16: v = float(load_i16(d + 2 * i, swap)); break;
      case NiftiDatatype::Float32: v = load_f32(d + 4 * i, swap); break;
    }
    if (!identity_scale) {
      v = float(double(hdr.scale_slope) * double(v) +
                double(hdr.scale_intercept));
    }
    if (!std::isfinite(v)) {
      fail(ErrorCode::NonFiniteVoxel, "non-finite voxel at index " +
                                          std::to_string(i));
    }
    grid.values[i] = v;
  }
  // normalized representation: scaling already applied
  grid.header.scale_slope = 1.0f;
  grid.header.scale_intercept = 0.0f;
  return grid;
}

std::vector<uint8_t> write_nifti(const VoxelGrid& grid, bool gzip) {
  const NiftiHeader& h = grid.header;
  if (int64_t(grid.values.size()) != grid.numel()) {
    fail(ErrorCode::ShapeMismatch, "value count does not match dims");
  }
  size_t elem = datatype_bytes(h.datatype);
  size_t vox_offset = 352;  // 348-byte header + 4-byte extension flag
  std::vector<uint8_t> out(vox_offset + grid.values.size() * elem, 0);
  uint8_t* p = out.data();

  store_u32(p + 0, 348);
  p[38] = 'r';  // regular
  store_u16(p + kOffDim, 3);
  for (int i = 0; i < 3; ++i) {
    store_u16(p + kOffDim + 2 * (i + 1), uint16_t(h.dims[i]));
  }
  for (int i = 4; i < 8; ++i) store_u16(p + kOffDim + 2 * i, 1);
  store_u16(p + kOffDatatype, uint16_t(h.datatype));
  store_u16(p + kOffBitpix, uint16_t(8 * elem));
  store_f32(p + kOffPixdim, 1.0f);
  for (int i = 0; i < 3; ++i) {
    store_f32(p + kOffPixdim + 4 * (i + 1), h.spacing[i]);
  }
  store_f32(p + kOffVoxOffset, float(vox_offset));
  store_f32(p + kOffSclSlope, 1.0f);
  store_f32(p + kOffSclInter, 0.0f);
  p[kOffXyztUnits] = 2;  // millimetres
  store_u16(p + kOffQformCode, uint16_t(h.qform_code));
  store_u16(p + kOffSformCode, uint16_t(h.sform_code));
  for (int i = 0; i < 12; ++i) store_f32(p + kOffSrow + 4 * i, h.srow[i]);
  std::memcpy(p + kOffMagic, "n+1\0", 4);

  uint8_t* d = p + vox_offset;
  for (size_t i = 0; i < grid.values.size(); ++i) {
    float v = grid.values[i];
    switch (h.datatype) {
      case NiftiDatatype::Uint8: d[i] = uint8_t(v); break;
      case NiftiDatatype::Int16:
        store_u16(d + 2 * i, uint16_t(int16_t(v)));
        break;
      case NiftiDatatype::Float32: store_f32(d + 4 * i, v); break;
    }
  }
  if (gzip) return gzip_compress(out);
  return out;
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path,
                      const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::IoError, "cannot create " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          std::streamsize(bytes.size()));
  if (!f) fail(ErrorCode::IoError, "short write to " + path.string());
}

VoxelGrid read_nifti_file(const std::filesystem::path& path) {
  return parse_nifti(read_file_bytes(path), true);
}

void write_nifti_file(const std::filesystem::path& path,
                      const VoxelGrid& grid) {
  bool gz = path.extension() == ".gz";
  write_file_bytes(path, write_nifti(grid, gz));
}

LabelVolume grid_to_labels(const VoxelGrid& grid) {
  LabelVolume lv;
  lv.dims = grid.header.dims;
  lv.spacing = grid.header.spacing;
  lv.values.resize(grid.values.size());
  for (size_t i = 0; i < grid.values.size(); ++i) {
    float v = grid.values[i];
    if (v != 0.0f && v != 1.0f && v != 2.0f && v != 4.0f) {
      fail(ErrorCode::BadLabelValue,
           "label value " + std::to_string(v) + " at index " +
               std::to_string(i));
    }
    lv.values[i] = uint8_t(v);
  }
  return lv;
}

VoxelGrid labels_to_grid(const LabelVolume& labels) {
  VoxelGrid g = make_grid(labels.dims, 0.0f, labels.spacing);
  g.header.datatype = NiftiDatatype::Uint8;
  for (size_t i = 0; i < labels.values.size(); ++i) {
    g.values[i] = float(labels.values[i]);
  }
  return g;
}

namespace {

std::filesystem::path find_modality_file(const std::filesystem::path& dir,
                                         const std::string& case_id,
                                         const std::string& suffix) {
  const std::string stem = case_id + "_" + suffix;
  for (const auto& base : {dir / case_id, dir}) {
    for (const char* ext : {".nii.gz", ".nii"}) {
      std::filesystem::path p = base / (stem + ext);
      if (std::filesystem::exists(p)) return p;
    }
  }
  return {};
}

}  // namespace

MultimodalCase load_case(const std::filesystem::path& directory,
                         const std::string& case_id) {
  MultimodalCase c;
  c.case_id = case_id;
  for (int m = 0; m < kModalityCount; ++m) {
    auto p = find_modality_file(directory, case_id, kModalityNames[m]);
    if (p.empty()) {
      fail(ErrorCode::MissingModality,
           case_id + " lacks modality " + kModalityNames[m]);
    }
    c.modality(m) = read_nifti_file(p);
    if (m > 0) {
      if (c.modality(m).header.dims != c.flair.header.dims ||
          c.modality(m).header.spacing != c.flair.header.spacing) {
        fail(ErrorCode::ShapeMismatch,
             case_id + ": modality grids disagree in dims or spacing");
      }
    }
  }
  auto seg = find_modality_file(directory, case_id, "seg");
  if (!seg.empty()) {
    VoxelGrid g = read_nifti_file(seg);
    if (g.header.dims != c.flair.header.dims) {
      fail(ErrorCode::ShapeMismatch, case_id + ": _seg dims disagree");
    }
    c.labels = grid_to_labels(g);
  }
  return c;
}

std::vector<std::string> list_case_ids(const std::filesystem::path& directory) {
  std::vector<std::string> ids;
  if (!std::filesystem::is_directory(directory)) return ids;
  for (const auto& e : std::filesystem::directory_iterator(directory)) {
    std::string name = e.path().filename().string();
    if (e.is_directory()) {
      if (!find_modality_file(directory, name, "flair").empty()) {
        ids.push_back(name);
      }
    } else if (name.size() > 10 && name.find("_flair.nii") != std::string::npos) {
      ids.push_back(name.substr(0, name.find("_flair.nii")));
    }
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

RegionMask derive_region_mask(const LabelVolume& labels, Region region) {
  RegionMask m;
  m.region = region;
  m.dims = labels.dims;
  m.values.resize(labels.values.size());
  for (size_t i = 0; i < labels.values.size(); ++i) {
    uint8_t v = labels.values[i];
    bool in = false;
    switch (region) {
      case Region::WT: in = (v == 1 || v == 2 || v == 4); break;
      case Region::TC: in = (v == 1 || v == 4); break;
      case Region::ET: in = (v == 4); break;
    }
    m.values[i] = in ? 1 : 0;
  }
  return m;
}

}  // namespace glioma
