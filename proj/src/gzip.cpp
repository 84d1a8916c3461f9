#include "glioma/gzip.hpp"

#include <zlib.h>

#include "glioma/errors.hpp"

namespace glioma {

bool looks_gzipped(const std::vector<uint8_t>& data) {
  return data.size() >= 2 && data[0] == 0x1f && data[1] == 0x8b;
}

std::vector<uint8_t> gzip_compress(const std::vector<uint8_t>& data) {
  z_stream zs{};
  // windowBits 15+16 selects the gzip wrapper
  if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8,
                   Z_DEFAULT_STRATEGY) != Z_OK) {
    fail(ErrorCode::IoError, "deflateInit2 failed");
  }
  std::vector<uint8_t> out(deflateBound(&zs, data.size()) + 32);
  zs.next_in = const_cast<Bytef*>(data.data());
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) fail(ErrorCode::IoError, "gzip compression failed");
  out.resize(out.size() - zs.avail_out);
  return out;
}

std::vector<uint8_t> gzip_decompress(const std::vector<uint8_t>& data) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) {
    fail(ErrorCode::IoError, "inflateInit2 failed");
  }
  std::vector<uint8_t> out;
  out.reserve(data.size() * 4);
  zs.next_in = const_cast<Bytef*>(data.data());
  zs.avail_in = static_cast<uInt>(data.size());
  uint8_t buf[1 << 16];
  int rc = Z_OK;
  do {
    zs.next_out = buf;
    zs.avail_out = sizeof(buf);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      fail(ErrorCode::TruncatedData, "corrupt gzip stream");
    }
    out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
  } while (rc != Z_STREAM_END && (zs.avail_in > 0 || zs.avail_out == 0));
  inflateEnd(&zs);
  if (rc != Z_STREAM_END) fail(ErrorCode::TruncatedData, "truncated gzip stream");
  return out;
}

}  // namespace glioma
