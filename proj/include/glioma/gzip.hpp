#pragma once

#include <cstdint>
#include <vector>

namespace glioma {

// gzip (RFC 1952) on in-memory buffers, backed by zlib.
std::vector<uint8_t> gzip_compress(const std::vector<uint8_t>& data);
std::vector<uint8_t> gzip_decompress(const std::vector<uint8_t>& data);
bool looks_gzipped(const std::vector<uint8_t>& data);

}  // namespace glioma
