#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace glioma {

// Minimal RGB8 PNG writer (zlib-deflated IDAT, filter 0 scanlines).
void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<uint8_t>& rgb);

}  // namespace glioma
