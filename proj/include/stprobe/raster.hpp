#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stprobe {

/// 8-bit RGB image, rows top to bottom.
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<unsigned char> rgb;
};

/// Binary PPM (P6).
void write_ppm(const Raster& raster, std::ostream& out);
void save_ppm(const Raster& raster, const std::string& path);

}  // namespace stprobe
