#include "stprobe/raster.hpp"

#include <fstream>
#include <ostream>

#include "stprobe/error.hpp"

namespace stprobe {

void write_ppm(const Raster& raster, std::ostream& out) {
    out << "P6\n" << raster.width << ' ' << raster.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(raster.rgb.data()), static_cast<std::streamsize>(raster.rgb.size()));
}

void save_ppm(const Raster& raster, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    write_ppm(raster, out);
    if (!out) {
        throw IoError("failed writing " + path);
    }
}

}  // namespace stprobe
