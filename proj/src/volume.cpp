#include "stprobe/volume.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "stprobe/error.hpp"
#include "stprobe/io_util.hpp"

namespace stprobe {

std::string to_string(const Extent& extent) {
    return fmt::format("{}x{}x{}", extent.width, extent.height, extent.frames);
}

void require_centered(const Extent& extent, const char* what) {
    if (extent.width <= 0 || extent.height <= 0 || extent.frames <= 0) {
        throw InvalidArgument(fmt::format("{}: extent {} must be positive", what, to_string(extent)));
    }
    if (!extent.centered()) {
        throw InvalidArgument(fmt::format("{}: extent {} needs odd width and height", what, to_string(extent)));
    }
}

Volume::Volume(Extent extent) : extent_(extent) {
    if (extent.width <= 0 || extent.height <= 0 || extent.frames <= 0) {
        throw InvalidArgument("volume extent must be positive, got " + to_string(extent));
    }
    data_.assign(extent.size(), 0.0);
}

std::span<const double> Volume::frame(int t) const {
    const std::size_t n = static_cast<std::size_t>(extent_.width) * static_cast<std::size_t>(extent_.height);
    return std::span<const double>(data_).subspan(static_cast<std::size_t>(t) * n, n);
}

double dot(const Volume& a, const Volume& b) {
    if (a.extent() != b.extent()) {
        throw InvalidArgument(
            fmt::format("extent mismatch: {} vs {}", to_string(a.extent()), to_string(b.extent())));
    }
    const auto sa = a.samples();
    const auto sb = b.samples();
    double sum = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        sum += sa[i] * sb[i];
    }
    return sum;
}

double energy(const Volume& v) {
    double sum = 0.0;
    for (double s : v.samples()) {
        sum += s * s;
    }
    return sum;
}

void write_stvl(const Volume& volume, std::ostream& out) {
    out.write("STVL", 4);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(volume.width()));
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(volume.height()));
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(volume.frames()));
    for (double s : volume.samples()) {
        io::write_le<float>(out, static_cast<float>(s));
    }
    if (!out) {
        throw IoError("failed writing STVL volume");
    }
}

Volume read_stvl(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || std::memcmp(magic.data(), "STVL", 4) != 0) {
        throw IoError("not an STVL volume (bad magic)");
    }
    const auto w = io::read_le<std::uint32_t>(in);
    const auto h = io::read_le<std::uint32_t>(in);
    const auto t = io::read_le<std::uint32_t>(in);
    if (!in || w == 0 || h == 0 || t == 0 || w > 1u << 16 || h > 1u << 16 || t > 1u << 16) {
        throw IoError("corrupt STVL header");
    }
    Volume v(Extent{static_cast<int>(w), static_cast<int>(h), static_cast<int>(t)});
    for (double& s : v.samples()) {
        s = io::read_le<float>(in);
    }
    if (!in) {
        throw IoError("truncated STVL volume");
    }
    return v;
}

void save_stvl(const Volume& volume, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    write_stvl(volume, out);
}

Volume load_stvl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    return read_stvl(in);
}

}  // namespace stprobe
