#include "stprobe/aperture.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>

#include <fmt/format.h>

#include "stprobe/io_util.hpp"

namespace stprobe {

int level_factor(FlowLevel level) {
    switch (level) {
        case FlowLevel::full:
            return 1;
        case FlowLevel::f2:
            return 4;
        case FlowLevel::f4:
            return 16;
        case FlowLevel::f6:
            return 64;
    }
    return 1;
}

std::string to_string(FlowLevel level) {
    switch (level) {
        case FlowLevel::full:
            return "full";
        case FlowLevel::f2:
            return "f2";
        case FlowLevel::f4:
            return "f4";
        case FlowLevel::f6:
            return "f6";
    }
    return "unknown";
}

FlowLevel parse_flow_level(const std::string& text) {
    for (auto l : {FlowLevel::full, FlowLevel::f2, FlowLevel::f4, FlowLevel::f6}) {
        if (to_string(l) == text) {
            return l;
        }
    }
    throw InvalidArgument(fmt::format("unknown flow level '{}' (expected full, f2, f4 or f6)", text));
}

std::array<int, 2> level_size(const Extent& canvas, FlowLevel level) {
    const int f = level_factor(level);
    return {(canvas.width + f - 1) / f, (canvas.height + f - 1) / f};
}

void validate_flow(const FlowMap& flow, const Extent& canvas) {
    const auto [w, h] = level_size(canvas, flow.level);
    if (flow.width != w || flow.height != h) {
        throw InvalidArgument(fmt::format("{} flow map is {}x{}, expected {}x{} for a {}x{} input", to_string(flow.level),
                                          flow.width, flow.height, w, h, canvas.width, canvas.height));
    }
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (flow.u.size() != n || flow.v.size() != n) {
        throw InvalidArgument("flow map component sizes do not match its dimensions");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(flow.u[i]) || !std::isfinite(flow.v[i])) {
            throw InvalidArgument(fmt::format("non-finite flow at cell {}", i));
        }
    }
}

FlowMap subsample_flow(const FlowField& field, FlowLevel level) {
    const int f = level_factor(level);
    FlowMap m;
    m.level = level;
    m.width = (field.width + f - 1) / f;
    m.height = (field.height + f - 1) / f;
    m.u.reserve(static_cast<std::size_t>(m.width) * static_cast<std::size_t>(m.height));
    m.v.reserve(m.u.capacity());
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y * f) * static_cast<std::size_t>(field.width) +
                                  static_cast<std::size_t>(x * f);
            m.u.push_back(field.u[i]);
            m.v.push_back(field.v[i]);
        }
    }
    return m;
}

namespace {
constexpr char kFloMagic[4] = {'P', 'I', 'E', 'H'};
}

void write_flo(const FlowMap& flow, std::ostream& out) {
    out.write(kFloMagic, 4);
    io::write_le<std::int32_t>(out, flow.width);
    io::write_le<std::int32_t>(out, flow.height);
    for (std::size_t i = 0; i < flow.u.size(); ++i) {
        io::write_le<float>(out, flow.u[i]);
        io::write_le<float>(out, flow.v[i]);
    }
}

FlowMap read_flo(std::istream& in, FlowLevel level) {
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || !std::equal(magic, magic + 4, kFloMagic)) {
        throw IoError("not a .flo file (bad magic)");
    }
    FlowMap m;
    m.level = level;
    m.width = io::read_le<std::int32_t>(in);
    m.height = io::read_le<std::int32_t>(in);
    if (!in || m.width <= 0 || m.height <= 0 || m.width > (1 << 16) || m.height > (1 << 16)) {
        throw IoError("invalid .flo dimensions");
    }
    const std::size_t n = static_cast<std::size_t>(m.width) * static_cast<std::size_t>(m.height);
    m.u.resize(n);
    m.v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        m.u[i] = io::read_le<float>(in);
        m.v[i] = io::read_le<float>(in);
    }
    if (!in) {
        throw IoError("truncated .flo file");
    }
    return m;
}

void save_flo(const FlowMap& flow, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    write_flo(flow, out);
    if (!out) {
        throw IoError("failed writing " + path);
    }
}

FlowMap load_flo(const std::string& path, FlowLevel level) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    return read_flo(in, level);
}

double epe(std::array<double, 2> est, std::array<double, 2> gt) {
    return std::hypot(est[0] - gt[0], est[1] - gt[1]);
}

std::string to_string(BarDirection d) {
    return d == BarDirection::up_right ? "up_right" : "down_left";
}

BarDirection parse_bar_direction(const std::string& text) {
    if (text == "up_right") {
        return BarDirection::up_right;
    }
    if (text == "down_left") {
        return BarDirection::down_left;
    }
    throw InvalidArgument(fmt::format("unknown bar direction '{}'", text));
}

ApertureCase make_aperture_case(double scale, BarDirection direction, double magnitude, const Extent& canvas) {
    if (!(scale > 0.0) || !(magnitude >= 0.0)) {
        throw InvalidArgument("bar scale must be positive and motion magnitude non-negative");
    }
    ApertureCase c;
    c.scale = scale;
    c.width = default_bar_width(scale);
    c.direction = direction;
    c.u = bar_motion(magnitude, direction == BarDirection::up_right);
    // Same centre as gen_bar_sequence.
    c.center_x = canvas.width / 2;
    c.center_y = canvas.height / 2;
    c.canvas = canvas;
    return c;
}

double center_error(const FlowMap& flow, const ApertureCase& c) {
    const int f = level_factor(flow.level);
    const int cx = static_cast<int>(std::floor(c.center_x / f));
    const int cy = static_cast<int>(std::floor(c.center_y / f));
    if (cx < 0 || cy < 0 || cx >= flow.width || cy >= flow.height) {
        throw InvalidArgument(fmt::format("bar centre cell ({}, {}) lies outside the {}x{} {} map", cx, cy, flow.width,
                                          flow.height, to_string(flow.level)));
    }
    return epe(flow.at(cx, cy), c.u);
}

std::string flow_file_name(double scale, BarDirection direction, FlowLevel level) {
    return fmt::format("bar_{:g}_{}_{}.flo", scale, to_string(direction), to_string(level));
}

FlowMap FlowDirectorySource::flow(const ApertureCase& c, FlowLevel level) const {
    const auto path = std::filesystem::path(dir_) / flow_file_name(c.scale, c.direction, level);
    if (!std::filesystem::exists(path)) {
        throw MissingFlowMap(fmt::format("missing flow map for scale {:g}, direction {}, level {}: {}", c.scale,
                                         to_string(c.direction), to_string(level), path.string()));
    }
    FlowMap m = load_flo(path.string(), level);
    validate_flow(m, c.canvas);
    return m;
}

namespace {

// Bar coordinates (along, across) of pixel (x, y) for a bar centred at (cx, cy).
std::array<double, 2> bar_coords(double x, double y, double cx, double cy) {
    const auto e = bar_axis();
    const double px = x - cx;
    const double py = y - cy;
    return {px * e[0] + py * e[1], -px * e[1] + py * e[0]};
}

bool on_bar(const ApertureCase& c, double x, double y, double cx, double cy) {
    const auto [along, across] = bar_coords(x, y, cx, cy);
    return std::abs(along) <= c.scale / 2.0 && std::abs(across) <= c.width / 2.0;
}

// Level map whose cells hold fn at their top-left pixel.
FlowMap sample_level(const ApertureCase& c, FlowLevel level, const std::function<bool(double, double)>& moving) {
    const int f = level_factor(level);
    const auto [w, h] = level_size(c.canvas, level);
    FlowMap m;
    m.level = level;
    m.width = w;
    m.height = h;
    m.u.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0f);
    m.v.assign(m.u.size(), 0.0f);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (moving(static_cast<double>(x * f), static_cast<double>(y * f))) {
                const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
                m.u[i] = static_cast<float>(c.u[0]);
                m.v[i] = static_cast<float>(c.u[1]);
            }
        }
    }
    return m;
}

}  // namespace

FlowMap GroundTruthFlowSource::flow(const ApertureCase& c, FlowLevel level) const {
    // Frame 1 is shifted by the rounded displacement, as in gen_bar_sequence.
    const double dx = std::lround(c.u[0]);
    const double dy = std::lround(c.u[1]);
    return sample_level(c, level, [&](double x, double y) {
        return on_bar(c, x, y, c.center_x, c.center_y) || on_bar(c, x - dx, y - dy, c.center_x, c.center_y);
    });
}

EdgeOracleFlowSource::EdgeOracleFlowSource(double rho) : rho_(rho) {
    if (!(rho >= 0.0)) {
        throw InvalidArgument("oracle reach must be non-negative");
    }
}

FlowMap EdgeOracleFlowSource::flow(const ApertureCase& c, FlowLevel level) const {
    return sample_level(c, level, [&](double x, double y) {
        if (!on_bar(c, x, y, c.center_x, c.center_y)) {
            return false;
        }
        const double along = bar_coords(x, y, c.center_x, c.center_y)[0];
        return c.scale / 2.0 - std::abs(along) <= rho_;
    });
}

ApertureTable run_sweep(const std::vector<double>& scales, const std::vector<BarDirection>& directions,
                        const std::vector<FlowLevel>& levels, const FlowSource& source, const std::string& tag,
                        double magnitude, const Extent& canvas) {
    if (directions.empty() || levels.empty()) {
        throw InvalidArgument("sweep needs at least one direction and one level");
    }
    ApertureTable table;
    table.tag = tag;
    for (const double s : scales) {
        for (const auto level : levels) {
            ApertureRow row;
            row.scale = s;
            row.level = level;
            double sum = 0.0;
            for (const auto d : directions) {
                const auto c = make_aperture_case(s, d, magnitude, canvas);
                const double err = center_error(source.flow(c, level), c);
                (d == BarDirection::up_right ? row.up_right : row.down_left) = err;
                sum += err;
                ++table.measurements;
            }
            row.mean = sum / static_cast<double>(directions.size());
            table.rows.push_back(row);
        }
    }
    return table;
}

void write_aperture_csv(const ApertureTable& table, std::ostream& out) {
    auto opt = [](const std::optional<double>& v) { return v ? fmt::format("{:.9g}", *v) : std::string(); };
    out << "tag,scale,level,epe_up_right,epe_down_left,epe_mean\n";
    for (const auto& r : table.rows) {
        out << fmt::format("{},{:.9g},{},{},{},{:.9g}\n", table.tag, r.scale, to_string(r.level), opt(r.up_right),
                           opt(r.down_left), r.mean);
    }
}

namespace {

std::vector<std::array<double, 3>> color_wheel() {
    constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    std::vector<std::array<double, 3>> w;
    for (int i = 0; i < RY; ++i) w.push_back({255, 255.0 * i / RY, 0});
    for (int i = 0; i < YG; ++i) w.push_back({255 - 255.0 * i / YG, 255, 0});
    for (int i = 0; i < GC; ++i) w.push_back({0, 255, 255.0 * i / GC});
    for (int i = 0; i < CB; ++i) w.push_back({0, 255 - 255.0 * i / CB, 255});
    for (int i = 0; i < BM; ++i) w.push_back({255.0 * i / BM, 0, 255});
    for (int i = 0; i < MR; ++i) w.push_back({255, 0, 255 - 255.0 * i / MR});
    return w;
}

}  // namespace

Raster flow_to_color(const FlowMap& flow, double max_magnitude) {
    static const auto wheel = color_wheel();
    const int ncols = static_cast<int>(wheel.size());
    double top = max_magnitude;
    if (!(top > 0.0)) {
        top = 0.0;
        for (std::size_t i = 0; i < flow.u.size(); ++i) {
            top = std::max(top, std::hypot(double(flow.u[i]), double(flow.v[i])));
        }
    }
    if (!(top > 0.0)) {
        top = 1.0;
    }
    Raster r;
    r.width = flow.width;
    r.height = flow.height;
    r.rgb.resize(flow.u.size() * 3);
    for (std::size_t i = 0; i < flow.u.size(); ++i) {
        const double fx = flow.u[i] / top;
        const double fy = flow.v[i] / top;
        const double rad = std::hypot(fx, fy);
        const double a = std::atan2(-fy, -fx) / kPi;
        const double fk = (a + 1.0) / 2.0 * (ncols - 1);
        const int k0 = static_cast<int>(std::floor(fk));
        const int k1 = (k0 + 1) % ncols;
        const double f = fk - k0;
        for (int ch = 0; ch < 3; ++ch) {
            double col = (1.0 - f) * wheel[k0][ch] / 255.0 + f * wheel[k1][ch] / 255.0;
            col = rad <= 1.0 ? 1.0 - rad * (1.0 - col) : col * 0.75;
            r.rgb[i * 3 + ch] = static_cast<unsigned char>(std::lround(255.0 * std::clamp(col, 0.0, 1.0)));
        }
    }
    return r;
}

}  // namespace stprobe
