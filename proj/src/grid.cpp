#include "stprobe/grid.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "stprobe/error.hpp"
#include "stprobe/io_util.hpp"

namespace stprobe {

namespace {

constexpr double kDeg = kPi / 180.0;

struct ParamName {
    AxisParam param;
    const char* name;
};

constexpr ParamName kParamNames[] = {
    {AxisParam::half_wavelength, "half_wavelength"},       {AxisParam::orientation, "orientation"},
    {AxisParam::temporal_frequency, "temporal_frequency"}, {AxisParam::scale, "scale"},
    {AxisParam::angular_velocity, "angular_velocity"},     {AxisParam::phase, "phase"},
};

// Unit name -> multiplier to the internal unit.
std::optional<double> unit_factor(AxisParam p, std::string_view unit) {
    switch (p) {
        case AxisParam::half_wavelength:
            if (unit == "px") return 1.0;
            break;
        case AxisParam::orientation:
        case AxisParam::phase:
            if (unit == "deg") return kDeg;
            if (unit == "rad") return 1.0;
            break;
        case AxisParam::temporal_frequency:
            if (unit == "cycles/frame") return 1.0;
            break;
        case AxisParam::scale:
            if (unit == "unitless") return 1.0;
            break;
        case AxisParam::angular_velocity:
            if (unit == "rad/frame") return 1.0;
            if (unit == "deg/frame") return kDeg;
            break;
    }
    return std::nullopt;
}

}  // namespace

std::string to_string(AxisParam p) {
    for (const auto& n : kParamNames) {
        if (n.param == p) {
            return n.name;
        }
    }
    return "unknown";
}

AxisParam parse_axis_param(std::string_view text) {
    for (const auto& n : kParamNames) {
        if (text == n.name) {
            return n.param;
        }
    }
    throw InvalidArgument(fmt::format("unknown grid parameter '{}'", text));
}

void GridAxis::validate() const {
    if (!unit_factor(param, unit)) {
        throw InvalidArgument(fmt::format("axis {}: unit '{}' not accepted", to_string(param), unit));
    }
    if (!std::isfinite(start) || !std::isfinite(stop)) {
        throw InvalidArgument(fmt::format("axis {}: non-finite range", to_string(param)));
    }
    if (step.has_value() == points.has_value()) {
        throw InvalidArgument(fmt::format("axis {}: give exactly one of step or points", to_string(param)));
    }
    if (step) {
        const double s = *step;
        if (!std::isfinite(s) || s == 0.0) {
            throw InvalidArgument(fmt::format("axis {}: step must be finite and nonzero", to_string(param)));
        }
        if ((stop - start) * s < 0.0) {
            throw InvalidArgument(fmt::format("axis {}: step {} points away from stop", to_string(param), s));
        }
    } else if (*points < 1 || (*points == 1 && start != stop)) {
        throw InvalidArgument(fmt::format("axis {}: point count {} invalid for the range", to_string(param), *points));
    }
}

std::size_t GridAxis::count() const {
    if (points) {
        return static_cast<std::size_t>(*points);
    }
    // The small slack keeps an endpoint that is an exact multiple of the step.
    return static_cast<std::size_t>(std::floor((stop - start) / *step + 1e-9)) + 1;
}

double GridAxis::value(std::size_t i) const {
    if (points) {
        if (*points == 1) {
            return start;
        }
        if (i + 1 == static_cast<std::size_t>(*points)) {
            return stop;
        }
        return start + static_cast<double>(i) * (stop - start) / static_cast<double>(*points - 1);
    }
    return start + static_cast<double>(i) * *step;
}

std::vector<double> GridAxis::values() const {
    std::vector<double> out(count());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = value(i);
    }
    return out;
}

double GridAxis::to_internal(double external) const {
    return external * unit_factor(param, unit).value_or(1.0);
}

AxisParam motion_axis_for(MotionKind kind) {
    switch (kind) {
        case MotionKind::translation:
            return AxisParam::temporal_frequency;
        case MotionKind::dilation:
            return AxisParam::scale;
        case MotionKind::rotation:
            return AxisParam::angular_velocity;
    }
    return AxisParam::temporal_frequency;
}

int GridSpec::axis_of(AxisParam p) const {
    for (std::size_t i = 0; i < axes.size(); ++i) {
        if (axes[i].param == p) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

void GridSpec::validate() const {
    const AxisParam wanted[] = {AxisParam::half_wavelength, AxisParam::orientation, motion_axis_for(kind),
                                AxisParam::phase};
    if (axes.size() != 4) {
        throw InvalidArgument(fmt::format("{} grid needs 4 axes, got {}", to_string(kind), axes.size()));
    }
    for (AxisParam p : wanted) {
        int n = 0;
        for (const auto& a : axes) {
            n += a.param == p ? 1 : 0;
        }
        if (n != 1) {
            throw InvalidArgument(
                fmt::format("{} grid needs exactly one {} axis", to_string(kind), to_string(p)));
        }
    }
    for (const auto& a : axes) {
        a.validate();
        if (a.param == AxisParam::half_wavelength) {
            for (double v : a.values()) {
                if (!(v > 0.0)) {
                    throw InvalidArgument("half_wavelength values must be positive");
                }
            }
        }
        if (a.param == AxisParam::scale) {
            for (double v : a.values()) {
                if (v == 0.0) {
                    throw InvalidArgument("scale axis contains h = 0");
                }
            }
        }
    }
}

std::vector<std::size_t> GridSpec::shape() const {
    std::vector<std::size_t> s;
    s.reserve(axes.size());
    for (const auto& a : axes) {
        s.push_back(a.count());
    }
    return s;
}

std::size_t GridSpec::size() const {
    std::size_t n = 1;
    for (const auto& a : axes) {
        n *= a.count();
    }
    return n;
}

std::vector<std::size_t> GridSpec::unravel(std::size_t id) const {
    std::vector<std::size_t> idx(axes.size());
    for (std::size_t k = axes.size(); k-- > 0;) {
        const std::size_t n = axes[k].count();
        idx[k] = id % n;
        id /= n;
    }
    return idx;
}

std::size_t GridSpec::ravel(const std::vector<std::size_t>& idx) const {
    std::size_t id = 0;
    for (std::size_t k = 0; k < axes.size(); ++k) {
        id = id * axes[k].count() + idx[k];
    }
    return id;
}

Stimulus GridSpec::at(std::size_t id) const {
    Stimulus s;
    s.kind = kind;
    const auto idx = unravel(id);
    for (std::size_t k = 0; k < axes.size(); ++k) {
        const double v = axes[k].to_internal(axes[k].value(idx[k]));
        switch (axes[k].param) {
            case AxisParam::half_wavelength:
                s.F = 1.0 / (2.0 * v);
                break;
            case AxisParam::orientation:
                s.theta = v;
                break;
            case AxisParam::phase:
                s.phi = v;
                break;
            case AxisParam::temporal_frequency:
            case AxisParam::scale:
            case AxisParam::angular_velocity:
                s.motion = v;
                break;
        }
    }
    return s;
}

std::string GridSpec::canonical() const {
    std::string out = fmt::format("kind = {}\n", to_string(kind));
    for (const auto& a : axes) {
        if (a.step) {
            out += fmt::format("axis = {} {} {} {} step {}\n", to_string(a.param), a.unit, a.start, a.stop, *a.step);
        } else {
            out += fmt::format("axis = {} {} {} {} points {}\n", to_string(a.param), a.unit, a.start, a.stop,
                               *a.points);
        }
    }
    return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string format_hash(std::uint64_t h) { return fmt::format("0x{:016x}", h); }

std::uint64_t GridSpec::hash() const { return fnv1a64(canonical()); }

GridSpec parse_grid_spec(std::string_view text) {
    GridSpec spec;
    bool have_kind = false;
    std::size_t line_no = 0;
    for (auto raw : io::split(text, '\n')) {
        ++line_no;
        auto line = io::trim(raw);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = io::trim(line.substr(0, hash));
        }
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw InvalidArgument(fmt::format("grid spec line {}: expected key = value", line_no));
        }
        const auto key = io::trim(line.substr(0, eq));
        const auto value = io::trim(line.substr(eq + 1));
        if (key == "kind") {
            spec.kind = parse_motion_kind(std::string(value));
            have_kind = true;
        } else if (key == "axis") {
            std::istringstream ss{std::string(value)};
            std::string param, unit, start, stop, mode, amount, extra;
            ss >> param >> unit >> start >> stop >> mode >> amount;
            if (amount.empty() || (ss >> extra)) {
                throw InvalidArgument(
                    fmt::format("grid spec line {}: expected '<parameter> <unit> <start> <stop> step|points <n>'",
                                line_no));
            }
            GridAxis axis;
            axis.param = parse_axis_param(param);
            axis.unit = unit;
            if (!io::parse_number(start, axis.start) || !io::parse_number(stop, axis.stop)) {
                throw InvalidArgument(fmt::format("grid spec line {}: bad range", line_no));
            }
            if (mode == "step") {
                double s = 0.0;
                if (!io::parse_number(amount, s)) {
                    throw InvalidArgument(fmt::format("grid spec line {}: bad step", line_no));
                }
                axis.step = s;
            } else if (mode == "points") {
                int n = 0;
                if (!io::parse_number(amount, n)) {
                    throw InvalidArgument(fmt::format("grid spec line {}: bad point count", line_no));
                }
                axis.points = n;
            } else {
                throw InvalidArgument(fmt::format("grid spec line {}: expected 'step' or 'points'", line_no));
            }
            spec.axes.push_back(axis);
        } else {
            throw InvalidArgument(fmt::format("grid spec line {}: unknown key '{}'", line_no, key));
        }
    }
    if (!have_kind) {
        throw InvalidArgument("grid spec has no 'kind' entry");
    }
    spec.validate();
    return spec;
}

GridSpec load_grid_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open grid spec " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_grid_spec(ss.str());
}

std::vector<Stimulus> build_grid(const GridSpec& spec) {
    spec.validate();
    const std::size_t n = spec.size();
    std::vector<Stimulus> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(spec.at(i));
    }
    return out;
}

GridSpec translation_grid_preset() {
    GridSpec g;
    g.kind = MotionKind::translation;
    g.axes = {
        {AxisParam::half_wavelength, "px", 16, 800, 16.0, std::nullopt},
        {AxisParam::orientation, "deg", 0, 350, 10.0, std::nullopt},
        {AxisParam::temporal_frequency, "cycles/frame", 0.0, 0.5, 0.01, std::nullopt},
        {AxisParam::phase, "deg", -180, 170, 10.0, std::nullopt},
    };
    return g;
}

GridSpec dilation_grid_preset() {
    GridSpec g;
    g.kind = MotionKind::dilation;
    g.axes = {
        {AxisParam::half_wavelength, "px", 50, 400, 10.0, std::nullopt},
        {AxisParam::orientation, "deg", 0, 170, 10.0, std::nullopt},
        {AxisParam::scale, "unitless", 0.5, 2.0, 0.1, std::nullopt},
        {AxisParam::phase, "deg", -180, 170, 10.0, std::nullopt},
    };
    return g;
}

GridSpec rotation_grid_preset() {
    GridSpec g;
    g.kind = MotionKind::rotation;
    g.axes = {
        {AxisParam::half_wavelength, "px", 50, 400, 10.0, std::nullopt},
        {AxisParam::orientation, "deg", 0, 170, 10.0, std::nullopt},
        {AxisParam::angular_velocity, "rad/frame", -kPi / 2.0, kPi / 2.0, std::nullopt, 11},
        {AxisParam::phase, "deg", -180, 170, 10.0, std::nullopt},
    };
    return g;
}

GridSpec preset_for(MotionKind kind) {
    switch (kind) {
        case MotionKind::translation:
            return translation_grid_preset();
        case MotionKind::dilation:
            return dilation_grid_preset();
        case MotionKind::rotation:
            return rotation_grid_preset();
    }
    return translation_grid_preset();
}

}  // namespace stprobe
