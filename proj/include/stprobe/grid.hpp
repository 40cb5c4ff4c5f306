#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stprobe/stimuli.hpp"

namespace stprobe {

enum class AxisParam { half_wavelength, orientation, temporal_frequency, scale, angular_velocity, phase };

std::string to_string(AxisParam p);
AxisParam parse_axis_param(std::string_view text);

/// One labelled axis. Values are stored in the external unit named by `unit`
/// (px, deg, rad, cycles/frame, unitless, rad/frame, deg/frame) and converted
/// to internal units by `to_internal`.
struct GridAxis {
    AxisParam param = AxisParam::half_wavelength;
    std::string unit;
    double start = 0.0;
    double stop = 0.0;
    std::optional<double> step;  // exactly one of step / points
    std::optional<int> points;

    std::size_t count() const;
    double value(std::size_t i) const;  // external unit
    std::vector<double> values() const;
    double to_internal(double external) const;

    /// Throws InvalidArgument on unknown unit, zero or wrong-sign step, bad count.
    void validate() const;
};

struct GridSpec {
    MotionKind kind = MotionKind::translation;
    std::vector<GridAxis> axes;  // row-major: the last axis varies fastest

    void validate() const;
    std::size_t size() const;
    std::vector<std::size_t> shape() const;

    /// Per-axis indices of stimulus `id`.
    std::vector<std::size_t> unravel(std::size_t id) const;
    std::size_t ravel(const std::vector<std::size_t>& idx) const;

    /// Stimulus `id` in internal units.
    Stimulus at(std::size_t id) const;

    /// Position of the axis carrying `p`, or -1.
    int axis_of(AxisParam p) const;

    /// Key-value text; the hash is taken over exactly this string.
    std::string canonical() const;
    std::uint64_t hash() const;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::string format_hash(std::uint64_t h);  // "0x" + 16 hex digits

GridSpec parse_grid_spec(std::string_view text);
GridSpec load_grid_spec(const std::string& path);

/// Ordered tuples of the full Cartesian product.
std::vector<Stimulus> build_grid(const GridSpec& spec);

/// Motion axis parameter that belongs to a kind.
AxisParam motion_axis_for(MotionKind kind);

// Presets mirroring the published parameter tables.
GridSpec translation_grid_preset();
GridSpec dilation_grid_preset();
GridSpec rotation_grid_preset();
GridSpec preset_for(MotionKind kind);

/// Profile sweep ranges: lambda/2 16..800 px (50 points), theta 0..350 deg
/// (36 points), f_t -0.5..0.5 cycles/frame (50 points).
struct ProfileSampling {
    GridAxis half_wavelength{AxisParam::half_wavelength, "px", 16.0, 800.0, std::nullopt, 50};
    GridAxis orientation{AxisParam::orientation, "deg", 0.0, 350.0, std::nullopt, 36};
    GridAxis temporal_frequency{AxisParam::temporal_frequency, "cycles/frame", -0.5, 0.5, std::nullopt, 50};
};

}  // namespace stprobe
