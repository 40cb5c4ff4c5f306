#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stprobe/error.hpp"
#include "stprobe/raster.hpp"
#include "stprobe/stimuli.hpp"

namespace stprobe {

/// Flow prediction levels of the network and full resolution.
enum class FlowLevel { full, f2, f4, f6 };

/// Downsampling factor: 1, 4, 16, 64.
int level_factor(FlowLevel level);
std::string to_string(FlowLevel level);
FlowLevel parse_flow_level(const std::string& text);

inline constexpr std::array<FlowLevel, 3> kNetworkLevels{FlowLevel::f6, FlowLevel::f4, FlowLevel::f2};

/// Cells of a level map for a canvas: ceil(W / factor) x ceil(H / factor).
std::array<int, 2> level_size(const Extent& canvas, FlowLevel level);

/// Displacements in full-resolution pixels at every level.
struct FlowMap {
    int width = 0;
    int height = 0;
    FlowLevel level = FlowLevel::full;
    std::vector<float> u;  // row-major
    std::vector<float> v;

    std::array<double, 2> at(int x, int y) const {
        const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
        return {u[i], v[i]};
    }
};

/// Throws InvalidArgument on non-finite values or a size that does not fit
/// the level for `canvas`.
void validate_flow(const FlowMap& flow, const Extent& canvas);

/// Level map taken from a full-resolution field with stride `factor`; each
/// cell holds the field at its top-left pixel.
FlowMap subsample_flow(const FlowField& field, FlowLevel level);

// Middlebury .flo: "PIEH", i32 width, i32 height, then (u, v) float32 pairs.
void write_flo(const FlowMap& flow, std::ostream& out);
FlowMap read_flo(std::istream& in, FlowLevel level = FlowLevel::full);
void save_flo(const FlowMap& flow, const std::string& path);
FlowMap load_flo(const std::string& path, FlowLevel level = FlowLevel::full);

/// Euclidean norm of est - gt.
double epe(std::array<double, 2> est, std::array<double, 2> gt);

// --- cases ---------------------------------------------------------------------

enum class BarDirection { up_right, down_left };
std::string to_string(BarDirection d);
BarDirection parse_bar_direction(const std::string& text);

struct ApertureCase {
    double scale = 0.0;
    double width = 0.0;
    BarDirection direction = BarDirection::up_right;
    std::array<double, 2> u{};
    double center_x = 0.0;
    double center_y = 0.0;
    Extent canvas = kBarCanvas;
};

/// Bar at the canvas centre with the default width and |u| = magnitude.
ApertureCase make_aperture_case(double scale, BarDirection direction, double magnitude = 64.0,
                                const Extent& canvas = kBarCanvas);

/// EPE at the cell holding the bar centre, cell = floor(centre / factor).
/// Throws InvalidArgument when that cell lies outside the map.
double center_error(const FlowMap& flow, const ApertureCase& c);

// --- flow sources ----------------------------------------------------------------

class MissingFlowMap : public Error {
public:
    using Error::Error;
};

class FlowSource {
public:
    virtual ~FlowSource() = default;
    /// Throws MissingFlowMap when no map exists for the case and level.
    virtual FlowMap flow(const ApertureCase& c, FlowLevel level) const = 0;
};

/// "bar_<scale>_<direction>_<level>.flo"
std::string flow_file_name(double scale, BarDirection direction, FlowLevel level);

/// Reads flow maps written by a network adapter.
class FlowDirectorySource : public FlowSource {
public:
    explicit FlowDirectorySource(std::string dir) : dir_(std::move(dir)) {}
    FlowMap flow(const ApertureCase& c, FlowLevel level) const override;

private:
    std::string dir_;
};

/// The true motion on the bar (either frame), zero elsewhere.
class GroundTruthFlowSource : public FlowSource {
public:
    FlowMap flow(const ApertureCase& c, FlowLevel level) const override;
};

/// True motion on frame-0 bar pixels within `rho` (along the bar) of either
/// end, zero elsewhere: a filling-in process that reaches `rho` pixels.
class EdgeOracleFlowSource : public FlowSource {
public:
    explicit EdgeOracleFlowSource(double rho);
    FlowMap flow(const ApertureCase& c, FlowLevel level) const override;

private:
    double rho_;
};

// --- sweeps ----------------------------------------------------------------------

struct ApertureRow {
    double scale = 0.0;
    FlowLevel level = FlowLevel::f6;
    std::optional<double> up_right;
    std::optional<double> down_left;
    double mean = 0.0;  // over the directions present
};

struct ApertureTable {
    std::string tag;
    std::size_t measurements = 0;
    std::vector<ApertureRow> rows;  // scale-major, levels in the requested order
};

ApertureTable run_sweep(const std::vector<double>& scales, const std::vector<BarDirection>& directions,
                        const std::vector<FlowLevel>& levels, const FlowSource& source, const std::string& tag = "",
                        double magnitude = 64.0, const Extent& canvas = kBarCanvas);

void write_aperture_csv(const ApertureTable& table, std::ostream& out);

/// Flow colour coding of Baker et al. (Middlebury wheel); max_magnitude <= 0
/// normalises by the largest vector in the map.
Raster flow_to_color(const FlowMap& flow, double max_magnitude = 0.0);

}  // namespace stprobe
