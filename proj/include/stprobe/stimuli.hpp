#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "stprobe/volume.hpp"

namespace stprobe {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

struct Rotated {
    double xr;
    double yr;
};

/// Clockwise rotation of pixel coordinates by theta (radians).
inline Rotated rotate_coords(double x, double y, double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return {x * c + y * s, -x * s + y * c};
}

/// Maps an angle onto [0, 2*pi).
double wrap_two_pi(double angle);
/// Maps an angle onto [-pi, pi).
double wrap_pi(double angle);

struct TranslatingWaveParams {
    double F0 = 1.0 / 32.0;  // cycles/pixel
    double theta0 = 0.0;     // radians
    double ft0 = 0.0;        // cycles/frame
    double phi0 = 0.0;       // radians
};

struct DilatingWaveParams {
    double F0 = 1.0 / 32.0;
    double theta0 = 0.0;
    double h = 1.0;  // affine scale factor
    double phi0 = 0.0;

    double alpha() const { return 1.0 - 1.0 / h; }
};

struct RotatingWaveParams {
    double F0 = 1.0 / 32.0;
    double theta0 = 0.0;
    double omega = 0.0;  // radians/frame
    double phi0 = 0.0;
};

struct OcclusionParams {
    TranslatingWaveParams wave_a;  // occluder
    TranslatingWaveParams wave_b;  // occluded
    double boundary_x = 0.0;       // boundary position at t = time_origin
    double envelope_sigma = 0.0;   // <= 0 selects 1/F0 of wave_a
};

struct SynthesisOptions {
    /// Frame index that plays the role of t = 0 in the wave equations.
    double time_origin = 0.0;
    /// Permit |f_t| > 0.5 cycles/frame.
    bool allow_aliased = false;
};

Volume gen_translating_wave(const TranslatingWaveParams& p, const Extent& extent, const SynthesisOptions& opt = {});
Volume gen_dilating_wave(const DilatingWaveParams& p, const Extent& extent, const SynthesisOptions& opt = {});
Volume gen_rotating_wave(const RotatingWaveParams& p, const Extent& extent, const SynthesisOptions& opt = {});
Volume gen_occlusion_stimulus(const OcclusionParams& p, const Extent& extent, const SynthesisOptions& opt = {});

/// Non-fatal diagnostics for an occlusion configuration (e.g. identical waves).
std::vector<std::string> occlusion_warnings(const OcclusionParams& p);

/// Heaviside step with H(0) = 1/2.
inline double heaviside(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? 0.0 : 0.5); }

// --- bar stimuli -----------------------------------------------------------

/// Canvas matching the flow network input resolution.
inline constexpr Extent kBarCanvas{512, 384, 2};

struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<float> u;  // row-major
    std::vector<float> v;
};

struct BarSequence {
    Volume frames;  // T = 2, foreground 1, background 0
    FlowField gt_flow;
    double center_x = 0.0;  // bar centre in frame 1, pixel coordinates
    double center_y = 0.0;
};

/// Bar width used when none is given: scale/6 rounded, at least 3 px.
int default_bar_width(double scale);

/// Direction vector of the bar's long axis (up-right in image coordinates).
std::array<double, 2> bar_axis();

/// Motion of magnitude `magnitude` along the bar axis; up_right selects the sign.
std::array<double, 2> bar_motion(double magnitude, bool up_right);

/// Diagonal bar of length `scale` centred on the canvas, displaced by u
/// between the two frames. Throws InvalidArgument if the bar leaves the canvas.
BarSequence gen_bar_sequence(double scale, double width, std::array<double, 2> u, const Extent& canvas = kBarCanvas);

// --- aliasing admissibility --------------------------------------------------

/// Maximum per-frame displacement at x_max stays below half a wavelength.
inline bool dilation_alias_check(double h, double lambda0, double x_max) {
    return (h - 1.0) * x_max <= lambda0 / 2.0;
}

inline bool rotation_alias_check(double omega, double m_max, double lambda0) {
    return omega * m_max <= lambda0 / 2.0;
}

// --- generic parametrised stimulus ----------------------------------------

enum class MotionKind { translation, dilation, rotation };

std::string to_string(MotionKind kind);
MotionKind parse_motion_kind(const std::string& text);

/// One grid tuple in internal units. `motion` is f_t (cycles/frame),
/// h (unitless) or omega (radians/frame) depending on `kind`.
struct Stimulus {
    MotionKind kind = MotionKind::translation;
    double F = 1.0 / 32.0;
    double theta = 0.0;
    double motion = 0.0;
    double phi = 0.0;

    friend bool operator==(const Stimulus&, const Stimulus&) = default;
};

Volume render(const Stimulus& s, const Extent& extent, const SynthesisOptions& opt = {});

}  // namespace stprobe
