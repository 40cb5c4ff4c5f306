#include "stprobe/stimuli.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "stprobe/error.hpp"

namespace stprobe {

double wrap_two_pi(double angle) {
    double a = std::fmod(angle, kTwoPi);
    if (a < 0.0) {
        a += kTwoPi;
    }
    return a >= kTwoPi ? 0.0 : a;
}

double wrap_pi(double angle) {
    double a = wrap_two_pi(angle + kPi) - kPi;
    return a;
}

namespace {

void check_frequency(double F0, const char* what) {
    if (!(F0 > 0.0) || !std::isfinite(F0)) {
        throw InvalidArgument(fmt::format("{}: spatial frequency must be positive, got {}", what, F0));
    }
}

// Calls fn(ix, iy, x, y) over a centred frame.
template <typename Fn>
void for_each_pixel(const Volume& v, Fn&& fn) {
    const int hw = v.half_width();
    const int hh = v.half_height();
    for (int iy = 0; iy < v.height(); ++iy) {
        for (int ix = 0; ix < v.width(); ++ix) {
            fn(ix, iy, static_cast<double>(ix - hw), static_cast<double>(iy - hh));
        }
    }
}

}  // namespace

Volume gen_translating_wave(const TranslatingWaveParams& p, const Extent& extent, const SynthesisOptions& opt) {
    require_centered(extent, "translating wave");
    check_frequency(p.F0, "translating wave");
    if (!opt.allow_aliased && std::abs(p.ft0) > 0.5) {
        throw InvalidArgument(fmt::format("temporal frequency {} exceeds Nyquist (0.5 cycles/frame)", p.ft0));
    }
    Volume v(extent);
    const double c = std::cos(p.theta0);
    const double s = std::sin(p.theta0);
    for (int t = 0; t < extent.frames; ++t) {
        const double tc = t - opt.time_origin;
        for_each_pixel(v, [&](int ix, int iy, double x, double y) {
            const double xr = x * c + y * s;
            v.at(ix, iy, t) = std::cos(kTwoPi * (p.F0 * xr - p.ft0 * tc) + p.phi0);
        });
    }
    return v;
}

Volume gen_dilating_wave(const DilatingWaveParams& p, const Extent& extent, const SynthesisOptions& opt) {
    require_centered(extent, "dilating wave");
    check_frequency(p.F0, "dilating wave");
    if (p.h == 0.0 || !std::isfinite(p.h)) {
        throw InvalidArgument("dilating wave: scale factor h must be finite and nonzero");
    }
    const double alpha = p.alpha();
    Volume v(extent);
    const double c = std::cos(p.theta0);
    const double s = std::sin(p.theta0);
    for (int t = 0; t < extent.frames; ++t) {
        const double tc = t - opt.time_origin;
        for_each_pixel(v, [&](int ix, int iy, double x, double y) {
            const double xr = x * c + y * s;
            v.at(ix, iy, t) = std::cos(kTwoPi * p.F0 * (xr - alpha * xr * tc) + p.phi0);
        });
    }
    return v;
}

Volume gen_rotating_wave(const RotatingWaveParams& p, const Extent& extent, const SynthesisOptions& opt) {
    require_centered(extent, "rotating wave");
    check_frequency(p.F0, "rotating wave");
    Volume v(extent);
    for (int t = 0; t < extent.frames; ++t) {
        const double angle = p.theta0 + p.omega * (t - opt.time_origin);
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        for_each_pixel(v, [&](int ix, int iy, double x, double y) {
            v.at(ix, iy, t) = std::cos(kTwoPi * p.F0 * (x * c + y * s) + p.phi0);
        });
    }
    return v;
}

std::vector<std::string> occlusion_warnings(const OcclusionParams& p) {
    std::vector<std::string> out;
    const auto& a = p.wave_a;
    const auto& b = p.wave_b;
    if (a.F0 == b.F0 && wrap_two_pi(a.theta0) == wrap_two_pi(b.theta0) && a.ft0 == b.ft0) {
        out.emplace_back("occluder and occluded waves share (F0, theta0, ft0); the stimulus is a plain windowed wave");
    }
    return out;
}

Volume gen_occlusion_stimulus(const OcclusionParams& p, const Extent& extent, const SynthesisOptions& opt) {
    require_centered(extent, "occlusion stimulus");
    const double sigma = p.envelope_sigma > 0.0 ? p.envelope_sigma : 1.0 / p.wave_a.F0;
    const Volume wa = gen_translating_wave(p.wave_a, extent, opt);
    const Volume wb = gen_translating_wave(p.wave_b, extent, opt);
    // The boundary travels with the occluder's x-velocity.
    const double vx = p.wave_a.ft0 / p.wave_a.F0 * std::cos(p.wave_a.theta0);
    Volume v(extent);
    for (int t = 0; t < extent.frames; ++t) {
        const double bx = p.boundary_x + vx * (t - opt.time_origin);
        for_each_pixel(v, [&](int ix, int iy, double x, double y) {
            const double g = std::exp(-(x * x + y * y) / (sigma * sigma));
            const double hstep = heaviside(x - bx);
            v.at(ix, iy, t) = g * (hstep * wa.at(ix, iy, t) + (1.0 - hstep) * wb.at(ix, iy, t));
        });
    }
    return v;
}

int default_bar_width(double scale) {
    return std::max(3, static_cast<int>(std::lround(scale / 6.0)));
}

std::array<double, 2> bar_axis() {
    const double r = 1.0 / std::sqrt(2.0);
    return {r, -r};
}

std::array<double, 2> bar_motion(double magnitude, bool up_right) {
    const auto e = bar_axis();
    const double sgn = up_right ? 1.0 : -1.0;
    return {sgn * magnitude * e[0], sgn * magnitude * e[1]};
}

BarSequence gen_bar_sequence(double scale, double width, std::array<double, 2> u, const Extent& canvas) {
    if (!(scale > 0.0) || !(width > 0.0)) {
        throw InvalidArgument("bar scale and width must be positive");
    }
    if (canvas.frames != 2) {
        throw InvalidArgument("bar sequences have exactly two frames");
    }
    if (std::hypot(u[0], u[1]) >= std::min(canvas.width, canvas.height) / 2.0) {
        throw InvalidArgument("bar motion must be smaller than half the canvas");
    }
    BarSequence seq;
    seq.frames = Volume(canvas);
    seq.center_x = canvas.width / 2;
    seq.center_y = canvas.height / 2;
    const auto e = bar_axis();
    const std::array<double, 2> n{-e[1], e[0]};
    const int dx = static_cast<int>(std::lround(u[0]));
    const int dy = static_cast<int>(std::lround(u[1]));

    std::vector<unsigned char> mask(static_cast<std::size_t>(canvas.width) * canvas.height, 0);
    for (int y = 0; y < canvas.height; ++y) {
        for (int x = 0; x < canvas.width; ++x) {
            const double px = x - seq.center_x;
            const double py = y - seq.center_y;
            const double along = px * e[0] + py * e[1];
            const double across = px * n[0] + py * n[1];
            if (std::abs(along) <= scale / 2.0 && std::abs(across) <= width / 2.0) {
                mask[static_cast<std::size_t>(y) * canvas.width + x] = 1;
            }
        }
    }

    seq.gt_flow.width = canvas.width;
    seq.gt_flow.height = canvas.height;
    seq.gt_flow.u.assign(mask.size(), 0.0f);
    seq.gt_flow.v.assign(mask.size(), 0.0f);
    for (int y = 0; y < canvas.height; ++y) {
        for (int x = 0; x < canvas.width; ++x) {
            if (!mask[static_cast<std::size_t>(y) * canvas.width + x]) {
                continue;
            }
            const int x2 = x + dx;
            const int y2 = y + dy;
            if (x == 0 || y == 0 || x == canvas.width - 1 || y == canvas.height - 1 || x2 <= 0 || y2 <= 0 ||
                x2 >= canvas.width - 1 || y2 >= canvas.height - 1) {
                throw InvalidArgument(fmt::format("bar of scale {} with motion ({}, {}) leaves the {} canvas", scale,
                                                  u[0], u[1], to_string(canvas)));
            }
            seq.frames.at(x, y, 0) = 1.0;
            seq.frames.at(x2, y2, 1) = 1.0;
        }
    }
    for (int y = 0; y < canvas.height; ++y) {
        for (int x = 0; x < canvas.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * canvas.width + x;
            if (seq.frames.at(x, y, 0) > 0.0 || seq.frames.at(x, y, 1) > 0.0) {
                seq.gt_flow.u[i] = static_cast<float>(u[0]);
                seq.gt_flow.v[i] = static_cast<float>(u[1]);
            }
        }
    }
    return seq;
}

std::string to_string(MotionKind kind) {
    switch (kind) {
        case MotionKind::translation:
            return "translation";
        case MotionKind::dilation:
            return "dilation";
        case MotionKind::rotation:
            return "rotation";
    }
    return "unknown";
}

MotionKind parse_motion_kind(const std::string& text) {
    if (text == "translation") {
        return MotionKind::translation;
    }
    if (text == "dilation") {
        return MotionKind::dilation;
    }
    if (text == "rotation") {
        return MotionKind::rotation;
    }
    throw InvalidArgument("unknown motion kind '" + text + "' (expected translation, dilation or rotation)");
}

Volume render(const Stimulus& s, const Extent& extent, const SynthesisOptions& opt) {
    switch (s.kind) {
        case MotionKind::translation:
            return gen_translating_wave({s.F, s.theta, s.motion, s.phi}, extent, opt);
        case MotionKind::dilation:
            return gen_dilating_wave({s.F, s.theta, s.motion, s.phi}, extent, opt);
        case MotionKind::rotation:
            return gen_rotating_wave({s.F, s.theta, s.motion, s.phi}, extent, opt);
    }
    throw InvalidArgument("unknown motion kind");
}

}  // namespace stprobe
