#include "stprobe/gabor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "stprobe/error.hpp"
#include "stprobe/io_util.hpp"

namespace stprobe {

void validate(const GaborParams& g) {
    const double all[] = {g.F0, g.theta0, g.ft0, g.phi0, g.sigma_x, g.sigma_y, g.sigma_t, g.K, g.b};
    for (double v : all) {
        if (!std::isfinite(v)) {
            throw InvalidArgument("Gabor parameters must be finite");
        }
    }
    if (!(g.F0 > 0.0)) {
        throw InvalidArgument(fmt::format("F0 must be positive, got {}", g.F0));
    }
    if (!(g.sigma_x > 0.0 && g.sigma_y > 0.0 && g.sigma_t > 0.0)) {
        throw InvalidArgument("Gaussian widths must be positive");
    }
    if (!(g.K > 0.0)) {
        throw InvalidArgument(fmt::format("gain K must be positive, got {}", g.K));
    }
    if (std::abs(g.ft0) > 0.5) {
        throw InvalidArgument(fmt::format("ft0 {} exceeds Nyquist", g.ft0));
    }
}

Volume gaussian_envelope(const GaborParams& g, const Extent& extent, double time_origin) {
    require_centered(extent, "gaussian envelope");
    Volume v(extent);
    const int hw = v.half_width();
    const int hh = v.half_height();
    const double c = std::cos(g.theta0);
    const double s = std::sin(g.theta0);
    for (int t = 0; t < extent.frames; ++t) {
        const double tc = t - time_origin;
        const double et = tc * tc / (g.sigma_t * g.sigma_t);
        for (int iy = 0; iy < extent.height; ++iy) {
            const double y = iy - hh;
            for (int ix = 0; ix < extent.width; ++ix) {
                const double x = ix - hw;
                const double xr = x * c + y * s;
                const double yr = -x * s + y * c;
                v.at(ix, iy, t) =
                    std::exp(-(xr * xr / (g.sigma_x * g.sigma_x) + yr * yr / (g.sigma_y * g.sigma_y) + et));
            }
        }
    }
    return v;
}

Volume gabor_kernel(const GaborParams& g, const Extent& extent, double time_origin) {
    Volume env = gaussian_envelope(g, extent, time_origin);
    SynthesisOptions opt;
    opt.time_origin = time_origin;
    opt.allow_aliased = true;
    const Volume wave = gen_translating_wave({g.F0, g.theta0, g.ft0, g.phi0}, extent, opt);
    auto e = env.samples();
    const auto w = wave.samples();
    for (std::size_t i = 0; i < e.size(); ++i) {
        e[i] *= w[i];
    }
    return env;
}

double unit_response(const GaborParams& g, const Volume& stimulus, double time_origin) {
    const Volume kernel = gabor_kernel(g, stimulus.extent(), time_origin);
    return relu(g.K * (dot(stimulus, kernel) + g.b));
}

GaborResponseModel::GaborResponseModel(const GaborParams& g, const Extent& extent, double time_origin)
    : g_(g), extent_(extent), time_origin_(time_origin) {
    require_centered(extent, "Gabor response model");
    const int hw = (extent.width - 1) / 2;
    const int hh = (extent.height - 1) / 2;
    const double c = std::cos(g.theta0);
    const double s = std::sin(g.theta0);
    const double ax = 1.0 / (g.sigma_x * g.sigma_x);
    const double ay = 1.0 / (g.sigma_y * g.sigma_y);
    ws_.resize(static_cast<std::size_t>(extent.width) * extent.height);
    for (int iy = 0; iy < extent.height; ++iy) {
        const double y = iy - hh;
        for (int ix = 0; ix < extent.width; ++ix) {
            const double x = ix - hw;
            const double xr = x * c + y * s;
            const double yr = -x * s + y * c;
            ws_[static_cast<std::size_t>(iy) * extent.width + ix] = std::exp(-(xr * xr * ax + yr * yr * ay));
        }
    }
    wt_.resize(static_cast<std::size_t>(extent.frames));
    for (int t = 0; t < extent.frames; ++t) {
        const double tc = t - time_origin;
        wt_[static_cast<std::size_t>(t)] = std::exp(-tc * tc / (g.sigma_t * g.sigma_t));
    }
}

double GaborResponseModel::envelope_spectrum(double kx, double ky) const {
    const int w = extent_.width;
    const int hw = (w - 1) / 2;
    const int hh = (extent_.height - 1) / 2;
    thread_local std::vector<double> cx, sx;
    cx.resize(static_cast<std::size_t>(w));
    sx.resize(static_cast<std::size_t>(w));
    for (int ix = 0; ix < w; ++ix) {
        const double a = kTwoPi * kx * (ix - hw);
        cx[static_cast<std::size_t>(ix)] = std::cos(a);
        sx[static_cast<std::size_t>(ix)] = std::sin(a);
    }
    double total = 0.0;
    for (int iy = 0; iy < extent_.height; ++iy) {
        const double* row = ws_.data() + static_cast<std::size_t>(iy) * w;
        double re = 0.0;
        double im = 0.0;
        for (int ix = 0; ix < w; ++ix) {
            re += row[ix] * cx[static_cast<std::size_t>(ix)];
            im += row[ix] * sx[static_cast<std::size_t>(ix)];
        }
        const double b = kTwoPi * ky * (iy - hh);
        total += re * std::cos(b) - im * std::sin(b);
    }
    return total;
}

double GaborResponseModel::preactivation(double F, double theta, double ft, double phi) const {
    const double k0x = g_.F0 * std::cos(g_.theta0);
    const double k0y = g_.F0 * std::sin(g_.theta0);
    const double kx = F * std::cos(theta);
    const double ky = F * std::sin(theta);
    const double s_plus = envelope_spectrum(k0x + kx, k0y + ky);
    const double s_minus = envelope_spectrum(k0x - kx, k0y - ky);
    double d = 0.0;
    for (int t = 0; t < extent_.frames; ++t) {
        const double tc = t - time_origin_;
        const double a = g_.phi0 - kTwoPi * g_.ft0 * tc;
        const double b = phi - kTwoPi * ft * tc;
        d += wt_[static_cast<std::size_t>(t)] * (s_plus * std::cos(a + b) + s_minus * std::cos(a - b));
    }
    return 0.5 * d;
}

LobeWidth half_level_lobe(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        throw InvalidArgument("half_level_lobe needs matching curves of at least two samples");
    }
    const auto peak_it = std::max_element(ys.begin(), ys.end());
    const std::size_t p = static_cast<std::size_t>(peak_it - ys.begin());
    const double level = 0.5 * *peak_it;
    LobeWidth out;
    const auto cross = [&](std::size_t i, std::size_t j) {
        // Linear interpolation between samples i (above) and j (below).
        const double f = (ys[i] - level) / (ys[i] - ys[j]);
        return xs[i] + f * (xs[j] - xs[i]);
    };
    std::size_t i = p;
    while (i > 0 && ys[i - 1] >= level) {
        --i;
    }
    if (i == 0) {
        out.lo = xs.front();
        out.truncated = true;
    } else {
        out.lo = cross(i, i - 1);
    }
    std::size_t j = p;
    while (j + 1 < ys.size() && ys[j + 1] >= level) {
        ++j;
    }
    if (j + 1 == ys.size()) {
        out.hi = xs.back();
        out.truncated = true;
    } else {
        out.hi = cross(j, j + 1);
    }
    int crossings = 0;
    for (std::size_t k = 0; k + 1 < ys.size(); ++k) {
        if ((ys[k] >= level) != (ys[k + 1] >= level)) {
            ++crossings;
        }
    }
    out.multi_lobe = crossings > 2;
    return out;
}

Bandwidths half_magnitude_bandwidths(const GaborParams& fit, double peak_response, const Extent& extent,
                                     const BandwidthOptions& opt) {
    if (!(peak_response > 0.0)) {
        throw InvalidArgument(fmt::format("peak response must be positive, got {}", peak_response));
    }
    if (opt.samples < 3) {
        throw InvalidArgument("bandwidth sampling needs at least 3 points");
    }
    const GaborResponseModel model(fit, extent, opt.time_origin);
    const std::size_t n = static_cast<std::size_t>(opt.samples);
    const auto lin = [n](double a, double b, std::size_t i) {
        return i + 1 == n ? b : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    std::vector<double> xs(n), ys(n);
    Bandwidths bw;

    double curve_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = lin(opt.f_min, opt.f_max, i);
        ys[i] = model.response(xs[i], fit.theta0, fit.ft0, fit.phi0);
        curve_max = std::max(curve_max, ys[i]);
    }
    if (!(curve_max > 0.0)) {
        throw InvalidArgument("fitted model has no positive response along the spatial-frequency axis");
    }
    auto lobe = half_level_lobe(xs, ys);
    bw.spatial_range = {lobe.lo, lobe.hi};
    bw.spatial_octaves = std::log2(lobe.hi / lobe.lo);
    bw.truncated[0] = lobe.truncated;
    bw.multi_lobe[0] = lobe.multi_lobe;

    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = lin(fit.theta0 - kPi, fit.theta0 + kPi, i);
        ys[i] = model.response(fit.F0, xs[i], fit.ft0, fit.phi0);
    }
    lobe = half_level_lobe(xs, ys);
    bw.orientation_range = {lobe.lo, lobe.hi};
    bw.orientation_deg = (lobe.hi - lobe.lo) * 180.0 / kPi;
    bw.truncated[1] = lobe.truncated;
    bw.multi_lobe[1] = lobe.multi_lobe;

    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = lin(-0.5, 0.5, i);
        ys[i] = model.response(fit.F0, fit.theta0, xs[i], fit.phi0);
    }
    lobe = half_level_lobe(xs, ys);
    bw.temporal_range = {lobe.lo, lobe.hi};
    bw.temporal_cpf = lobe.hi - lobe.lo;
    bw.truncated[2] = lobe.truncated;
    bw.multi_lobe[2] = lobe.multi_lobe;
    return bw;
}

std::string gabor_csv_header() {
    return "spatial_frequency_cpp,orientation_deg,temporal_frequency_cpf,phase_deg,sigma_x_px,sigma_y_px,"
           "sigma_t_frames,gain,bias";
}

std::string to_csv_row(const GaborParams& g) {
    return fmt::format("{},{},{},{},{},{},{},{},{}", g.F0, g.theta0 * 180.0 / kPi, g.ft0, g.phi0 * 180.0 / kPi,
                       g.sigma_x, g.sigma_y, g.sigma_t, g.K, g.b);
}

GaborParams parse_gabor_row(const std::string& line) {
    const auto fields = io::split(io::trim(line), ',');
    if (fields.size() != 9) {
        throw InvalidArgument(fmt::format("Gabor row needs 9 fields, got {}", fields.size()));
    }
    double v[9];
    for (std::size_t i = 0; i < 9; ++i) {
        if (!io::parse_number(fields[i], v[i])) {
            throw InvalidArgument(fmt::format("Gabor row field {} is not a number", i + 1));
        }
    }
    GaborParams g{v[0], v[1] * kPi / 180.0, v[2], v[3] * kPi / 180.0, v[4], v[5], v[6], v[7], v[8]};
    validate(g);
    return g;
}

}  // namespace stprobe
