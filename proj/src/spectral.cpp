#include "stprobe/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <tuple>

#include <fftw3.h>
#include <fmt/format.h>

#include "stprobe/error.hpp"
#include "stprobe/gabor.hpp"
#include "stprobe/stimuli.hpp"

namespace stprobe {

namespace {

// FFTW planning is not thread-safe; execution on distinct arrays is.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

int wrap_index(int k, int n) {
    const int r = k % n;
    return r < 0 ? r + n : r;
}

// Centred representative of k modulo n: [-n/2, (n-1)/2] for odd n, [-n/2, n/2 - 1] for even n.
int centred_index(int k, int n) {
    int r = wrap_index(k, n);
    if (r > (n - 1) / 2) {
        r -= n;
    }
    return r;
}

void transform(Complex* data, const Extent& e, int sign) {
    fftw_plan plan;
    auto* buf = reinterpret_cast<fftw_complex*>(data);
    {
        std::lock_guard lock(fftw_planner_mutex());
        plan = fftw_plan_dft_3d(e.frames, e.height, e.width, buf, buf, sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
}

bool self_conjugate(const LatticeFrequency& k, const Extent& e) {
    return wrap_index(2 * k.kx, e.width) == 0 && wrap_index(2 * k.ky, e.height) == 0 &&
           wrap_index(2 * k.kt, e.frames) == 0;
}

int nearest_integer(double value, const char* axis) {
    const double r = std::round(value);
    if (std::abs(value - r) > 1e-6) {
        throw InvalidArgument(
            fmt::format("wave frequency is not an integer multiple of the {} fundamental ({} periods)", axis, value));
    }
    return static_cast<int>(r);
}

}  // namespace

Spectrum::Spectrum(Extent extent) : extent_(extent), data_(extent.size()) {}

std::size_t Spectrum::index(int kx, int ky, int kt) const {
    const auto w = static_cast<std::size_t>(extent_.width);
    const auto h = static_cast<std::size_t>(extent_.height);
    return (static_cast<std::size_t>(wrap_index(kt, extent_.frames)) * h +
            static_cast<std::size_t>(wrap_index(ky, extent_.height))) *
               w +
           static_cast<std::size_t>(wrap_index(kx, extent_.width));
}

Spectrum dft3(const Volume& v) {
    Spectrum s(v.extent());
    auto out = s.coefficients();
    const auto in = v.samples();
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = Complex(in[i], 0.0);
    }
    if (!out.empty()) {
        transform(out.data(), v.extent(), FFTW_FORWARD);
    }
    return s;
}

Volume idft3(const Spectrum& s) {
    std::vector<Complex> buf(s.coefficients().begin(), s.coefficients().end());
    if (!buf.empty()) {
        transform(buf.data(), s.extent(), FFTW_BACKWARD);
    }
    Volume v(s.extent());
    const double scale = buf.empty() ? 0.0 : 1.0 / static_cast<double>(buf.size());
    auto out = v.samples();
    for (std::size_t i = 0; i < buf.size(); ++i) {
        out[i] = buf[i].real() * scale;
    }
    return v;
}

double phase_difference(Complex p, Complex q) {
    const double np = std::abs(p);
    const double nq = std::abs(q);
    if (!(np > 0.0) || !(nq > 0.0)) {
        throw InvalidArgument("phase difference is undefined for a zero-magnitude coefficient");
    }
    const double c = (p.real() * q.real() + p.imag() * q.imag()) / (np * nq);
    return std::acos(std::clamp(c, -1.0, 1.0));
}

LatticeFrequency lattice_frequency(const Stimulus& wave, const Extent& e) {
    if (wave.kind != MotionKind::translation) {
        throw InvalidArgument("spectral maps take translating waves");
    }
    const double fx = wave.F * std::cos(wave.theta);
    const double fy = wave.F * std::sin(wave.theta);
    return {centred_index(nearest_integer(fx * e.width, "x"), e.width),
            centred_index(nearest_integer(fy * e.height, "y"), e.height),
            centred_index(nearest_integer(-wave.motion * e.frames, "t"), e.frames)};
}

Stimulus lattice_wave(const LatticeFrequency& k, const Extent& e, double phi) {
    const double fx = static_cast<double>(k.kx) / e.width;
    const double fy = static_cast<double>(k.ky) / e.height;
    if (fx == 0.0 && fy == 0.0) {
        throw InvalidArgument("lattice wave needs a nonzero spatial frequency");
    }
    double ft = -static_cast<double>(centred_index(k.kt, e.frames)) / e.frames;
    if (ft < -0.5) {
        ft += 1.0;
    }
    return {MotionKind::translation, std::hypot(fx, fy), wrap_two_pi(std::atan2(fy, fx)), ft, phi};
}

Complex wave_coefficient(const Stimulus& wave, const Extent& e, double time_origin) {
    const auto k = lattice_frequency(wave, e);
    const double fx = wave.F * std::cos(wave.theta);
    const double fy = wave.F * std::sin(wave.theta);
    const double hw = (e.width - 1) / 2;
    const double hh = (e.height - 1) / 2;
    // Phase of the wave at array index n = 0.
    const double c = wave.phi - kTwoPi * (fx * hw + fy * hh) + kTwoPi * wave.motion * time_origin;
    const double n = static_cast<double>(e.size());
    if (self_conjugate(k, e)) {
        return {n * std::cos(c), 0.0};
    }
    return std::polar(0.5 * n, c);
}

LatticeRange full_lattice(const Extent& e) {
    auto span = [](int n) { return std::array<int, 2>{-(n / 2), (n - 1) / 2}; };
    return {span(e.width), span(e.height), span(e.frames)};
}

std::vector<Stimulus> lattice_waves(const Extent& e, const LatticeRange& r, double phi) {
    std::vector<Stimulus> out;
    for (int kx = r.kx[0]; kx <= r.kx[1]; ++kx) {
        for (int ky = r.ky[0]; ky <= r.ky[1]; ++ky) {
            if (kx == 0 && ky == 0) {
                continue;
            }
            for (int kt = r.kt[0]; kt <= r.kt[1]; ++kt) {
                out.push_back(lattice_wave({kx, ky, kt}, e, phi));
            }
        }
    }
    return out;
}

double SpectralMap::out_of_phase_fraction() const {
    std::size_t powered = 0;
    std::size_t out = 0;
    for (const auto& en : entries) {
        if (!en.masked) {
            ++powered;
            out += en.out_of_phase ? 1 : 0;
        }
    }
    return powered == 0 ? 0.0 : static_cast<double>(out) / static_cast<double>(powered);
}

namespace {

SpectralMap analyze(const Volume& filter, std::span<const Stimulus> waves, const SpectralOptions& opt) {
    require_centered(filter.extent(), "spectral map");
    if (!(opt.mask_fraction >= 0.0 && opt.mask_fraction < 1.0)) {
        throw InvalidArgument("mask fraction must lie in [0, 1)");
    }
    const Extent& e = filter.extent();
    const Spectrum spec = dft3(filter);
    const double n = static_cast<double>(e.size());

    SpectralMap map;
    map.extent = e;
    map.options = opt;
    map.entries.reserve(waves.size());
    for (const auto& w : waves) {
        SpectralEntry en;
        en.wave = w;
        en.k = lattice_frequency(w, e);
        en.p = wave_coefficient(w, e, opt.time_origin);
        en.q = spec.at(en.k.kx, en.k.ky, en.k.kt);
        en.power = std::abs(en.q);
        const double re = en.p.real() * en.q.real() + en.p.imag() * en.q.imag();
        en.projection = (self_conjugate(en.k, e) ? 1.0 : 2.0) * re / n;
        en.response = relu(en.projection);
        map.max_power = std::max(map.max_power, en.power);
        map.entries.push_back(en);
    }
    const double floor = opt.mask_fraction * map.max_power;
    for (auto& en : map.entries) {
        en.masked = !(en.power > 0.0) || !(std::abs(en.p) > 0.0) || en.power < floor;
        if (en.masked) {
            en.psi = std::numeric_limits<double>::quiet_NaN();
        } else {
            en.psi = phase_difference(en.p, en.q);
            en.out_of_phase = en.psi >= kPi / 2.0;
        }
    }
    return map;
}

std::vector<Stimulus> grid_waves(const GridSpec& spec) {
    if (spec.kind != MotionKind::translation) {
        throw InvalidArgument("spectral wave grids must be translation grids");
    }
    return build_grid(spec);
}

}  // namespace

SpectralMap phase_map(const Volume& filter, std::span<const Stimulus> waves, const SpectralOptions& opt) {
    return analyze(filter, waves, opt);
}

SpectralMap phase_map(const Volume& filter, const GridSpec& wave_grid, const SpectralOptions& opt) {
    const auto waves = grid_waves(wave_grid);
    return analyze(filter, waves, opt);
}

SpectralMap freq_response_map(const Volume& filter, std::span<const Stimulus> waves, const SpectralOptions& opt) {
    return analyze(filter, waves, opt);
}

SpectralMap freq_response_map(const Volume& filter, const GridSpec& wave_grid, const SpectralOptions& opt) {
    const auto waves = grid_waves(wave_grid);
    return analyze(filter, waves, opt);
}

std::vector<Lobe> superthreshold_lobes(const SpectralMap& map, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw InvalidArgument("lobe threshold fraction must lie in (0, 1]");
    }
    double top = 0.0;
    for (const auto& en : map.entries) {
        top = std::max(top, en.response);
    }
    std::vector<Lobe> lobes;
    if (!(top > 0.0)) {
        return lobes;
    }
    const double level = fraction * top;
    using Key = std::tuple<int, int, int>;
    std::map<Key, std::size_t> above;
    for (std::size_t i = 0; i < map.entries.size(); ++i) {
        const auto& en = map.entries[i];
        if (en.response > 0.0 && en.response >= level) {
            above.emplace(Key{en.k.kx, en.k.ky, en.k.kt}, i);
        }
    }
    std::vector<unsigned char> seen(map.entries.size(), 0);
    for (const auto& [key, start] : above) {
        if (seen[start]) {
            continue;
        }
        Lobe lobe;
        std::vector<std::size_t> stack{start};
        seen[start] = 1;
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            lobe.members.push_back(i);
            const auto& k = map.entries[i].k;
            for (int dx = -1; dx <= 1; ++dx) {
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dt = -1; dt <= 1; ++dt) {
                        const auto it = above.find(Key{k.kx + dx, k.ky + dy, k.kt + dt});
                        if (it != above.end() && !seen[it->second]) {
                            seen[it->second] = 1;
                            stack.push_back(it->second);
                        }
                    }
                }
            }
        }
        std::sort(lobe.members.begin(), lobe.members.end());
        lobe.peak = lobe.members.front();
        for (const auto i : lobe.members) {
            if (map.entries[i].response > map.entries[lobe.peak].response) {
                lobe.peak = i;
            }
        }
        lobe.peak_response = map.entries[lobe.peak].response;
        lobes.push_back(std::move(lobe));
    }
    std::stable_sort(lobes.begin(), lobes.end(),
                     [](const Lobe& a, const Lobe& b) { return a.peak_response > b.peak_response; });
    return lobes;
}

std::string to_string(SimulatedFilter kind) {
    switch (kind) {
        case SimulatedFilter::translation:
            return "translation";
        case SimulatedFilter::dilation:
            return "dilation";
        case SimulatedFilter::rotation:
            return "rotation";
        case SimulatedFilter::occlusion:
            return "occlusion";
    }
    return "unknown";
}

SimulatedFilter parse_simulated_filter(const std::string& text) {
    for (auto k : {SimulatedFilter::translation, SimulatedFilter::dilation, SimulatedFilter::rotation,
                   SimulatedFilter::occlusion}) {
        if (to_string(k) == text) {
            return k;
        }
    }
    throw InvalidArgument(fmt::format("unknown simulated filter '{}'", text));
}

Volume simulate_filter(SimulatedFilter kind, const SimulationSettings& s) {
    const SynthesisOptions opt{.time_origin = s.time_origin};
    Volume v;
    switch (kind) {
        case SimulatedFilter::translation:
            v = gen_translating_wave({s.F0, s.theta0, 0.0, s.phi0}, s.extent, opt);
            break;
        case SimulatedFilter::dilation:
            v = gen_dilating_wave({s.F0, s.theta0, s.h, s.phi0}, s.extent, opt);
            break;
        case SimulatedFilter::rotation:
            v = gen_rotating_wave({s.F0, s.theta0, s.omega, s.phi0}, s.extent, opt);
            break;
        case SimulatedFilter::occlusion: {
            OcclusionParams p;
            p.wave_a = {s.F0, s.theta0, s.ft_a, s.phi0};
            p.wave_b = {s.F_b, s.theta0, s.ft_b, s.phi0};
            p.envelope_sigma = s.occlusion_sigma;
            return gen_occlusion_stimulus(p, s.extent, opt);
        }
    }
    const double sx = s.window.sigma;
    const double st = s.window.sigma_t;
    if (!(sx > 0.0) || !(st > 0.0)) {
        throw InvalidArgument("simulation window widths must be positive");
    }
    const int hw = v.half_width();
    const int hh = v.half_height();
    for (int t = 0; t < v.frames(); ++t) {
        const double tc = t - s.time_origin;
        for (int iy = 0; iy < v.height(); ++iy) {
            for (int ix = 0; ix < v.width(); ++ix) {
                const double x = ix - hw;
                const double y = iy - hh;
                v.at(ix, iy, t) *= std::exp(-(x * x + y * y) / (sx * sx) - tc * tc / (st * st));
            }
        }
    }
    return v;
}

void write_spectral_csv(const SpectralMap& map, std::ostream& out) {
    out << "kx,ky,kt,F,theta_deg,ft,phi_deg,p_re,p_im,q_re,q_im,power,psi,masked,out_of_phase,projection,response\n";
    for (const auto& en : map.entries) {
        const std::string psi = en.masked ? std::string() : fmt::format("{:.9g}", en.psi);
        out << fmt::format("{},{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{},{},{},{:.9g},{:.9g}\n",
                           en.k.kx, en.k.ky, en.k.kt, en.wave.F, en.wave.theta * 180.0 / kPi, en.wave.motion,
                           en.wave.phi * 180.0 / kPi, en.p.real(), en.p.imag(), en.q.real(), en.q.imag(), en.power,
                           psi, en.masked ? 1 : 0, en.out_of_phase ? 1 : 0, en.projection, en.response);
    }
}

namespace {

struct PlanePoint {
    int u;
    int v;
    const SpectralEntry* entry;
};

template <typename Colour>
Raster render_plane(const SpectralMap& map, PlaneAxes plane, int fixed, Colour&& colour) {
    std::vector<PlanePoint> pts;
    for (const auto& en : map.entries) {
        const auto& k = en.k;
        switch (plane) {
            case PlaneAxes::xy:
                if (k.kt == fixed) pts.push_back({k.kx, k.ky, &en});
                break;
            case PlaneAxes::xt:
                if (k.ky == fixed) pts.push_back({k.kx, k.kt, &en});
                break;
            case PlaneAxes::yt:
                if (k.kx == fixed) pts.push_back({k.ky, k.kt, &en});
                break;
        }
    }
    Raster r;
    if (pts.empty()) {
        throw InvalidArgument(fmt::format("no map entries on the requested plane (fixed index {})", fixed));
    }
    int u0 = pts[0].u, u1 = pts[0].u, v0 = pts[0].v, v1 = pts[0].v;
    for (const auto& p : pts) {
        u0 = std::min(u0, p.u);
        u1 = std::max(u1, p.u);
        v0 = std::min(v0, p.v);
        v1 = std::max(v1, p.v);
    }
    r.width = u1 - u0 + 1;
    r.height = v1 - v0 + 1;
    r.rgb.assign(static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height) * 3, 0);
    for (const auto& p : pts) {
        // Second axis grows upwards.
        const std::size_t px = (static_cast<std::size_t>(v1 - p.v) * static_cast<std::size_t>(r.width) +
                                static_cast<std::size_t>(p.u - u0)) *
                               3;
        const auto c = colour(*p.entry);
        r.rgb[px] = c[0];
        r.rgb[px + 1] = c[1];
        r.rgb[px + 2] = c[2];
    }
    return r;
}

unsigned char to_byte(double unit) {
    return static_cast<unsigned char>(std::lround(255.0 * std::clamp(unit, 0.0, 1.0)));
}

}  // namespace

Raster render_power(const SpectralMap& map, PlaneAxes plane, int fixed) {
    const double top = map.max_power > 0.0 ? map.max_power : 1.0;
    return render_plane(map, plane, fixed, [&](const SpectralEntry& en) {
        const auto g = to_byte(en.power / top);
        return std::array<unsigned char, 3>{g, g, g};
    });
}

Raster render_psi(const SpectralMap& map, PlaneAxes plane, int fixed) {
    return render_plane(map, plane, fixed, [](const SpectralEntry& en) {
        if (en.masked) {
            return std::array<unsigned char, 3>{255, 0, 0};
        }
        const auto g = to_byte(1.0 - en.psi / kPi);
        return std::array<unsigned char, 3>{g, g, g};
    });
}

Raster render_response(const SpectralMap& map, PlaneAxes plane, int fixed) {
    double top = 0.0;
    for (const auto& en : map.entries) {
        top = std::max(top, en.response);
    }
    if (!(top > 0.0)) {
        top = 1.0;
    }
    return render_plane(map, plane, fixed, [&](const SpectralEntry& en) {
        const auto g = to_byte(en.response / top);
        return std::array<unsigned char, 3>{g, g, g};
    });
}

}  // namespace stprobe
