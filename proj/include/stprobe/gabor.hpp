#pragma once

#include <array>
#include <complex>
#include <iosfwd>
#include <string>
#include <vector>

#include "stprobe/stimuli.hpp"
#include "stprobe/volume.hpp"

namespace stprobe {

struct GaborParams {
    double F0 = 1.0 / 64.0;  // cycles/pixel
    double theta0 = 0.0;     // radians
    double ft0 = 0.0;        // cycles/frame
    double phi0 = 0.0;       // radians
    double sigma_x = 16.0;   // pixels
    double sigma_y = 16.0;   // pixels
    double sigma_t = 1.0;    // frames
    double K = 1.0;
    double b = 0.0;

    double half_wavelength() const { return 1.0 / (2.0 * F0); }
    double preferred_velocity() const { return ft0 / F0; }
    std::array<double, 2> preferred_frequency() const { return {F0 * std::cos(theta0), F0 * std::sin(theta0)}; }

    friend bool operator==(const GaborParams&, const GaborParams&) = default;
};

/// Throws InvalidArgument when a GaborParams invariant is violated.
void validate(const GaborParams& g);

inline double preferred_velocity(const GaborParams& g) { return g.ft0 / g.F0; }

/// exp(-(xr^2/sx^2 + yr^2/sy^2 + (t - t0)^2/st^2)), t0 = time_origin.
Volume gaussian_envelope(const GaborParams& g, const Extent& extent, double time_origin = 0.0);
Volume gabor_kernel(const GaborParams& g, const Extent& extent, double time_origin = 0.0);

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

/// max(0, K (<stimulus, kernel> + b)).
double unit_response(const GaborParams& g, const Volume& stimulus, double time_origin = 0.0);

/// Closed-form response of a Gabor kernel to translating waves on a fixed extent.
///
/// With w_s the spatial envelope and S(k) = sum w_s cos(2 pi k.x) (real since
/// w_s is point-symmetric on a centred grid), the pre-activation is
///   1/2 sum_t w_t [S(k0+k) cos(a_t+b_t) + S(k0-k) cos(a_t-b_t)]
/// where a_t, b_t are the kernel and wave temporal phases.
class GaborResponseModel {
public:
    GaborResponseModel(const GaborParams& g, const Extent& extent, double time_origin = 0.0);

    const GaborParams& params() const { return g_; }

    /// S(k) for wave vector (kx, ky) in cycles/pixel.
    double envelope_spectrum(double kx, double ky) const;

    /// <wave, kernel> for a translating wave (F, theta, ft, phi).
    double preactivation(double F, double theta, double ft, double phi) const;
    double response(double F, double theta, double ft, double phi) const {
        return relu(g_.K * (preactivation(F, theta, ft, phi) + g_.b));
    }

private:
    GaborParams g_;
    Extent extent_;
    double time_origin_;
    std::vector<double> ws_;  // (y, x)
    std::vector<double> wt_;
};

struct Bandwidths {
    double spatial_octaves = 0.0;   // log2(F_max / F_min)
    double orientation_deg = 0.0;   // theta_max - theta_min
    double temporal_cpf = 0.0;      // ft_max - ft_min
    std::array<bool, 3> truncated{};   // F, theta, ft
    std::array<bool, 3> multi_lobe{};  // more than two half-level crossings
    std::array<double, 2> spatial_range{};      // F_min, F_max (cycles/pixel)
    std::array<double, 2> orientation_range{};  // radians
    std::array<double, 2> temporal_range{};
};

struct BandwidthOptions {
    int samples = 2001;
    double f_min = 1.0 / 1600.0;
    double f_max = 1.0 / 32.0;
    double time_origin = 0.0;
};

/// Half-magnitude widths of the model's response curves through the fitted
/// peak. The half level is half the maximum of each sampled curve.
Bandwidths half_magnitude_bandwidths(const GaborParams& fit, double peak_response, const Extent& extent,
                                     const BandwidthOptions& opt = {});

/// Crossings of `level` on a sampled curve, located by linear interpolation
/// around the lobe containing the maximum. Exposed for testing.
struct LobeWidth {
    double lo = 0.0;
    double hi = 0.0;
    bool truncated = false;
    bool multi_lobe = false;
};
LobeWidth half_level_lobe(const std::vector<double>& xs, const std::vector<double>& ys);

// CSV row helpers; column order matches gabor_csv_header().
std::string gabor_csv_header();
std::string to_csv_row(const GaborParams& g);
GaborParams parse_gabor_row(const std::string& line);

}  // namespace stprobe
