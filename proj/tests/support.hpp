#pragma once

// Shared helpers for tests: planted banks and recovery errors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "stprobe/gabor.hpp"

namespace stprobe::testing {

struct PlantRange {
    double half_wavelength_min = 32.0;
    double half_wavelength_max = 384.0;
    double sigma_rel_min = 0.3;  // sigma_x, sigma_y as a fraction of lambda0/2
    double sigma_rel_max = 0.6;
    double sigma_t_min = 0.5;
    double sigma_t_max = 2.0;
    double theta_max = 350.0 * kPi / 180.0;
    double bias_fraction = 0.2;  // b in [-fraction * peak pre-activation, 0]
};

/// K = 1 Gabors drawn uniformly inside the range; F0 via uniform lambda0/2.
inline std::vector<GaborParams> plant_bank(std::size_t n, const Extent& extent, const PlantRange& r,
                                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<GaborParams> bank;
    for (std::size_t i = 0; i < n; ++i) {
        GaborParams g;
        const double hl = r.half_wavelength_min + (r.half_wavelength_max - r.half_wavelength_min) * u(rng);
        g.F0 = 1.0 / (2.0 * hl);
        g.theta0 = r.theta_max * u(rng);
        g.ft0 = 0.5 * u(rng);
        g.phi0 = kTwoPi * u(rng) - kPi;
        g.sigma_x = (r.sigma_rel_min + (r.sigma_rel_max - r.sigma_rel_min) * u(rng)) * hl;
        g.sigma_y = (r.sigma_rel_min + (r.sigma_rel_max - r.sigma_rel_min) * u(rng)) * hl;
        g.sigma_t = r.sigma_t_min + (r.sigma_t_max - r.sigma_t_min) * u(rng);
        g.K = 1.0;
        g.b = 0.0;
        const double peak = GaborResponseModel(g, extent).preactivation(g.F0, g.theta0, g.ft0, g.phi0);
        g.b = -r.bias_fraction * peak * u(rng);
        bank.push_back(g);
    }
    return bank;
}

inline double wrapped_distance(double a, double b) {
    return std::abs(wrap_pi(a - b));
}

struct RecoveryError {
    double F_rel = 0.0;
    double theta_deg = 0.0;
    double ft = 0.0;
    double phi_deg = 0.0;
    double sigma_x_rel = 0.0;
    double sigma_y_rel = 0.0;
    double sigma_t_rel = 0.0;
};

/// Parameter errors of a fit against the truth. The kernel is unchanged by
/// (theta, ft, phi) -> (theta + pi, -ft, -phi); the closer form is used.
/// Temporal frequency is compared modulo 1 cycle/frame.
inline RecoveryError recovery_error(const GaborParams& fit, const GaborParams& truth) {
    const auto ft_distance = [](double a, double b) {
        const double d = std::abs(a - b);
        return std::min(d, 1.0 - d);
    };
    double th = wrapped_distance(fit.theta0, truth.theta0);
    double ft = ft_distance(fit.ft0, truth.ft0);
    double ph = wrapped_distance(fit.phi0, truth.phi0);
    const double th2 = wrapped_distance(fit.theta0 + kPi, truth.theta0);
    if (th2 < th) {
        th = th2;
        ft = ft_distance(-fit.ft0, truth.ft0);
        ph = wrapped_distance(-fit.phi0, truth.phi0);
    }
    RecoveryError e;
    e.F_rel = std::abs(fit.F0 / truth.F0 - 1.0);
    e.theta_deg = th * 180.0 / kPi;
    e.ft = ft;
    e.phi_deg = ph * 180.0 / kPi;
    e.sigma_x_rel = std::abs(fit.sigma_x / truth.sigma_x - 1.0);
    e.sigma_y_rel = std::abs(fit.sigma_y / truth.sigma_y - 1.0);
    e.sigma_t_rel = std::abs(fit.sigma_t / truth.sigma_t - 1.0);
    return e;
}

}  // namespace stprobe::testing
