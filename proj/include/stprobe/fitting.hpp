#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stprobe/gabor.hpp"
#include "stprobe/grid.hpp"
#include "stprobe/probe.hpp"
#include "stprobe/trf.hpp"

namespace stprobe {

struct PeakResponse {
    std::size_t filter_id = 0;
    std::size_t stimulus_id = 0;
    std::vector<std::size_t> grid_indices;
    Stimulus stimulus;
    double r0 = 0.0;
};

/// Global maximum of one filter; ties go to the lowest stimulus id.
/// Throws IncompleteTable on missing rows and InactiveFilter when all zero.
PeakResponse find_peak(const ResponseTable& table, const GridSpec& spec, std::size_t filter_id);

struct ProfileSample {
    Stimulus stimulus;
    double activation = 0.0;
};

enum class ProfileAxis { spatial_frequency = 0, orientation = 1, temporal_frequency = 2 };

struct SpectralProfile {
    std::array<std::vector<ProfileSample>, 3> curves;  // indexed by ProfileAxis
};

/// The three sweeps through a translation peak with the peak stimulus
/// inserted in order where the sweep does not already contain it.
std::array<std::vector<Stimulus>, 3> profile_stimuli(const Stimulus& peak, const ProfileSampling& sampling = {});

/// Measures the profile sweeps of one filter on a provider.
SpectralProfile extract_profiles(const ResponseProvider& provider, const PeakResponse& peak,
                                 const ProfileSampling& sampling = {});

/// Profiles for many peaks in one batched provider call per chunk.
std::vector<SpectralProfile> extract_profiles(const ResponseProvider& provider, const std::vector<PeakResponse>& peaks,
                                              const ProfileSampling& sampling = {});

struct FitBounds {
    double F_min = 1.0 / 1600.0;
    double F_max = 1.0 / 32.0;
    double ft_min = -0.5;
    double ft_max = 0.5;
    double sigma_xy_min = 4.0;
    double sigma_xy_max = 800.0;
    double sigma_t_min = 0.25;
    double sigma_t_max = 8.0;
    double K_max = 1e6;
    /// b lies in [-b_low * r0 / K_init, b_high * r0 / K_init].
    double b_low = 10.0;
    double b_high = 1.0;
};

struct FitOptions {
    FitBounds bounds;
    TrfOptions solver{.max_iterations = 3000};
    double time_origin = 0.0;
    /// Replaces the peak-derived starting point when set; no seeds are added.
    std::optional<GaborParams> initial;
    /// Additional starts from a separable search around the peak. The
    /// lowest-cost solution over all starts is returned.
    std::size_t seeds = 2;
    /// Iterations each start gets before the best one is continued.
    int screen_iterations = 100;
};

inline constexpr std::size_t kParamCount = 9;
/// Parameter order used by the solver and the active-bound flags.
inline constexpr std::array<const char*, kParamCount> kParamNames = {
    "F0", "theta0", "ft0", "phi0", "sigma_x", "sigma_y", "sigma_t", "K", "b"};

struct FitResult {
    GaborParams params;
    double L = 0.0;
    double L_F = 0.0;
    double L_theta = 0.0;
    double L_ft = 0.0;
    double L_norm = 0.0;
    bool converged = false;
    std::array<int, kParamCount> active_bounds{};  // -1 lower, 1 upper
    int iterations = 0;
    int status = 0;
    std::vector<double> cost_history;
};

double normalized_cost(double L, double r0);

/// Nine-parameter fit of the Gabor response model to the three curves.
FitResult fit_gabor(const SpectralProfile& profile, const PeakResponse& peak, const Extent& extent,
                    const FitOptions& opt = {});

/// Initial parameters for a peak (exposed for inspection and tests).
GaborParams initial_guess(const PeakResponse& peak, const Extent& extent, double time_origin = 0.0);

/// Model responses and, optionally, the Jacobian with respect to the nine
/// parameters for translating-wave stimuli on `extent`.
void model_response(const GaborParams& g, const Extent& extent, const std::vector<Stimulus>& stimuli,
                    Eigen::VectorXd& r, Eigen::MatrixXd* J, double time_origin = 0.0);

// CSV/JSON exports.
std::string fit_csv_header();
std::string to_csv_row(std::size_t filter_id, const PeakResponse& peak, const FitResult& fit);

struct Quartiles {
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double min = 0.0;
    double max = 0.0;
};
/// Linear-interpolated quartiles; throws InvalidArgument on an empty list.
Quartiles quartiles(std::vector<double> values);

}  // namespace stprobe
