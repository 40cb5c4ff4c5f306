#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stprobe/grid.hpp"
#include "stprobe/raster.hpp"
#include "stprobe/volume.hpp"

namespace stprobe {

using Complex = std::complex<double>;

/// 3-D DFT coefficients, stored like Volume in (t, y, x) order with
/// non-negative array indices; negative frequencies wrap around.
class Spectrum {
public:
    Spectrum() = default;
    explicit Spectrum(Extent extent);

    const Extent& extent() const { return extent_; }
    std::size_t size() const { return data_.size(); }

    /// Coefficient at integer frequency (kx, ky, kt), any sign.
    Complex at(int kx, int ky, int kt) const { return data_[index(kx, ky, kt)]; }
    Complex& at(int kx, int ky, int kt) { return data_[index(kx, ky, kt)]; }

    double amplitude(int kx, int ky, int kt) const { return std::abs(at(kx, ky, kt)); }
    double phase(int kx, int ky, int kt) const { return std::arg(at(kx, ky, kt)); }

    std::span<Complex> coefficients() { return data_; }
    std::span<const Complex> coefficients() const { return data_; }

private:
    std::size_t index(int kx, int ky, int kt) const;

    Extent extent_{0, 0, 0};
    std::vector<Complex> data_;
};

/// X[k] = sum_n x[n] exp(-2 pi i k.n / N), separably over x, y and t.
Spectrum dft3(const Volume& v);
/// Inverse of dft3 (1/N normalised); the imaginary part is discarded.
Volume idft3(const Spectrum& s);

/// Angle between p and q as real 2-vectors, in [0, pi].
/// Throws InvalidArgument when either magnitude is zero.
double phase_difference(Complex p, Complex q);

// --- lattice waves ----------------------------------------------------------

struct LatticeFrequency {
    int kx = 0;
    int ky = 0;
    int kt = 0;

    friend bool operator==(const LatticeFrequency&, const LatticeFrequency&) = default;
};

/// Lattice index of a translating wave on `extent`. Throws InvalidArgument
/// unless its frequency is an integer multiple of the fundamentals.
LatticeFrequency lattice_frequency(const Stimulus& wave, const Extent& extent);

/// Translating wave at lattice index k (spatial part nonzero).
Stimulus lattice_wave(const LatticeFrequency& k, const Extent& extent, double phi = 0.0);

/// Coefficient of the wave's spectrum at its own lattice index.
Complex wave_coefficient(const Stimulus& wave, const Extent& extent, double time_origin);

struct LatticeRange {
    std::array<int, 2> kx{0, 0};
    std::array<int, 2> ky{0, 0};
    std::array<int, 2> kt{0, 0};
};

/// Every index of the DFT grid centred on zero.
LatticeRange full_lattice(const Extent& extent);

/// Waves over the inclusive range, t fastest; zero spatial frequency skipped.
std::vector<Stimulus> lattice_waves(const Extent& extent, const LatticeRange& range, double phi = 0.0);

// --- phase and response maps ------------------------------------------------

struct SpectralOptions {
    /// Frame index playing t = 0 for the waves.
    double time_origin = 0.0;
    /// Coefficients with A_q below this fraction of the map maximum are masked.
    double mask_fraction = 0.01;
};

struct SpectralEntry {
    Stimulus wave;
    LatticeFrequency k;
    Complex p;               // wave coefficient
    Complex q;               // filter coefficient
    double power = 0.0;      // A_q
    double psi = 0.0;        // NaN when masked
    bool masked = false;
    bool out_of_phase = false;  // psi >= pi/2
    double projection = 0.0;    // <wave, filter>
    double response = 0.0;      // max(0, projection)
};

struct SpectralMap {
    Extent extent;
    SpectralOptions options;
    double max_power = 0.0;
    std::vector<SpectralEntry> entries;

    /// Out-of-phase share of the unmasked entries.
    double out_of_phase_fraction() const;
};

/// Per-wave phase angle, power and mask. The waves must lie on the lattice
/// of the filter's extent.
SpectralMap phase_map(const Volume& filter, std::span<const Stimulus> waves, const SpectralOptions& opt = {});
SpectralMap phase_map(const Volume& filter, const GridSpec& wave_grid, const SpectralOptions& opt = {});

/// Responses through the convolution theorem; fills the same entries.
SpectralMap freq_response_map(const Volume& filter, std::span<const Stimulus> waves,
                              const SpectralOptions& opt = {});
SpectralMap freq_response_map(const Volume& filter, const GridSpec& wave_grid, const SpectralOptions& opt = {});

// --- lobes --------------------------------------------------------------------

struct Lobe {
    std::vector<std::size_t> members;  // entry indices
    std::size_t peak = 0;              // entry index of the largest response
    double peak_response = 0.0;
};

/// Connected groups (26-neighbourhood on the lattice) of entries whose
/// response reaches `fraction` of the map maximum, largest peak first.
std::vector<Lobe> superthreshold_lobes(const SpectralMap& map, double fraction);

// --- simulated filters --------------------------------------------------------

/// Simulation volumes resolve temporal frequency with eight frames.
inline constexpr Extent kSimulationExtent{65, 65, 8};
inline constexpr double kSimulationOrigin = 3.5;

struct SimulationWindow {
    double sigma = 12.0;   // spatial, pixels
    double sigma_t = 4.0;  // frames
};

struct SimulationSettings {
    Extent extent = kSimulationExtent;
    double time_origin = kSimulationOrigin;
    SimulationWindow window;
    double F0 = 8.0 / 65.0;
    double theta0 = 0.0;
    double phi0 = 0.0;
    double h = 1.05;          // dilation
    double omega = 0.05;      // rotation, rad/frame
    double ft_a = -1.0 / 8.0;  // occluder
    double F_b = 16.0 / 65.0;  // occluded
    double ft_b = 1.0 / 8.0;
    double occlusion_sigma = 16.0;
};

enum class SimulatedFilter { translation, dilation, rotation, occlusion };

std::string to_string(SimulatedFilter kind);
SimulatedFilter parse_simulated_filter(const std::string& text);

/// Gaussian-windowed waves (translation, dilation, rotation) or the
/// occlusion stimulus, on the settings' extent and time origin.
Volume simulate_filter(SimulatedFilter kind, const SimulationSettings& s = {});

// --- export -------------------------------------------------------------------

void write_spectral_csv(const SpectralMap& map, std::ostream& out);

/// Lattice plane: the two varying axes and the fixed value of the third.
enum class PlaneAxes { xy, xt, yt };

/// Grayscale A_q (white = max power).
Raster render_power(const SpectralMap& map, PlaneAxes plane, int fixed);
/// Darkness-coded psi (black = pi) with masked entries in red.
Raster render_psi(const SpectralMap& map, PlaneAxes plane, int fixed);
/// Grayscale response (white = max response).
Raster render_response(const SpectralMap& map, PlaneAxes plane, int fixed);

}  // namespace stprobe
