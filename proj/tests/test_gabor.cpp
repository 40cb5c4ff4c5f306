#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "stprobe/error.hpp"
#include "stprobe/gabor.hpp"

using namespace stprobe;

namespace {

// Plain loops over the closed-form kernel; shares no code with the library.
double kernel_at(const GaborParams& g, double x, double y, double t, double t0) {
    const double c = std::cos(g.theta0);
    const double s = std::sin(g.theta0);
    const double xr = x * c + y * s;
    const double yr = -x * s + y * c;
    const double tc = t - t0;
    const double w = std::exp(-(xr * xr / (g.sigma_x * g.sigma_x) + yr * yr / (g.sigma_y * g.sigma_y) +
                                tc * tc / (g.sigma_t * g.sigma_t)));
    return w * std::cos(kTwoPi * (g.F0 * xr - g.ft0 * tc) + g.phi0);
}

double wave_at(double F, double theta, double ft, double phi, double x, double y, double t) {
    return std::cos(kTwoPi * (F * (x * std::cos(theta) + y * std::sin(theta)) - ft * t) + phi);
}

double direct_preactivation(const GaborParams& g, const Extent& e, double F, double theta, double ft, double phi,
                            double t0 = 0.0) {
    const int hw = (e.width - 1) / 2;
    const int hh = (e.height - 1) / 2;
    double acc = 0.0;
    for (int t = 0; t < e.frames; ++t) {
        for (int y = -hh; y <= hh; ++y) {
            for (int x = -hw; x <= hw; ++x) {
                acc += kernel_at(g, x, y, t, t0) * wave_at(F, theta, ft, phi, x, y, t - t0);
            }
        }
    }
    return acc;
}

}  // namespace

TEST_CASE("envelope") {
    const Extent e{41, 41, 3};
    const GaborParams g{.F0 = 0.05, .theta0 = 0.6, .sigma_x = 5, .sigma_y = 9, .sigma_t = 1.5};
    const auto w = gaussian_envelope(g, e, 1.0);
    CHECK(w.centered_at(0, 0, 1) == doctest::Approx(1.0));
    const auto g0 = GaborParams{.theta0 = 0, .sigma_x = 5, .sigma_y = 9};
    CHECK(gaussian_envelope(g0, e, 1.0).centered_at(5, 0, 1) == doctest::Approx(std::exp(-1.0)));

    auto iso = GaborParams{.theta0 = 0.0, .sigma_x = 7, .sigma_y = 7};
    const auto a = gaussian_envelope(iso, e);
    iso.theta0 = 1.234;
    const auto b = gaussian_envelope(iso, e);
    for (std::size_t i = 0; i < a.samples().size(); ++i) {
        CHECK(a.samples()[i] == doctest::Approx(b.samples()[i]).epsilon(1e-12));
    }
}

TEST_CASE("kernel") {
    const Extent e{21, 21, 2};
    GaborParams g{.F0 = 0.08, .theta0 = 0.3, .ft0 = 0.1, .phi0 = 0.0, .sigma_x = 4, .sigma_y = 6, .sigma_t = 1};
    CHECK(gabor_kernel(g, e).centered_at(0, 0, 0) == doctest::Approx(1.0));
    g.phi0 = kPi / 2;
    CHECK(gabor_kernel(g, e).centered_at(0, 0, 0) == doctest::Approx(0.0));

    g.phi0 = 0.9;
    const auto k = gabor_kernel(g, e);
    const auto w = gaussian_envelope(g, e);
    for (std::size_t i = 0; i < k.samples().size(); ++i) {
        CHECK(std::abs(k.samples()[i]) <= w.samples()[i] + 1e-15);
    }
    for (int t = 0; t < 2; ++t) {
        for (int y = -10; y <= 10; y += 3) {
            for (int x = -10; x <= 10; x += 2) {
                CHECK(k.centered_at(x, y, t) == doctest::Approx(kernel_at(g, x, y, t, 0.0)));
            }
        }
    }
}

TEST_CASE("unit response") {
    const Extent e{31, 31, 2};
    const GaborParams g{.F0 = 0.1, .theta0 = 0.4, .ft0 = 0.0, .phi0 = 0.0, .sigma_x = 6, .sigma_y = 6, .sigma_t = 2};

    SUBCASE("matched wave equals the direct sum") {
        const auto s = gen_translating_wave({g.F0, g.theta0, g.ft0, g.phi0}, e);
        double expected = 0.0;
        for (int t = 0; t < 2; ++t) {
            for (int y = -15; y <= 15; ++y) {
                for (int x = -15; x <= 15; ++x) {
                    const double xr = x * std::cos(g.theta0) + y * std::sin(g.theta0);
                    const double yr = -x * std::sin(g.theta0) + y * std::cos(g.theta0);
                    const double c = std::cos(kTwoPi * g.F0 * xr);
                    expected += std::exp(-(xr * xr + yr * yr) / 36.0 - t * t / 4.0) * c * c;
                }
            }
        }
        CHECK(expected > 0);
        CHECK(unit_response(g, s) == doctest::Approx(expected).epsilon(1e-12));
    }

    SUBCASE("odd kernel against an even wave is decorrelated") {
        auto odd = g;
        odd.phi0 = kPi / 2;
        const auto s = gen_translating_wave({g.F0, g.theta0, 0.0, 0.0}, e);
        double pre = 0.0;
        const auto k = gabor_kernel(odd, e);
        pre = dot(k, s);
        CHECK(std::abs(pre) < 1e-9 * energy(s));
    }

    SUBCASE("odd kernel against its own wave at the opposite frequency") {
        auto odd = g;
        odd.phi0 = kPi / 2;
        const auto s = gen_translating_wave({g.F0, g.theta0 + kPi, 0.0, kPi / 2}, e);
        CHECK(dot(gabor_kernel(odd, e), s) < 0);
        CHECK(unit_response(odd, s) == 0.0);
    }

    SUBCASE("gain and bias") {
        auto h = g;
        h.K = 2.5;
        h.b = -3.0;
        const auto s = gen_translating_wave({g.F0, g.theta0, 0.0, 0.0}, e);
        const double pre = dot(gabor_kernel(h, e), s);
        CHECK(unit_response(h, s) == doctest::Approx(2.5 * (pre - 3.0)));
    }

    SUBCASE("sign flip of stimulus and kernel phase") {
        GaborParams a = g;
        a.phi0 = 0.7;
        const auto s = gen_translating_wave({g.F0 * 1.1, g.theta0 + 0.2, 0.0, 0.3}, e);
        GaborParams b = a;
        b.phi0 += kPi;
        const auto sf = gen_translating_wave({g.F0 * 1.1, g.theta0 + 0.2, 0.0, 0.3 + kPi}, e);
        CHECK(unit_response(a, s) == doctest::Approx(unit_response(b, sf)));
    }

    SUBCASE("even extents are rejected") {
        CHECK_THROWS_AS(unit_response(g, Volume(Extent{32, 31, 3})), InvalidArgument);
    }
}

TEST_CASE("closed-form responses agree with direct summation") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const Extent e : {Extent{25, 25, 2}, Extent{17, 23, 4}}) {
        for (int i = 0; i < 10; ++i) {
            const GaborParams g{.F0 = 0.02 + 0.1 * u(rng),
                                .theta0 = kTwoPi * u(rng),
                                .ft0 = u(rng) - 0.5,
                                .phi0 = kTwoPi * u(rng),
                                .sigma_x = 3 + 8 * u(rng),
                                .sigma_y = 3 + 8 * u(rng),
                                .sigma_t = 0.5 + 2 * u(rng)};
            const double t0 = i % 2 == 0 ? 0.0 : 0.5 * (e.frames - 1);
            const GaborResponseModel model(g, e, t0);
            const double F = 0.02 + 0.1 * u(rng);
            const double th = kTwoPi * u(rng);
            const double ft = u(rng) - 0.5;
            const double ph = kTwoPi * u(rng);
            const double want = direct_preactivation(g, e, F, th, ft, ph, t0);
            CHECK(model.preactivation(F, th, ft, ph) == doctest::Approx(want).epsilon(1e-9).scale(1.0));
        }
    }
}

TEST_CASE("preferred velocity") {
    CHECK(GaborParams{.F0 = 0.1, .ft0 = 0.0}.preferred_velocity() == 0.0);
    CHECK(preferred_velocity(GaborParams{.F0 = 1.0 / 400, .ft0 = 0.5}) == doctest::Approx(200));
    CHECK(GaborParams{.F0 = 0.02, .ft0 = 0.3}.preferred_velocity() ==
          doctest::Approx(2 * GaborParams{.F0 = 0.04, .ft0 = 0.3}.preferred_velocity()));
}

TEST_CASE("validation") {
    CHECK_THROWS_AS(validate(GaborParams{.F0 = 0.0}), InvalidArgument);
    CHECK_THROWS_AS(validate(GaborParams{.sigma_t = 0.0}), InvalidArgument);
    CHECK_THROWS_AS(validate(GaborParams{.ft0 = 0.7}), InvalidArgument);
    CHECK_THROWS_AS(validate(GaborParams{.K = 0.0}), InvalidArgument);
    CHECK_NOTHROW(validate(GaborParams{}));
}

TEST_CASE("half-level lobe") {
    const std::vector<double> xs{0, 1, 2, 3, 4, 5, 6};
    auto w = half_level_lobe(xs, {0, 0, 2, 4, 2, 0, 0});
    CHECK(w.lo == doctest::Approx(2.0));
    CHECK(w.hi == doctest::Approx(4.0));
    CHECK_FALSE(w.truncated);
    CHECK_FALSE(w.multi_lobe);

    w = half_level_lobe(xs, {4, 3, 1, 0, 0, 0, 0});
    CHECK(w.truncated);
    CHECK(w.lo == 0.0);
    CHECK(w.hi == doctest::Approx(1.5));

    w = half_level_lobe(xs, {0, 4, 0, 3, 0, 0, 0});
    CHECK(w.multi_lobe);
    CHECK(w.hi == doctest::Approx(1.5));
}

TEST_CASE("bandwidths") {
    SUBCASE("temporal width of a long Gaussian") {
        // Centred envelope exp(-t^2/st^2) has |FT| exp(-pi^2 st^2 f^2); half
        // magnitude at f = sqrt(ln 2) / (pi st).
        const Extent e{65, 65, 65};
        const GaborParams g{.F0 = 1.0 / 32, .theta0 = 0, .ft0 = 0, .phi0 = 0, .sigma_x = 16, .sigma_y = 16, .sigma_t = 8};
        const double t0 = 32.0;
        const double r0 = GaborResponseModel(g, e, t0).response(g.F0, 0, 0, 0);
        const auto bw = half_magnitude_bandwidths(g, r0, e, {.time_origin = t0});
        const double analytic = 2.0 * std::sqrt(std::log(2.0)) / (kPi * g.sigma_t);
        CHECK(bw.temporal_cpf == doctest::Approx(analytic).epsilon(0.05));
        CHECK_FALSE(bw.truncated[2]);
    }

    const Extent e{97, 97, 2};
    const GaborParams g{.F0 = 1.0 / 80, .theta0 = 0.5, .ft0 = 0.1, .phi0 = 0.3, .sigma_x = 30, .sigma_y = 30, .sigma_t = 1};
    const double r0 = GaborResponseModel(g, e).response(g.F0, g.theta0, g.ft0, g.phi0);
    const auto base = half_magnitude_bandwidths(g, r0, e);

    SUBCASE("negative bias narrows every axis") {
        auto h = g;
        h.b = -0.4 * r0;
        const double r1 = GaborResponseModel(h, e).response(h.F0, h.theta0, h.ft0, h.phi0);
        const auto bw = half_magnitude_bandwidths(h, r1, e);
        CHECK(bw.spatial_octaves < base.spatial_octaves);
        CHECK(bw.orientation_deg < base.orientation_deg);
        CHECK(bw.temporal_cpf <= base.temporal_cpf);
    }

    SUBCASE("gain does not change bandwidths") {
        auto h = g;
        h.K = 17.0;
        const auto bw = half_magnitude_bandwidths(h, 17.0 * r0, e);
        CHECK(bw.spatial_octaves == doctest::Approx(base.spatial_octaves));
        CHECK(bw.orientation_deg == doctest::Approx(base.orientation_deg));
        CHECK(bw.temporal_cpf == doctest::Approx(base.temporal_cpf));
    }

    SUBCASE("wider sigma_x never widens the spatial-frequency band") {
        double prev = base.spatial_octaves;
        for (double sx : {35.0, 40.0, 48.0}) {
            auto h = g;
            h.sigma_x = sx;
            const auto bw = half_magnitude_bandwidths(h, r0, e);
            CHECK(bw.spatial_octaves <= prev + 1e-12);
            prev = bw.spatial_octaves;
        }
    }

    SUBCASE("mirror-symmetric kernel gives a symmetric orientation band") {
        // The square window is only mirror-symmetric about the axes.
        auto h = g;
        h.theta0 = 0.0;
        const double rh = GaborResponseModel(h, e).response(h.F0, 0.0, h.ft0, h.phi0);
        const auto bw = half_magnitude_bandwidths(h, rh, e);
        CHECK(bw.orientation_range[0] + bw.orientation_range[1] == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    }

    SUBCASE("non-positive peak is rejected") {
        CHECK_THROWS_AS(half_magnitude_bandwidths(g, 0.0, e), InvalidArgument);
    }
}

TEST_CASE("csv rows round-trip") {
    const GaborParams g{.F0 = 0.0123, .theta0 = 1.0, .ft0 = -0.2, .phi0 = -0.5, .sigma_x = 12, .sigma_y = 7, .sigma_t = 1.5,
                        .K = 3, .b = -0.25};
    const auto r = parse_gabor_row(to_csv_row(g));
    CHECK(r.F0 == doctest::Approx(g.F0));
    CHECK(r.theta0 == doctest::Approx(g.theta0));
    CHECK(r.ft0 == doctest::Approx(g.ft0));
    CHECK(r.phi0 == doctest::Approx(g.phi0));
    CHECK(r.sigma_x == doctest::Approx(g.sigma_x));
    CHECK(r.b == doctest::Approx(g.b));
    CHECK_THROWS_AS(parse_gabor_row("1,2,3"), InvalidArgument);
}
