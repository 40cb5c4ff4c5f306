#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <utility>

#include "stprobe/error.hpp"
#include "stprobe/stimuli.hpp"

using namespace stprobe;

namespace {

// Direct evaluation of a translating wave at centred coordinates.
double wave_at(double F0, double theta, double ft, double phi, double x, double y, double t) {
    const double xr = x * std::cos(theta) + y * std::sin(theta);
    return std::cos(kTwoPi * (F0 * xr - ft * t) + phi);
}

double max_abs_diff(const Volume& a, const Volume& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.samples().size(); ++i) {
        m = std::max(m, std::abs(a.samples()[i] - b.samples()[i]));
    }
    return m;
}

}  // namespace

TEST_CASE("rotate_coords follows the clockwise convention") {
    auto r = rotate_coords(1, 0, 0);
    CHECK(r.xr == doctest::Approx(1.0));
    CHECK(r.yr == doctest::Approx(0.0));

    r = rotate_coords(1, 0, kPi / 2);
    CHECK(r.xr == doctest::Approx(0.0));
    CHECK(r.yr == doctest::Approx(-1.0));

    r = rotate_coords(3, 4, 0.7);
    CHECK(r.xr * r.xr + r.yr * r.yr == doctest::Approx(25.0));
    CHECK(r.xr == doctest::Approx(3 * std::cos(0.7) + 4 * std::sin(0.7)));
}

TEST_CASE("angle wrapping") {
    CHECK(wrap_two_pi(-0.5) == doctest::Approx(kTwoPi - 0.5));
    CHECK(wrap_two_pi(kTwoPi) == doctest::Approx(0.0));
    CHECK(wrap_pi(kPi) == doctest::Approx(-kPi));
    CHECK(wrap_pi(3 * kPi / 2) == doctest::Approx(-kPi / 2));
}

TEST_CASE("translating wave samples") {
    const Extent e{33, 33, 2};
    auto v = gen_translating_wave({.F0 = 1.0 / 32, .theta0 = 0, .ft0 = 0, .phi0 = 0}, e);
    CHECK(v.centered_at(0, 0, 0) == doctest::Approx(1.0));

    v = gen_translating_wave({.F0 = 1.0 / 32, .theta0 = 0, .ft0 = 0, .phi0 = kPi}, e);
    CHECK(v.centered_at(0, 0, 0) == doctest::Approx(-1.0));

    v = gen_translating_wave({.F0 = 1.0 / 32, .theta0 = 0, .ft0 = 0.25, .phi0 = 0}, e);
    CHECK(v.centered_at(8, 0, 1) == doctest::Approx(1.0));

    const TranslatingWaveParams p{.F0 = 0.07, .theta0 = 1.1, .ft0 = -0.3, .phi0 = 0.4};
    v = gen_translating_wave(p, e);
    for (int t = 0; t < 2; ++t) {
        for (int y = -16; y <= 16; y += 5) {
            for (int x = -16; x <= 16; x += 3) {
                CHECK(v.centered_at(x, y, t) == doctest::Approx(wave_at(0.07, 1.1, -0.3, 0.4, x, y, t)));
            }
        }
    }
    for (double s : v.samples()) {
        CHECK(std::abs(s) <= 1.0);
    }
}

TEST_CASE("time origin shifts the wave's phase reference") {
    const Extent e{9, 9, 4};
    const auto v = gen_translating_wave({.F0 = 0.1, .theta0 = 0, .ft0 = 0.2, .phi0 = 0}, e, {.time_origin = 1.5});
    CHECK(v.centered_at(3, 0, 2) == doctest::Approx(wave_at(0.1, 0, 0.2, 0, 3, 0, 0.5)));
}

TEST_CASE("aliased temporal frequencies need the override") {
    const Extent e{9, 9, 2};
    CHECK_THROWS_AS(gen_translating_wave({.F0 = 0.1, .theta0 = 0, .ft0 = 0.6, .phi0 = 0}, e), InvalidArgument);
    CHECK_NOTHROW(gen_translating_wave({.F0 = 0.1, .theta0 = 0, .ft0 = 0.6, .phi0 = 0}, e, {.allow_aliased = true}));
    CHECK_NOTHROW(gen_translating_wave({.F0 = 0.1, .theta0 = 0, .ft0 = 0.5, .phi0 = 0}, e));
}

TEST_CASE("even extents have no centre pixel") {
    CHECK_THROWS_AS(gen_translating_wave({}, Extent{32, 33, 2}), InvalidArgument);
}

TEST_CASE("dilating wave") {
    CHECK(DilatingWaveParams{.h = 2.0}.alpha() == doctest::Approx(0.5));

    const Extent e{101, 101, 3};
    const auto still = gen_dilating_wave({.F0 = 0.05, .theta0 = 0.3, .h = 1.0, .phi0 = 0.2}, e);
    const auto flat = gen_translating_wave({.F0 = 0.05, .theta0 = 0.3, .ft0 = 0.0, .phi0 = 0.2}, e);
    CHECK(max_abs_diff(still, flat) < 1e-12);

    const auto v = gen_dilating_wave({.F0 = 1.0 / 100, .theta0 = 0, .h = 1.25, .phi0 = 0}, e);
    CHECK(v.centered_at(50, 0, 1) == doctest::Approx(std::cos(kTwoPi * (50 - 0.2 * 50) / 100)));

    CHECK_THROWS_AS(gen_dilating_wave({.h = 0.0}, e), InvalidArgument);
}

TEST_CASE("rotating wave") {
    const Extent e{31, 31, 3};
    const auto still = gen_rotating_wave({.F0 = 0.06, .theta0 = 0.8, .omega = 0.0, .phi0 = 0.1}, e);
    const auto flat = gen_translating_wave({.F0 = 0.06, .theta0 = 0.8, .ft0 = 0.0, .phi0 = 0.1}, e);
    CHECK(max_abs_diff(still, flat) < 1e-12);

    const auto spin = gen_rotating_wave({.F0 = 0.06, .theta0 = 0.8, .omega = 1.3, .phi0 = 0.1}, e);
    for (int t = 0; t < 3; ++t) {
        CHECK(spin.centered_at(0, 0, t) == doctest::Approx(std::cos(0.1)));
    }

    const auto quarter = gen_rotating_wave({.F0 = 0.06, .theta0 = 0.8, .omega = kPi / 2, .phi0 = 0.1}, e);
    const auto turned = gen_translating_wave({.F0 = 0.06, .theta0 = 0.8 + kPi / 2, .ft0 = 0, .phi0 = 0.1}, e);
    double m = 0.0;
    for (int y = -15; y <= 15; ++y) {
        for (int x = -15; x <= 15; ++x) {
            m = std::max(m, std::abs(quarter.centered_at(x, y, 1) - turned.centered_at(x, y, 0)));
        }
    }
    CHECK(m < 1e-12);
}

TEST_CASE("occlusion stimulus") {
    const Extent e{41, 41, 2};
    const TranslatingWaveParams a{.F0 = 0.1, .theta0 = 0, .ft0 = 0.1, .phi0 = 0};
    const TranslatingWaveParams b{.F0 = 0.2, .theta0 = 0.5, .ft0 = -0.1, .phi0 = 1};
    const double sigma = 8.0;

    SUBCASE("identical waves give a windowed wave and a warning") {
        const OcclusionParams p{a, a, 3.0, sigma};
        const auto v = gen_occlusion_stimulus(p, e);
        const auto w = gen_translating_wave(a, e);
        for (int y = -20; y <= 20; y += 4) {
            for (int x = -20; x <= 20; ++x) {
                const double g = std::exp(-(x * x + y * y) / (sigma * sigma));
                CHECK(v.centered_at(x, y, 1) == doctest::Approx(g * w.centered_at(x, y, 1)));
            }
        }
        CHECK_FALSE(occlusion_warnings(p).empty());
    }

    SUBCASE("left of the boundary only the occluded wave remains") {
        const OcclusionParams p{a, b, 10.0, sigma};
        const auto v = gen_occlusion_stimulus(p, e);
        const auto wb = gen_translating_wave(b, e);
        for (int x = -20; x < 0; ++x) {
            const double g = std::exp(-(x * x) / (sigma * sigma));
            CHECK(v.centered_at(x, 0, 0) == doctest::Approx(g * wb.centered_at(x, 0, 0)));
        }
        CHECK(occlusion_warnings(p).empty());
    }

    SUBCASE("deterministic") {
        const OcclusionParams p{a, b, 0.0, sigma};
        CHECK(max_abs_diff(gen_occlusion_stimulus(p, e), gen_occlusion_stimulus(p, e)) == 0.0);
    }
}

TEST_CASE("bar sequences") {
    const Extent canvas = kBarCanvas;

    SUBCASE("no motion") {
        const auto s = gen_bar_sequence(100, 9, {0, 0}, canvas);
        const auto f0 = s.frames.frame(0);
        const auto f1 = s.frames.frame(1);
        CHECK(std::equal(f0.begin(), f0.end(), f1.begin()));
        for (float u : s.gt_flow.u) {
            CHECK(u == 0.0f);
        }
    }

    SUBCASE("diagonal motion components") {
        const auto u = bar_motion(64, true);
        CHECK(std::abs(u[0]) == doctest::Approx(64 / std::sqrt(2.0)));
        CHECK(std::abs(u[1]) == doctest::Approx(64 / std::sqrt(2.0)));
        CHECK(std::hypot(u[0], u[1]) == doctest::Approx(64));
        const auto d = bar_motion(64, false);
        CHECK(d[0] == doctest::Approx(-u[0]));
    }

    SUBCASE("second frame is the first shifted by the rounded motion") {
        const auto u = bar_motion(64, false);
        const auto s = gen_bar_sequence(200, default_bar_width(200), u, canvas);
        const int dx = static_cast<int>(std::lround(u[0]));
        const int dy = static_cast<int>(std::lround(u[1]));
        std::set<std::pair<int, int>> a;
        std::set<std::pair<int, int>> b;
        for (int y = 0; y < canvas.height; ++y) {
            for (int x = 0; x < canvas.width; ++x) {
                if (s.frames.at(x, y, 0) > 0) {
                    a.insert({x + dx, y + dy});
                }
                if (s.frames.at(x, y, 1) > 0) {
                    b.insert({x, y});
                }
            }
        }
        CHECK_FALSE(a.empty());
        CHECK(a == b);
        // Flow is u exactly on the union of both frames.
        for (int y = 0; y < canvas.height; ++y) {
            for (int x = 0; x < canvas.width; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * canvas.width + x;
                const bool on = s.frames.at(x, y, 0) > 0 || s.frames.at(x, y, 1) > 0;
                CHECK(s.gt_flow.u[i] == (on ? static_cast<float>(u[0]) : 0.0f));
            }
        }
    }

    SUBCASE("bars that leave the canvas are rejected") {
        CHECK_THROWS_AS(gen_bar_sequence(600, 20, {0, 0}, canvas), InvalidArgument);
        CHECK_THROWS_AS(gen_bar_sequence(100, 9, {300, 0}, canvas), InvalidArgument);
        CHECK_THROWS_AS(gen_bar_sequence(0, 9, {0, 0}, canvas), InvalidArgument);
    }
}

TEST_CASE("alias checks") {
    // (h - 1) x_max against lambda0 / 2.
    CHECK(dilation_alias_check(1.0, 10, 191));
    CHECK(dilation_alias_check(1.5, 200, 191));
    CHECK_FALSE(dilation_alias_check(1.5, 100, 191));
    CHECK(rotation_alias_check(0.0, 191.5, 16));
    CHECK_FALSE(rotation_alias_check(0.5, 191.5, 32));
}

TEST_CASE("motion kinds round-trip through text") {
    for (auto k : {MotionKind::translation, MotionKind::dilation, MotionKind::rotation}) {
        CHECK(parse_motion_kind(to_string(k)) == k);
    }
    CHECK_THROWS_AS(parse_motion_kind("shear"), InvalidArgument);
}

TEST_CASE("volume files round-trip") {
    const auto v = gen_translating_wave({.F0 = 0.1, .theta0 = 0.2, .ft0 = 0.1, .phi0 = 0}, Extent{7, 5, 3});
    std::stringstream s;
    write_stvl(v, s);
    const auto r = read_stvl(s);
    CHECK(r.extent() == v.extent());
    for (std::size_t i = 0; i < v.samples().size(); ++i) {
        CHECK(r.samples()[i] == doctest::Approx(v.samples()[i]).epsilon(1e-6));
    }
    std::stringstream bad("XXXX");
    CHECK_THROWS_AS(read_stvl(bad), IoError);
}
