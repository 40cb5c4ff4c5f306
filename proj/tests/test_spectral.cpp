#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "stprobe/error.hpp"
#include "stprobe/gabor.hpp"
#include "stprobe/spectral.hpp"

using namespace stprobe;

namespace {

Volume noise(const Extent& e, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Volume v(e);
    for (auto& s : v.samples()) {
        s = n(rng);
    }
    return v;
}

// Textbook triple sum over array indices.
Complex naive_dft(const Volume& v, int kx, int ky, int kt) {
    const auto& e = v.extent();
    Complex acc = 0.0;
    for (int t = 0; t < e.frames; ++t) {
        for (int y = 0; y < e.height; ++y) {
            for (int x = 0; x < e.width; ++x) {
                const double a = -kTwoPi * (static_cast<double>(kx) * x / e.width + static_cast<double>(ky) * y / e.height +
                                            static_cast<double>(kt) * t / e.frames);
                acc += v.at(x, y, t) * Complex(std::cos(a), std::sin(a));
            }
        }
    }
    return acc;
}

}  // namespace

TEST_CASE("dft3 against the textbook sum") {
    const Extent e{5, 7, 3};
    const auto v = noise(e, 1);
    const auto s = dft3(v);
    for (int kt = -1; kt <= 1; ++kt) {
        for (int ky = -3; ky <= 3; ++ky) {
            for (int kx = -2; kx <= 2; ++kx) {
                const auto want = naive_dft(v, kx, ky, kt);
                CHECK(std::abs(s.at(kx, ky, kt) - want) < 1e-10);
            }
        }
    }
}

TEST_CASE("Parseval and round trip") {
    const Extent e{9, 11, 4};
    const auto v = noise(e, 2);
    const auto s = dft3(v);
    double spec = 0.0;
    for (const auto& c : s.coefficients()) {
        spec += std::norm(c);
    }
    CHECK(spec / static_cast<double>(e.size()) == doctest::Approx(energy(v)).epsilon(1e-12));

    const auto back = idft3(s);
    double worst = 0.0;
    for (std::size_t i = 0; i < v.samples().size(); ++i) {
        worst = std::max(worst, std::abs(back.samples()[i] - v.samples()[i]));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("a lattice cosine has exactly two coefficients") {
    const Extent e{15, 15, 4};
    const LatticeFrequency k{3, -2, 1};
    const auto w = lattice_wave(k, e);
    CHECK(lattice_frequency(w, e) == k);
    const auto s = dft3(render(w, e));
    const double half = static_cast<double>(e.size()) / 2.0;
    int nonzero = 0;
    for (int kt = -2; kt <= 1; ++kt) {
        for (int ky = -7; ky <= 7; ++ky) {
            for (int kx = -7; kx <= 7; ++kx) {
                const double a = s.amplitude(kx, ky, kt);
                if (a > 1e-8) {
                    ++nonzero;
                    CHECK(a == doctest::Approx(half));
                }
            }
        }
    }
    CHECK(nonzero == 2);
    CHECK(s.amplitude(k.kx, k.ky, k.kt) == doctest::Approx(half));
    CHECK(s.amplitude(-k.kx, -k.ky, -k.kt) == doctest::Approx(half));
}

TEST_CASE("analytic wave coefficients match the transform") {
    const Extent e{13, 9, 4};
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> kx(-6, 6), ky(-4, 4), kt(-2, 1);
    std::uniform_real_distribution<double> ph(-kPi, kPi);
    for (int i = 0; i < 30; ++i) {
        LatticeFrequency k{kx(rng), ky(rng), kt(rng)};
        if (k.kx == 0 && k.ky == 0) {
            k.kx = 1;
        }
        for (double t0 : {0.0, 1.5}) {
            const auto w = lattice_wave(k, e, ph(rng));
            const auto s = dft3(render(w, e, {.time_origin = t0}));
            const auto p = wave_coefficient(w, e, t0);
            CHECK(std::abs(p - s.at(k.kx, k.ky, k.kt)) < 1e-9 * static_cast<double>(e.size()));
        }
    }
}

TEST_CASE("temporal Nyquist frequency") {
    // kt = -T/2 is f_t = 0.5 and aliases onto +T/2.
    const Extent e{9, 9, 4};
    const LatticeFrequency k{0, 3, -2};
    const auto w = lattice_wave(k, e, 0.4);
    const auto s = dft3(render(w, e, {.allow_aliased = true}));
    const auto p = wave_coefficient(w, e, 0.0);
    CHECK(std::abs(p - s.at(0, 3, -2)) < 1e-9 * static_cast<double>(e.size()));
}

TEST_CASE("phase difference") {
    CHECK(phase_difference({1, 0}, {2, 0}) == doctest::Approx(0.0));
    CHECK(phase_difference({1, 0}, {-1, 0}) == doctest::Approx(kPi));
    CHECK(phase_difference({1, 0}, {0, 3}) == doctest::Approx(kPi / 2));
    CHECK(phase_difference({0, 1}, {1, -1}) == doctest::Approx(3 * kPi / 4));
    CHECK_THROWS_AS(phase_difference({0, 0}, {1, 0}), InvalidArgument);
}

TEST_CASE("lattice checks") {
    const Extent e{33, 33, 8};
    const Stimulus off{MotionKind::translation, 0.1, 0.0, 0.0, 0.0};
    CHECK_THROWS_AS(lattice_frequency(off, e), InvalidArgument);
    const Stimulus on{MotionKind::translation, 4.0 / 33, 0.0, 0.25, 0.0};
    CHECK(lattice_frequency(on, e) == LatticeFrequency{4, 0, -2});
    const Stimulus dil{MotionKind::dilation, 4.0 / 33, 0.0, 1.0, 0.0};
    CHECK_THROWS_AS(lattice_frequency(dil, e), InvalidArgument);

    const auto r = full_lattice(e);
    CHECK(r.kx == std::array<int, 2>{-16, 16});
    CHECK(r.kt == std::array<int, 2>{-4, 3});
    const auto waves = lattice_waves(e, {{-1, 1}, {0, 0}, {0, 1}});
    CHECK(waves.size() == 4);  // kx = 0 skipped; kt varies fastest
    CHECK(lattice_frequency(waves[0], e) == LatticeFrequency{-1, 0, 0});
    CHECK(lattice_frequency(waves[1], e) == LatticeFrequency{-1, 0, 1});
}

TEST_CASE("frequency-domain responses equal direct dot products") {
    const Extent e{17, 17, 8};
    const auto f = noise(e, 4);
    const auto waves = lattice_waves(e, {{-3, 3}, {-2, 2}, {-4, 3}}, 0.3);
    for (double t0 : {0.0, 3.5}) {
        const auto m = freq_response_map(f, waves, {.time_origin = t0});
        REQUIRE(m.entries.size() == waves.size());
        for (std::size_t i = 0; i < waves.size(); i += 3) {
            const double d = dot(render(waves[i], e, {.time_origin = t0, .allow_aliased = true}), f);
            CHECK(m.entries[i].projection == doctest::Approx(d).epsilon(1e-9).scale(1.0));
            CHECK(m.entries[i].response == std::max(0.0, m.entries[i].projection));
        }
    }
}

TEST_CASE("phase map of a matched filter") {
    const SimulationSettings s;
    const auto f = simulate_filter(SimulatedFilter::translation, s);
    const auto waves = lattice_waves(s.extent, {{6, 10}, {-1, 1}, {-1, 1}});
    const auto m = phase_map(f, waves, {.time_origin = s.time_origin});
    const SpectralEntry* top = &m.entries[0];
    for (const auto& en : m.entries) {
        if (en.power > top->power) {
            top = &en;
        }
        if (!en.masked) {
            CHECK(en.psi == doctest::Approx(phase_difference(en.p, en.q)));
            CHECK(en.out_of_phase == (en.psi >= kPi / 2));
            CHECK(en.power >= 0.01 * m.max_power);
        } else {
            CHECK(std::isnan(en.psi));
        }
    }
    CHECK(top->k == LatticeFrequency{8, 0, 0});
    CHECK(top->psi == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    CHECK(top->response > 0);
}

TEST_CASE("grid-spec wave sets") {
    const Extent e{33, 33, 8};
    const auto f = noise(e, 5);
    const auto grid = parse_grid_spec(R"(kind = translation
axis = half_wavelength px 16.5 16.5 points 1
axis = orientation deg 0 180 step 180
axis = temporal_frequency cycles/frame 0 0.25 step 0.125
axis = phase deg 0 0 points 1
)");
    const auto m = freq_response_map(f, grid, {.time_origin = 0.0});
    CHECK(m.entries.size() == grid.size());
    const auto off = parse_grid_spec(R"(kind = translation
axis = half_wavelength px 10 10 points 1
axis = orientation deg 0 0 points 1
axis = temporal_frequency cycles/frame 0 0 points 1
axis = phase deg 0 0 points 1
)");
    CHECK_THROWS_AS(freq_response_map(f, off), InvalidArgument);
}

TEST_CASE("lobes") {
    const SimulationSettings s;
    const auto waves = lattice_waves(s.extent, full_lattice(s.extent));

    SUBCASE("translation: one blob per sign of the frequency") {
        const auto m = phase_map(simulate_filter(SimulatedFilter::translation, s), waves, {.time_origin = s.time_origin});
        const auto lobes = superthreshold_lobes(m, 0.1);
        REQUIRE(lobes.size() == 2);
        CHECK(std::abs(m.entries[lobes[0].peak].k.kx) == 8);
        CHECK(lobes[0].peak_response >= lobes[1].peak_response);
    }

    SUBCASE("threshold fraction must lie in (0, 1]") {
        const auto m = phase_map(simulate_filter(SimulatedFilter::rotation, s), waves, {.time_origin = s.time_origin});
        CHECK(superthreshold_lobes(m, 1.0).size() >= 1);
        CHECK_THROWS_AS(superthreshold_lobes(m, 1.01), InvalidArgument);
        CHECK_THROWS_AS(superthreshold_lobes(m, 0.0), InvalidArgument);
    }
}

TEST_CASE("simulated filters") {
    for (auto k : {SimulatedFilter::translation, SimulatedFilter::dilation, SimulatedFilter::rotation,
                   SimulatedFilter::occlusion}) {
        CHECK(parse_simulated_filter(to_string(k)) == k);
        const auto v = simulate_filter(k);
        CHECK(v.extent() == kSimulationExtent);
    }
    CHECK_THROWS_AS(parse_simulated_filter("shear"), InvalidArgument);
}

TEST_CASE("exports") {
    const SimulationSettings s;
    const auto waves = lattice_waves(s.extent, {{1, 12}, {0, 0}, {-4, 3}});
    const auto m = phase_map(simulate_filter(SimulatedFilter::occlusion, s), waves, {.time_origin = s.time_origin});
    std::ostringstream csv;
    write_spectral_csv(m, csv);
    const auto text = csv.str();
    CHECK(text.rfind("kx,ky,kt,F,theta_deg,ft,phi_deg,p_re,p_im,q_re,q_im,power,psi,masked,out_of_phase,projection,response\n",
                     0) == 0);
    CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == waves.size() + 1);

    const auto r = render_psi(m, PlaneAxes::xt, 0);
    CHECK(r.width == 12);
    CHECK(r.height == 8);
    CHECK(r.rgb.size() == 12u * 8u * 3u);
    CHECK_THROWS_AS(render_power(m, PlaneAxes::xt, 5), InvalidArgument);
}
