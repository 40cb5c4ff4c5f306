#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "stprobe/aperture.hpp"

using namespace stprobe;
namespace fs = std::filesystem;

namespace {

FlowMap constant_map(FlowLevel level, float u, float v, const Extent& canvas = kBarCanvas) {
    const auto [w, h] = level_size(canvas, level);
    FlowMap m;
    m.width = w;
    m.height = h;
    m.level = level;
    m.u.assign(static_cast<std::size_t>(w * h), u);
    m.v.assign(static_cast<std::size_t>(w * h), v);
    return m;
}

// Records which (case, level) pairs were requested.
class CountingSource : public FlowSource {
public:
    FlowMap flow(const ApertureCase& c, FlowLevel level) const override {
        ++calls;
        return constant_map(level, static_cast<float>(c.u[0]), static_cast<float>(c.u[1]), c.canvas);
    }
    mutable int calls = 0;
};

}  // namespace

TEST_CASE("endpoint error") {
    CHECK(epe({0, 0}, {0, 0}) == 0.0);
    CHECK(epe({3, 0}, {0, 4}) == doctest::Approx(5.0));
    CHECK(epe({1, 1}, {1, 1}) == 0.0);
    // Shifting both vectors by the same amount leaves the error unchanged.
    CHECK(epe({3 + 7.5, 0 - 2.0}, {0 + 7.5, 4 - 2.0}) == doctest::Approx(5.0));
    const auto u = bar_motion(64, true);
    CHECK(epe({0, 0}, u) == doctest::Approx(64.0));
}

TEST_CASE("levels") {
    CHECK(level_factor(FlowLevel::full) == 1);
    CHECK(level_factor(FlowLevel::f2) == 4);
    CHECK(level_factor(FlowLevel::f4) == 16);
    CHECK(level_factor(FlowLevel::f6) == 64);
    CHECK(level_size(kBarCanvas, FlowLevel::f6) == std::array<int, 2>{8, 6});
    CHECK(level_size(kBarCanvas, FlowLevel::f4) == std::array<int, 2>{32, 24});
    CHECK(level_size(kBarCanvas, FlowLevel::f2) == std::array<int, 2>{128, 96});
    CHECK(level_size(Extent{100, 50, 2}, FlowLevel::f6) == std::array<int, 2>{2, 1});
    for (auto l : {FlowLevel::full, FlowLevel::f2, FlowLevel::f4, FlowLevel::f6}) {
        CHECK(parse_flow_level(to_string(l)) == l);
    }
    CHECK_THROWS_AS(parse_flow_level("f3"), InvalidArgument);
}

TEST_CASE("validation") {
    auto m = constant_map(FlowLevel::f4, 1, 2);
    CHECK_NOTHROW(validate_flow(m, kBarCanvas));
    m.u[3] = std::nanf("");
    CHECK_THROWS_AS(validate_flow(m, kBarCanvas), InvalidArgument);
    auto small = constant_map(FlowLevel::f4, 1, 2);
    small.width -= 1;
    small.u.resize(static_cast<std::size_t>(small.width * small.height));
    small.v.resize(small.u.size());
    CHECK_THROWS_AS(validate_flow(small, kBarCanvas), InvalidArgument);
}

TEST_CASE("flo files round-trip") {
    FlowMap m;
    m.width = 3;
    m.height = 2;
    m.u = {1.5f, -2.0f, 0.0f, 3.25f, 1e-3f, -7.0f};
    m.v = {0.5f, 0.0f, 9.0f, -1.0f, 2.0f, 4.0f};
    std::stringstream s;
    write_flo(m, s);
    CHECK(s.str().size() == 12u + 6u * 8u);
    CHECK(s.str().substr(0, 4) == "PIEH");
    const auto back = read_flo(s, FlowLevel::f2);
    CHECK(back.width == 3);
    CHECK(back.height == 2);
    CHECK(back.level == FlowLevel::f2);
    CHECK(back.u == m.u);
    CHECK(back.v == m.v);

    std::stringstream bad("NOPE");
    CHECK_THROWS(read_flo(bad));
    std::stringstream truncated(s.str().substr(0, 20));
    CHECK_THROWS(read_flo(truncated));
}

TEST_CASE("subsampling takes the top-left pixel of each cell") {
    FlowField f;
    f.width = 10;
    f.height = 6;
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 10; ++x) {
            f.u.push_back(static_cast<float>(x));
            f.v.push_back(static_cast<float>(y));
        }
    }
    const auto m = subsample_flow(f, FlowLevel::f2);
    CHECK(m.width == 3);
    CHECK(m.height == 2);
    CHECK(m.at(2, 1) == std::array<double, 2>{8, 4});
}

TEST_CASE("bar centre error") {
    const auto c = make_aperture_case(200, BarDirection::down_left);
    CHECK(c.center_x == 256);
    CHECK(c.center_y == 192);
    CHECK(std::hypot(c.u[0], c.u[1]) == doctest::Approx(64));
    CHECK(c.width == default_bar_width(200));

    auto m = constant_map(FlowLevel::f6, 0, 0);
    CHECK(center_error(m, c) == doctest::Approx(64));
    // Cell (4, 3) holds the centre at factor 64.
    m.u[3 * 8 + 4] = static_cast<float>(c.u[0]);
    m.v[3 * 8 + 4] = static_cast<float>(c.u[1]);
    CHECK(center_error(m, c) == doctest::Approx(0.0).scale(1.0).epsilon(1e-5));

    FlowMap tiny;
    tiny.width = 1;
    tiny.height = 1;
    tiny.level = FlowLevel::f6;
    tiny.u = {0};
    tiny.v = {0};
    CHECK_THROWS_AS(center_error(tiny, c), InvalidArgument);
}

TEST_CASE("ground truth and edge oracle sources") {
    const GroundTruthFlowSource gt;
    for (double s : {16.0, 100.0, 400.0}) {
        for (auto d : {BarDirection::up_right, BarDirection::down_left}) {
            const auto c = make_aperture_case(s, d);
            for (auto l : {FlowLevel::full, FlowLevel::f2, FlowLevel::f4, FlowLevel::f6}) {
                CHECK(center_error(gt.flow(c, l), c) < 1e-4);
            }
        }
    }

    SUBCASE("full-resolution ground truth equals the bar sequence flow") {
        const auto c = make_aperture_case(120, BarDirection::up_right);
        const auto seq = gen_bar_sequence(c.scale, c.width, c.u, c.canvas);
        const auto m = gt.flow(c, FlowLevel::full);
        REQUIRE(m.u.size() == seq.gt_flow.u.size());
        CHECK(m.u == seq.gt_flow.u);
        CHECK(m.v == seq.gt_flow.v);
    }

    SUBCASE("oracle knee at twice the reach") {
        const EdgeOracleFlowSource oracle(50.0);
        for (double s : {90.0, 100.0}) {
            const auto c = make_aperture_case(s, BarDirection::up_right);
            CHECK(center_error(oracle.flow(c, FlowLevel::f4), c) < 1e-4);
        }
        for (double s : {101.0, 140.0}) {
            const auto c = make_aperture_case(s, BarDirection::up_right);
            CHECK(center_error(oracle.flow(c, FlowLevel::f4), c) == doctest::Approx(64).epsilon(1e-5));
        }
        CHECK_THROWS_AS(EdgeOracleFlowSource(-1.0), InvalidArgument);
    }
}

TEST_CASE("sweeps") {
    CountingSource src;
    const auto t = run_sweep({32, 64}, {BarDirection::up_right, BarDirection::down_left},
                             {kNetworkLevels.begin(), kNetworkLevels.end()}, src, "probe");
    CHECK(t.measurements == 12);
    CHECK(src.calls == 12);
    REQUIRE(t.rows.size() == 6);
    CHECK(t.rows[0].scale == 32);
    CHECK(t.rows[0].level == FlowLevel::f6);
    CHECK(t.rows[2].level == FlowLevel::f2);
    CHECK(t.rows[3].scale == 64);
    for (const auto& r : t.rows) {
        REQUIRE(r.up_right.has_value());
        REQUIRE(r.down_left.has_value());
        CHECK(r.mean == doctest::Approx(0.5 * (*r.up_right + *r.down_left)).scale(1.0));
    }

    std::ostringstream csv;
    write_aperture_csv(t, csv);
    const auto text = csv.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 7);

    const auto one = run_sweep({32}, {BarDirection::down_left}, {FlowLevel::f4}, src);
    CHECK_FALSE(one.rows[0].up_right.has_value());
    CHECK(one.rows[0].down_left.has_value());
    CHECK_THROWS_AS(run_sweep({32}, {}, {FlowLevel::f4}, src), InvalidArgument);
}

TEST_CASE("flow directories") {
    const auto dir = fs::temp_directory_path() / "stprobe_test_flows";
    fs::remove_all(dir);
    fs::create_directories(dir);
    CHECK(flow_file_name(64, BarDirection::up_right, FlowLevel::f4) == "bar_64_up_right_f4.flo");
    CHECK(flow_file_name(12.5, BarDirection::down_left, FlowLevel::f6) == "bar_12.5_down_left_f6.flo");

    const auto c = make_aperture_case(64, BarDirection::up_right);
    save_flo(constant_map(FlowLevel::f4, static_cast<float>(c.u[0]), static_cast<float>(c.u[1])),
             (dir / flow_file_name(64, BarDirection::up_right, FlowLevel::f4)).string());
    const FlowDirectorySource src(dir.string());
    CHECK(center_error(src.flow(c, FlowLevel::f4), c) < 1e-4);
    CHECK_THROWS_AS(src.flow(c, FlowLevel::f6), MissingFlowMap);

    // A map of the wrong level size is rejected.
    save_flo(constant_map(FlowLevel::f6, 0, 0), (dir / flow_file_name(64, BarDirection::up_right, FlowLevel::f2)).string());
    CHECK_THROWS_AS(src.flow(c, FlowLevel::f2), InvalidArgument);
    fs::remove_all(dir);
}

TEST_CASE("flow colour wheel") {
    FlowMap m;
    m.width = 2;
    m.height = 1;
    m.u = {1.0f, 0.0f};
    m.v = {0.0f, 0.0f};
    const auto r = flow_to_color(m);
    CHECK(r.width == 2);
    CHECK(r.rgb.size() == 6);
    // Zero motion is white; unit motion along +x is saturated red-magenta.
    CHECK(r.rgb[3] == 255);
    CHECK(r.rgb[4] == 255);
    CHECK(r.rgb[5] == 255);
    CHECK(r.rgb[0] == 255);
    CHECK(r.rgb[1] == 0);
    CHECK(r.rgb[2] < 64);
}
