#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "stprobe/probe.hpp"

namespace fs = std::filesystem;
using namespace stprobe;

namespace {

const fs::path kWork = fs::temp_directory_path() / "stprobe_cli_test";

int run(const std::string& args) {
    const std::string cmd = std::string(STPROBE_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

struct Workspace {
    Workspace() {
        fs::remove_all(kWork);
        fs::create_directories(kWork);
        save_bank_csv({{.F0 = 1.0 / 16, .theta0 = 0, .ft0 = 0.1, .phi0 = 0, .sigma_x = 8, .sigma_y = 8, .sigma_t = 1},
                       {.F0 = 1.0 / 24, .theta0 = kPi / 2, .ft0 = 0.0, .phi0 = kPi / 2, .sigma_x = 10, .sigma_y = 8,
                        .sigma_t = 1}},
                      (kWork / "bank.csv").string());
        write_file(kWork / "t.spec", R"(kind = translation
axis = half_wavelength px 8 32 step 4
axis = orientation deg 0 340 step 20
axis = temporal_frequency cycles/frame 0 0.5 step 0.05
axis = phase deg -175 165 step 20
)");
    }
    ~Workspace() { fs::remove_all(kWork); }
    std::string path(const std::string& name) const { return (kWork / name).string(); }
};

}  // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run("") == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("grid") == 2);
    CHECK(run("grid --kind shear") == 2);
    CHECK(run("phase --builtin translation --filter x.stvl") == 2);
    CHECK(run("aperture --source oracle:-3 --scales 16:64:16") == 2);
    CHECK(run("grid --kind translation --extent 32x33x2 --export-manifest /dev/null") == 2);
}

TEST_CASE("help exits with 0") {
    CHECK(run("--help") == 0);
    CHECK(run("fit --help") == 0);
}

TEST_CASE("grid, fit and motion runs") {
    Workspace w;
    const std::string bank = "synthetic:" + w.path("bank.csv");

    REQUIRE(run("grid --kind translation --spec " + w.path("t.spec") + " --extent 65x65x2 --provider " + bank +
                " --out " + w.path("grid")) == 0);
    for (const char* f : {"config.json", "manifest.jsonl", "responses.csv", "peaks.csv", "summary.json"}) {
        CHECK(fs::exists(kWork / "grid" / f));
    }
    const auto summary = nlohmann::json::parse(read_file(kWork / "grid" / "summary.json"));
    CHECK_FALSE(summary.empty());

    REQUIRE(run("fit --manifest " + w.path("grid/manifest.jsonl") + " --responses " + w.path("grid/responses.csv") +
                " --provider " + bank + " --out " + w.path("fit")) == 0);
    for (const char* f : {"fits.csv", "bandwidths.csv", "summary.json"}) {
        CHECK(fs::exists(kWork / "fit" / f));
    }
    const auto fits = read_file(kWork / "fit" / "fits.csv");
    CHECK(std::count(fits.begin(), fits.end(), '\n') == 3);

    // Responses recorded for another grid are refused.
    write_file(kWork / "bad.csv", "# grid_spec_hash=0x0000000000000001\nstimulus_id,filter_id,activation\n0,0,1\n");
    CHECK(run("fit --manifest " + w.path("grid/manifest.jsonl") + " --responses " + w.path("bad.csv") +
              " --provider " + bank + " --out " + w.path("fit2")) == 1);

    REQUIRE(run("grid --kind translation --spec " + w.path("t.spec") + " --extent 65x65x2 --export-manifest " +
                w.path("m1.jsonl") + " --out " + w.path("e1")) == 0);
    REQUIRE(run("grid --kind translation --spec " + w.path("t.spec") + " --extent 65x65x2 --export-manifest " +
                w.path("m2.jsonl") + " --out " + w.path("e2")) == 0);
    CHECK(read_file(kWork / "m1.jsonl") == read_file(kWork / "m2.jsonl"));
}

TEST_CASE("phase and aperture runs") {
    Workspace w;
    REQUIRE(run("phase --builtin rotation --out " + w.path("phase")) == 0);
    for (const char* f : {"spectral.csv", "power.ppm", "psi.ppm", "response.ppm", "summary.json"}) {
        CHECK(fs::exists(kWork / "phase" / f));
    }
    const auto s = nlohmann::json::parse(read_file(kWork / "phase" / "summary.json"));
    CHECK(s.contains("lobes"));

    REQUIRE(run("aperture --source oracle:50 --scales 64:160:32 --out " + w.path("ap")) == 0);
    CHECK(fs::exists(kWork / "ap" / "aperture.csv"));

    // A flow directory lacking maps is a usage error.
    fs::create_directories(kWork / "flows");
    CHECK(run("aperture --flow-dir " + w.path("flows") + " --scales 64 --out " + w.path("ap2")) == 2);
}
