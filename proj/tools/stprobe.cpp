// stprobe: command-line front end for the probing toolkit.
//
// Exit codes: 0 success, 1 computational failure, 2 usage or configuration error.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>

#include "stprobe/aperture.hpp"
#include "stprobe/fitting.hpp"
#include "stprobe/io_util.hpp"
#include "stprobe/motion.hpp"
#include "stprobe/probe.hpp"
#include "stprobe/spectral.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace stprobe;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

/// Usage or configuration problem detected by the front end.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Extent parse_extent(const std::string& text) {
    Extent e;
    char x1 = 0, x2 = 0;
    std::istringstream ss(text);
    if (!(ss >> e.width >> x1 >> e.height >> x2 >> e.frames) || x1 != 'x' || x2 != 'x' || !ss.eof() ||
        e.width <= 0 || e.height <= 0 || e.frames <= 0) {
        throw UsageError(fmt::format("bad extent '{}' (expected WxHxT)", text));
    }
    if (!e.centered()) {
        throw UsageError(fmt::format("extent '{}' needs odd width and height", text));
    }
    return e;
}

std::string write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << content;
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
    return path.string();
}

/// Run directory: --out when given, else $STPROBE_OUT (default "stprobe-runs")
/// joined with "<command>-<config hash>". The resolved config is written first.
fs::path prepare_run_dir(const std::string& out, const std::string& command, const ordered_json& config) {
    const std::string text = config.dump(2) + "\n";
    fs::path dir;
    if (!out.empty()) {
        dir = out;
    } else {
        const char* root = std::getenv("STPROBE_OUT");
        dir = fs::path(root && *root ? root : "stprobe-runs") /
              fmt::format("{}-{}", command, format_hash(fnv1a64(text)).substr(2, 8));
    }
    fs::create_directories(dir);
    write_file(dir / "config.json", text);
    return dir;
}

std::unique_ptr<ResponseProvider> make_provider(const std::string& spec, const Extent& extent) {
    const std::string prefix = "synthetic:";
    if (spec.rfind(prefix, 0) != 0) {
        throw UsageError(fmt::format("unknown provider '{}' (expected synthetic:<bank.csv>)", spec));
    }
    const std::string path = spec.substr(prefix.size());
    if (!fs::exists(path)) {
        throw UsageError("bank file not found: " + path);
    }
    return std::make_unique<SyntheticBank>(load_bank_csv(path), extent);
}

void require_file(const std::string& path, const char* what) {
    if (!fs::exists(path)) {
        throw UsageError(fmt::format("{} not found: {}", what, path));
    }
}

GridSpec spec_or_preset(const std::string& path, MotionKind kind) {
    if (path.empty()) {
        return preset_for(kind);
    }
    require_file(path, "grid spec");
    GridSpec spec = load_grid_spec(path);
    if (spec.kind != kind) {
        throw UsageError(fmt::format("grid spec {} is a {} grid, expected {}", path, to_string(spec.kind), to_string(kind)));
    }
    return spec;
}

std::string peak_row(const PeakResponse& p) {
    const auto& s = p.stimulus;
    return fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", p.filter_id, p.stimulus_id, 0.5 / s.F,
                       s.theta * 180.0 / kPi, s.motion, s.phi * 180.0 / kPi, p.r0);
}
constexpr const char* kPeakHeader = "filter_id,stimulus_id,half_wavelength_px,theta_deg,motion,phi_deg,r0\n";

ordered_json quartile_json(const Quartiles& q) {
    return {{"min", q.min}, {"q1", q.q1}, {"median", q.median}, {"q3", q.q3}, {"max", q.max}};
}

// Parses "a:b:step" (inclusive) or a comma list.
std::vector<double> parse_scales(const std::string& text) {
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        double a = 0, b = 0, step = 0;
        char c1 = 0, c2 = 0;
        std::istringstream ss(text);
        if (!(ss >> a >> c1 >> b >> c2 >> step) || c1 != ':' || c2 != ':' || !(step > 0.0) || b < a) {
            throw UsageError(fmt::format("bad scale range '{}' (expected start:stop:step)", text));
        }
        const auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
        for (long i = 0; i <= n; ++i) {
            out.push_back(a + static_cast<double>(i) * step);
        }
        return out;
    }
    std::istringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        double v = 0;
        if (!io::parse_number(item, v) || !(v > 0.0)) {
            throw UsageError(fmt::format("bad scale '{}'", item));
        }
        out.push_back(v);
    }
    if (out.empty()) {
        throw UsageError("no scales given");
    }
    return out;
}

// --- grid ----------------------------------------------------------------------

struct GridArgs {
    std::string kind;
    std::string spec;
    std::string extent = "383x383x2";
    std::string provider;
    std::string export_manifest;
    std::size_t batch = 4096;
    std::string out;
};

int cmd_grid(const GridArgs& a) {
    const MotionKind kind = parse_motion_kind(a.kind);
    const Extent extent = parse_extent(a.extent);
    const GridSpec spec = spec_or_preset(a.spec, kind);
    if (a.provider.empty() && a.export_manifest.empty()) {
        throw UsageError("grid needs --provider or --export-manifest");
    }

    std::optional<MotionGrid> motion;
    StimulusSet set;
    if (kind == MotionKind::translation) {
        set = stimulus_set_from_grid(spec, extent);
    } else {
        motion = build_motion_grid(spec, kind, extent);
        set = motion->set;
    }
    if (!a.export_manifest.empty()) {
        export_manifest_file(set, a.export_manifest);
        std::cout << fmt::format("manifest: {} stimuli, hash {} -> {}\n", set.stimuli.size(), format_hash(set.hash),
                                 a.export_manifest);
        if (a.provider.empty()) {
            return 0;
        }
    }

    ordered_json config = {{"command", "grid"},        {"kind", a.kind},
                           {"extent", a.extent},       {"grid_spec", spec.canonical()},
                           {"grid_hash", format_hash(set.hash)}, {"provider", a.provider},
                           {"batch", a.batch}};
    const auto provider = make_provider(a.provider, extent);
    const fs::path dir = prepare_run_dir(a.out, "grid", config);
    export_manifest_file(set, (dir / "manifest.jsonl").string());
    if (motion) {
        std::ofstream audit(dir / "exclusions.csv");
        write_exclusion_audit(*motion, audit);
    }
    const ResponseTable table = run_stimulus_set(*provider, set, a.batch);
    save_responses(table, (dir / "responses.csv").string());

    std::string peaks = kPeakHeader;
    std::size_t active = 0;
    for (std::size_t f = 0; f < table.filter_count(); ++f) {
        std::size_t best = 0;
        float top = -1.0f;
        for (std::size_t s = 0; s < table.stimulus_count(); ++s) {
            if (table.get(s, f) > top) {
                top = table.get(s, f);
                best = s;
            }
        }
        if (top > 0.0f) {
            ++active;
            PeakResponse p;
            p.filter_id = f;
            p.stimulus_id = best;
            p.stimulus = set.stimuli[best];
            p.r0 = top;
            peaks += peak_row(p);
        }
    }
    write_file(dir / "peaks.csv", peaks);
    ordered_json summary = {{"stimuli", table.stimulus_count()},
                            {"filters", table.filter_count()},
                            {"active_filters", active},
                            {"excluded_stimuli", motion ? motion->excluded.size() : 0}};
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    std::cout << fmt::format("{} stimuli x {} filters, {} active -> {}\n", table.stimulus_count(),
                             table.filter_count(), active, dir.string());
    return 0;
}

// --- fit -------------------------------------------------------------------------

struct FitArgs {
    std::string manifest;
    std::string responses;
    std::string provider;
    std::string profile_manifest;
    std::string profile_responses;
    std::string export_profile_manifest;
    std::size_t filters = 0;
    std::string out;
};

GridSpec grid_of(const StimulusSet& set) {
    if (set.label != "grid" || set.description.empty()) {
        throw UsageError("manifest does not describe a grid");
    }
    GridSpec spec = parse_grid_spec(set.description);
    if (spec.hash() != set.hash) {
        throw HashMismatch("manifest hash does not match its grid spec");
    }
    return spec;
}

int cmd_fit(const FitArgs& a) {
    require_file(a.manifest, "manifest");
    require_file(a.responses, "response file");
    const StimulusSet set = load_manifest(a.manifest);
    if (set.kind != MotionKind::translation) {
        throw UsageError("fit takes a translation grid");
    }
    const GridSpec spec = grid_of(set);
    const ResponseTable table = ingest_responses(a.responses, spec, a.filters);
    const auto active = active_filters(table);

    std::vector<PeakResponse> peaks;
    for (const auto f : active) {
        peaks.push_back(find_peak(table, spec, f));
    }

    if (!a.export_profile_manifest.empty()) {
        std::vector<Stimulus> all;
        for (const auto& p : peaks) {
            for (const auto& curve : profile_stimuli(p.stimulus)) {
                all.insert(all.end(), curve.begin(), curve.end());
            }
        }
        std::sort(all.begin(), all.end(), [](const Stimulus& x, const Stimulus& y) {
            return std::tie(x.F, x.theta, x.motion, x.phi) < std::tie(y.F, y.theta, y.motion, y.phi);
        });
        all.erase(std::unique(all.begin(), all.end()), all.end());
        const auto pset = stimulus_set_from_list(std::move(all), MotionKind::translation, set.extent);
        export_manifest_file(pset, a.export_profile_manifest);
        std::cout << fmt::format("profile manifest: {} stimuli for {} active filters -> {}\n", pset.stimuli.size(),
                                 active.size(), a.export_profile_manifest);
        return 0;
    }

    std::unique_ptr<ResponseProvider> provider;
    if (!a.provider.empty()) {
        provider = make_provider(a.provider, set.extent);
    } else if (!a.profile_manifest.empty() && !a.profile_responses.empty()) {
        require_file(a.profile_manifest, "profile manifest");
        require_file(a.profile_responses, "profile response file");
        StimulusSet pset = load_manifest(a.profile_manifest);
        ResponseTable ptable = ingest_responses(a.profile_responses, pset, table.filter_count());
        provider = std::make_unique<FileProvider>(std::move(pset), std::move(ptable));
    } else if (!active.empty()) {
        throw UsageError("fit needs --provider or --profile-manifest with --profile-responses");
    }

    ordered_json config = {{"command", "fit"},
                           {"manifest", a.manifest},
                           {"grid_hash", format_hash(set.hash)},
                           {"responses", a.responses},
                           {"provider", a.provider},
                           {"profile_manifest", a.profile_manifest},
                           {"profile_responses", a.profile_responses},
                           {"filters", table.filter_count()}};
    const fs::path dir = prepare_run_dir(a.out, "fit", config);

    if (active.empty()) {
        ordered_json summary = {{"active_filters", 0}, {"status", "no active filters"}};
        write_file(dir / "summary.json", summary.dump(2) + "\n");
        std::cout << "no active filters\n";
        return 0;
    }

    std::string peak_csv = kPeakHeader;
    for (const auto& p : peaks) {
        peak_csv += peak_row(p);
    }
    write_file(dir / "peaks.csv", peak_csv);

    const auto profiles = extract_profiles(*provider, peaks);
    std::vector<FitResult> fits(peaks.size());
    tbb::parallel_for(std::size_t{0}, peaks.size(),
                      [&](std::size_t i) { fits[i] = fit_gabor(profiles[i], peaks[i], set.extent); });

    std::string fit_csv = fit_csv_header() + "\n";
    std::string bw_csv = "filter_id,L_norm,spatial_octaves,orientation_deg,temporal_cpf,truncated_F,truncated_theta,"
                         "truncated_ft\n";
    std::vector<Bandwidths> bws(peaks.size());
    std::vector<double> lnorm;
    for (std::size_t i = 0; i < peaks.size(); ++i) {
        fit_csv += to_csv_row(peaks[i].filter_id, peaks[i], fits[i]) + "\n";
        bws[i] = half_magnitude_bandwidths(fits[i].params, peaks[i].r0, set.extent);
        bw_csv += fmt::format("{},{:.9g},{:.9g},{:.9g},{:.9g},{},{},{}\n", peaks[i].filter_id, fits[i].L_norm,
                              bws[i].spatial_octaves, bws[i].orientation_deg, bws[i].temporal_cpf,
                              int(bws[i].truncated[0]), int(bws[i].truncated[1]), int(bws[i].truncated[2]));
        lnorm.push_back(fits[i].L_norm);
    }
    write_file(dir / "fits.csv", fit_csv);
    write_file(dir / "bandwidths.csv", bw_csv);

    // Bandwidth statistics over the 75% of filters with the lowest L_norm.
    std::vector<std::size_t> order(peaks.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return lnorm[x] < lnorm[y]; });
    const std::size_t keep = std::max<std::size_t>(1, (3 * order.size() + 3) / 4);
    std::vector<double> bf, bt, bft;
    for (std::size_t j = 0; j < keep; ++j) {
        bf.push_back(bws[order[j]].spatial_octaves);
        bt.push_back(bws[order[j]].orientation_deg);
        bft.push_back(bws[order[j]].temporal_cpf);
    }
    const auto converged = std::count_if(fits.begin(), fits.end(), [](const FitResult& f) { return f.converged; });
    ordered_json summary = {{"active_filters", peaks.size()},
                            {"converged", converged},
                            {"L_norm", quartile_json(quartiles(lnorm))},
                            {"bandwidth_subset", keep},
                            {"spatial_octaves", quartile_json(quartiles(bf))},
                            {"orientation_deg", quartile_json(quartiles(bt))},
                            {"temporal_cpf", quartile_json(quartiles(bft))}};
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    std::cout << fmt::format("{} filters fitted, median L_norm {:.3g} -> {}\n", peaks.size(),
                             quartiles(lnorm).median, dir.string());
    return 0;
}

// --- phase -----------------------------------------------------------------------

struct PhaseArgs {
    std::string builtin;
    std::string filter;
    std::optional<double> time_origin;
    double mask = 0.01;
    double lobe_threshold = 0.1;
    std::string plane = "xt";
    int fixed = 0;
    std::string out;
};

int cmd_phase(const PhaseArgs& a) {
    if (a.builtin.empty() == a.filter.empty()) {
        throw UsageError("phase needs exactly one of --builtin or --filter");
    }
    Volume filter;
    double origin = 0.0;
    if (!a.builtin.empty()) {
        const SimulationSettings s;
        filter = simulate_filter(parse_simulated_filter(a.builtin), s);
        origin = a.time_origin.value_or(s.time_origin);
    } else {
        require_file(a.filter, "filter volume");
        filter = load_stvl(a.filter);
        origin = a.time_origin.value_or((filter.frames() - 1) / 2.0);
    }
    const PlaneAxes plane = a.plane == "xy" ? PlaneAxes::xy : a.plane == "yt" ? PlaneAxes::yt : PlaneAxes::xt;
    ordered_json config = {{"command", "phase"},   {"builtin", a.builtin},
                           {"filter", a.filter},    {"extent", to_string(filter.extent())},
                           {"time_origin", origin}, {"mask_fraction", a.mask},
                           {"lobe_threshold", a.lobe_threshold}, {"plane", a.plane},
                           {"fixed", a.fixed}};
    const fs::path dir = prepare_run_dir(a.out, "phase", config);

    const auto waves = lattice_waves(filter.extent(), full_lattice(filter.extent()));
    const SpectralMap map = phase_map(filter, waves, {.time_origin = origin, .mask_fraction = a.mask});
    {
        std::ofstream csv(dir / "spectral.csv");
        write_spectral_csv(map, csv);
    }
    save_ppm(render_power(map, plane, a.fixed), (dir / "power.ppm").string());
    save_ppm(render_psi(map, plane, a.fixed), (dir / "psi.ppm").string());
    save_ppm(render_response(map, plane, a.fixed), (dir / "response.ppm").string());

    const auto lobes = superthreshold_lobes(map, a.lobe_threshold);
    ordered_json lj = ordered_json::array();
    for (const auto& l : lobes) {
        const auto& en = map.entries[l.peak];
        lj.push_back({{"kx", en.k.kx},
                      {"ky", en.k.ky},
                      {"kt", en.k.kt},
                      {"F", en.wave.F},
                      {"theta_deg", en.wave.theta * 180.0 / kPi},
                      {"ft", en.wave.motion},
                      {"peak_response", l.peak_response},
                      {"size", l.members.size()}});
    }
    ordered_json summary = {{"entries", map.entries.size()},
                            {"max_power", map.max_power},
                            {"out_of_phase_fraction", map.out_of_phase_fraction()},
                            {"lobes", lj}};
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    std::cout << fmt::format("out-of-phase fraction {:.3f}, {} lobes -> {}\n", map.out_of_phase_fraction(),
                             lobes.size(), dir.string());
    return 0;
}

// --- aperture --------------------------------------------------------------------

struct ApertureArgs {
    std::string flow_dir;
    std::string source;
    std::string scales = "16:400:16";
    std::vector<std::string> levels{"f6", "f4", "f2"};
    double magnitude = 64.0;
    std::string tag;
    std::string export_bars;
    bool render = false;
    std::string out;
};

int cmd_aperture(const ApertureArgs& a) {
    const auto scales = parse_scales(a.scales);
    std::vector<FlowLevel> levels;
    for (const auto& l : a.levels) {
        levels.push_back(parse_flow_level(l));
    }
    const std::vector<BarDirection> dirs{BarDirection::up_right, BarDirection::down_left};

    if (!a.export_bars.empty()) {
        fs::create_directories(a.export_bars);
        for (const double s : scales) {
            for (const auto d : dirs) {
                const auto c = make_aperture_case(s, d, a.magnitude);
                const auto seq = gen_bar_sequence(s, c.width, c.u);
                const auto stem = fmt::format("bar_{:g}_{}", s, to_string(d));
                save_stvl(seq.frames, (fs::path(a.export_bars) / (stem + ".stvl")).string());
                FlowMap gt{seq.gt_flow.width, seq.gt_flow.height, FlowLevel::full, seq.gt_flow.u, seq.gt_flow.v};
                save_flo(gt, (fs::path(a.export_bars) / (stem + "_gt.flo")).string());
            }
        }
        std::cout << fmt::format("{} bar sequences -> {}\n", scales.size() * dirs.size(), a.export_bars);
        if (a.flow_dir.empty() && a.source.empty()) {
            return 0;
        }
    }

    if (a.flow_dir.empty() == a.source.empty()) {
        throw UsageError("aperture needs exactly one of --flow-dir or --source");
    }
    std::unique_ptr<FlowSource> source;
    std::string tag = a.tag;
    if (!a.flow_dir.empty()) {
        if (!fs::is_directory(a.flow_dir)) {
            throw UsageError("flow directory not found: " + a.flow_dir);
        }
        source = std::make_unique<FlowDirectorySource>(a.flow_dir);
    } else if (a.source == "ground-truth") {
        source = std::make_unique<GroundTruthFlowSource>();
    } else if (a.source.rfind("oracle:", 0) == 0) {
        double rho = 0;
        if (!io::parse_number(a.source.substr(7), rho)) {
            throw UsageError("bad oracle reach in " + a.source);
        }
        source = std::make_unique<EdgeOracleFlowSource>(rho);
    } else {
        throw UsageError(fmt::format("unknown flow source '{}' (ground-truth or oracle:<rho>)", a.source));
    }
    if (tag.empty()) {
        tag = a.flow_dir.empty() ? a.source : fs::path(a.flow_dir).filename().string();
    }

    ordered_json config = {{"command", "aperture"}, {"flow_dir", a.flow_dir}, {"source", a.source},
                           {"scales", scales},      {"levels", a.levels},     {"magnitude", a.magnitude},
                           {"tag", tag}};
    const fs::path dir = prepare_run_dir(a.out, "aperture", config);
    const ApertureTable table = run_sweep(scales, dirs, levels, *source, tag, a.magnitude);
    {
        std::ofstream csv(dir / "aperture.csv");
        write_aperture_csv(table, csv);
    }
    if (a.render) {
        for (const double s : scales) {
            for (const auto d : dirs) {
                for (const auto l : levels) {
                    const auto c = make_aperture_case(s, d, a.magnitude);
                    save_ppm(flow_to_color(source->flow(c, l), a.magnitude),
                             (dir / fmt::format("flow_{:g}_{}_{}.ppm", s, to_string(d), to_string(l))).string());
                }
            }
        }
    }
    // First scale per level whose mean error reaches half the motion magnitude.
    ordered_json knees = ordered_json::object();
    for (const auto l : levels) {
        ordered_json knee = nullptr;
        for (const auto& r : table.rows) {
            if (r.level == l && r.mean >= a.magnitude / 2.0) {
                knee = r.scale;
                break;
            }
        }
        knees[to_string(l)] = knee;
    }
    ordered_json summary = {{"tag", tag}, {"measurements", table.measurements}, {"rows", table.rows.size()},
                            {"knee_scale", knees}};
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    std::cout << fmt::format("{} measurements, {} rows -> {}\n", table.measurements, table.rows.size(), dir.string());
    return 0;
}

// --- motion ----------------------------------------------------------------------

struct MotionArgs {
    std::string kind;
    std::string spec;
    std::string translation_spec;
    std::string extent = "383x383x2";
    std::string provider;
    std::string manifest;
    std::string responses;
    std::string translation_manifest;
    std::string translation_responses;
    std::size_t batch = 4096;
    std::string out;
};

int cmd_motion(const MotionArgs& a) {
    const MotionKind kind = parse_motion_kind(a.kind);
    if (kind == MotionKind::translation) {
        throw UsageError("motion --kind must be dilation or rotation");
    }
    const bool files = !a.manifest.empty() || !a.responses.empty() || !a.translation_manifest.empty() ||
                       !a.translation_responses.empty();
    if (a.provider.empty() == !files) {
        throw UsageError("motion needs either --provider or the manifest and response files");
    }

    std::optional<MotionGrid> grid;
    ResponseTable trans;
    ResponseTable mot;
    ordered_json config = {{"command", "motion"}, {"kind", a.kind}};
    if (!a.provider.empty()) {
        const Extent extent = parse_extent(a.extent);
        const auto provider = make_provider(a.provider, extent);
        grid = build_motion_grid(spec_or_preset(a.spec, kind), kind, extent);
        const auto tset = stimulus_set_from_grid(spec_or_preset(a.translation_spec, MotionKind::translation), extent);
        config["extent"] = a.extent;
        config["provider"] = a.provider;
        config["translation_grid_spec"] = tset.description;
        trans = run_stimulus_set(*provider, tset, a.batch);
        mot = run_motion_gridsearch(*provider, *grid, a.batch);
    } else {
        for (const auto* p : {&a.manifest, &a.responses, &a.translation_manifest, &a.translation_responses}) {
            if (p->empty()) {
                throw UsageError(
                    "motion needs --manifest, --responses, --translation-manifest and --translation-responses together");
            }
            require_file(*p, "input file");
        }
        const auto mset = load_manifest(a.manifest);
        if (mset.kind != kind) {
            throw UsageError("motion manifest kind does not match --kind");
        }
        grid = build_motion_grid(parse_grid_spec(mset.description), kind, mset.extent);
        if (grid->set.hash != mset.hash) {
            throw HashMismatch("motion manifest does not match the admissible set of its grid");
        }
        const auto tset = load_manifest(a.translation_manifest);
        trans = ingest_responses(a.translation_responses, tset);
        mot = ingest_responses(a.responses, grid->set, trans.filter_count());
        config["extent"] = to_string(mset.extent);
        config["manifest"] = a.manifest;
        config["responses"] = a.responses;
        config["translation_manifest"] = a.translation_manifest;
        config["translation_responses"] = a.translation_responses;
    }
    config["grid_spec"] = grid->spec.canonical();
    config["grid_hash"] = format_hash(grid->set.hash);
    const fs::path dir = prepare_run_dir(a.out, "motion", config);
    {
        std::ofstream audit(dir / "exclusions.csv");
        write_exclusion_audit(*grid, audit);
    }
    std::string csv = motion_csv_header() + "\n";
    std::size_t active = 0;
    std::size_t dominant = 0;
    for (std::size_t f = 0; f < trans.filter_count(); ++f) {
        const auto c = compare_motion_preference(trans, mot, *grid, f);
        if (!(c.translation_r0 > 0.0)) {
            continue;
        }
        ++active;
        dominant += c.dominates ? 1 : 0;
        csv += to_csv_row(c) + "\n";
    }
    write_file(dir / "motion.csv", csv);
    ordered_json summary = {{"kind", a.kind},
                            {"admissible_stimuli", grid->set.stimuli.size()},
                            {"excluded_stimuli", grid->excluded.size()},
                            {"active_filters", active},
                            {"dominant_filters", dominant},
                            {"dominant_fraction", active ? double(dominant) / double(active) : 0.0}};
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    std::cout << fmt::format("{}: {} of {} active filters prefer {} -> {}\n", a.kind, dominant, active, a.kind,
                             dir.string());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probe spatiotemporal filter banks with parametrised moving waves"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (default: hardware concurrency)")->check(CLI::NonNegativeNumber);

    const std::vector<std::string> kinds{"translation", "dilation", "rotation"};

    GridArgs ga;
    auto* grid = app.add_subcommand("grid", "Run or export a gridsearch");
    grid->add_option("--kind", ga.kind, "translation, dilation or rotation")->required()->check(CLI::IsMember(kinds));
    grid->add_option("--spec", ga.spec, "Grid spec file (default: the preset for the kind)");
    grid->add_option("--extent", ga.extent, "Stimulus extent WxHxT");
    grid->add_option("--provider", ga.provider, "synthetic:<bank.csv>");
    grid->add_option("--export-manifest", ga.export_manifest, "Write the stimulus manifest to this file");
    grid->add_option("--batch", ga.batch, "Stimuli per provider call")->check(CLI::PositiveNumber);
    grid->add_option("--out", ga.out, "Run directory");

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "Profiles, Gabor fits, bandwidths and summary statistics");
    fit->add_option("--manifest", fa.manifest, "Translation grid manifest")->required();
    fit->add_option("--responses", fa.responses, "Grid response CSV")->required();
    fit->add_option("--filters", fa.filters, "Filter count (default: inferred)");
    fit->add_option("--provider", fa.provider, "synthetic:<bank.csv> for the profile sweeps");
    fit->add_option("--profile-manifest", fa.profile_manifest, "Manifest of recorded profile stimuli");
    fit->add_option("--profile-responses", fa.profile_responses, "Responses to the profile manifest");
    fit->add_option("--export-profile-manifest", fa.export_profile_manifest,
                    "Write the profile stimuli of all active filters and stop");
    fit->add_option("--out", fa.out, "Run directory");

    PhaseArgs pa;
    auto* phase = app.add_subcommand("phase", "Phase-difference and response maps of a filter volume");
    phase->add_option("--builtin", pa.builtin, "Simulated filter")
        ->check(CLI::IsMember({"translation", "dilation", "rotation", "occlusion"}));
    phase->add_option("--filter", pa.filter, "Filter volume (.stvl)");
    phase->add_option("--time-origin", pa.time_origin, "Frame playing t = 0 for the waves");
    phase->add_option("--mask", pa.mask, "Power mask as a fraction of the maximum")->check(CLI::Range(0.0, 0.999));
    phase->add_option("--lobe-threshold", pa.lobe_threshold, "Lobe level as a fraction of the maximum response")
        ->check(CLI::Range(1e-9, 1.0));
    phase->add_option("--plane", pa.plane, "Raster plane")->check(CLI::IsMember({"xy", "xt", "yt"}));
    phase->add_option("--fixed", pa.fixed, "Lattice index of the axis held fixed in the rasters");
    phase->add_option("--out", pa.out, "Run directory");

    ApertureArgs aa;
    auto* aperture = app.add_subcommand("aperture", "Centre-of-bar EPE versus bar scale");
    aperture->add_option("--flow-dir", aa.flow_dir, "Directory of bar_<scale>_<direction>_<level>.flo maps");
    aperture->add_option("--source", aa.source, "ground-truth or oracle:<rho>");
    aperture->add_option("--scales", aa.scales, "start:stop:step or a comma list");
    aperture->add_option("--levels", aa.levels, "Flow levels")->delimiter(',')->check(CLI::IsMember({"full", "f2", "f4", "f6"}));
    aperture->add_option("--magnitude", aa.magnitude, "Motion magnitude in pixels")->check(CLI::NonNegativeNumber);
    aperture->add_option("--tag", aa.tag, "Provider tag in the output table");
    aperture->add_option("--export-bars", aa.export_bars, "Write bar sequences and ground-truth flow here");
    aperture->add_flag("--render", aa.render, "Write colour-coded flow rasters");
    aperture->add_option("--out", aa.out, "Run directory");

    MotionArgs ma;
    auto* motion = app.add_subcommand("motion", "Dilation or rotation preference against translation");
    motion->add_option("--kind", ma.kind, "dilation or rotation")->required()->check(CLI::IsMember(kinds));
    motion->add_option("--spec", ma.spec, "Motion grid spec (default: preset)");
    motion->add_option("--translation-spec", ma.translation_spec, "Translation grid spec (default: preset)");
    motion->add_option("--extent", ma.extent, "Stimulus extent WxHxT");
    motion->add_option("--provider", ma.provider, "synthetic:<bank.csv>");
    motion->add_option("--manifest", ma.manifest, "Motion grid manifest");
    motion->add_option("--responses", ma.responses, "Motion grid responses");
    motion->add_option("--translation-manifest", ma.translation_manifest, "Translation grid manifest");
    motion->add_option("--translation-responses", ma.translation_responses, "Translation grid responses");
    motion->add_option("--batch", ma.batch, "Stimuli per provider call")->check(CLI::PositiveNumber);
    motion->add_option("--out", ma.out, "Run directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    std::optional<tbb::global_control> limit;
    if (threads > 0) {
        limit.emplace(tbb::global_control::max_allowed_parallelism, static_cast<std::size_t>(threads));
    }

    try {
        if (*grid) return cmd_grid(ga);
        if (*fit) return cmd_fit(fa);
        if (*phase) return cmd_phase(pa);
        if (*aperture) return cmd_aperture(aa);
        if (*motion) return cmd_motion(ma);
    } catch (const UsageError& e) {
        std::cerr << "stprobe: " << e.what() << "\n";
        return kExitUsage;
    } catch (const InvalidArgument& e) {
        std::cerr << "stprobe: " << e.what() << "\n";
        return kExitUsage;
    } catch (const MissingFlowMap& e) {
        std::cerr << "stprobe: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "stprobe: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}
