#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stprobe/aperture.hpp"
#include "stprobe/fitting.hpp"
#include "stprobe/gabor.hpp"
#include "stprobe/grid.hpp"
#include "stprobe/motion.hpp"
#include "stprobe/probe.hpp"
#include "stprobe/spectral.hpp"
#include "stprobe/stimuli.hpp"

namespace py = pybind11;
using namespace stprobe;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Volumes cross the boundary as (T, H, W) float64 arrays.
Array to_numpy(const Volume& v) {
    Array a({v.frames(), v.height(), v.width()});
    std::copy(v.samples().begin(), v.samples().end(), a.mutable_data());
    return a;
}

Volume from_numpy(const Array& a) {
    if (a.ndim() != 3) {
        throw InvalidArgument("volumes are 3-D arrays shaped (T, H, W)");
    }
    Volume v(Extent{static_cast<int>(a.shape(2)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0))});
    std::copy(a.data(), a.data() + a.size(), v.samples().begin());
    return v;
}

py::array_t<std::complex<double>> spectrum_array(const Spectrum& s) {
    const auto& e = s.extent();
    py::array_t<std::complex<double>> a({e.frames, e.height, e.width});
    std::copy(s.coefficients().begin(), s.coefficients().end(), a.mutable_data());
    return a;
}

}  // namespace

PYBIND11_MODULE(_stprobe, m) {
    m.doc() = "Spatiotemporal filter probing toolkit";

    py::register_exception<Error>(m, "Error");
    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_IOError);

    py::class_<Extent>(m, "Extent")
        .def(py::init<int, int, int>(), py::arg("width") = 383, py::arg("height") = 383, py::arg("frames") = 2)
        .def_readwrite("width", &Extent::width)
        .def_readwrite("height", &Extent::height)
        .def_readwrite("frames", &Extent::frames)
        .def("size", &Extent::size)
        .def("__eq__", [](const Extent& a, const Extent& b) { return a == b; })
        .def("__repr__", [](const Extent& e) { return "Extent(" + to_string(e) + ")"; });

    py::enum_<MotionKind>(m, "MotionKind")
        .value("translation", MotionKind::translation)
        .value("dilation", MotionKind::dilation)
        .value("rotation", MotionKind::rotation);

    py::class_<Stimulus>(m, "Stimulus")
        .def(py::init([](MotionKind kind, double F, double theta, double motion, double phi) {
                 return Stimulus{kind, F, theta, motion, phi};
             }),
             py::arg("kind") = MotionKind::translation, py::arg("F") = 1.0 / 32.0, py::arg("theta") = 0.0,
             py::arg("motion") = 0.0, py::arg("phi") = 0.0)
        .def_readwrite("kind", &Stimulus::kind)
        .def_readwrite("F", &Stimulus::F)
        .def_readwrite("theta", &Stimulus::theta)
        .def_readwrite("motion", &Stimulus::motion)
        .def_readwrite("phi", &Stimulus::phi);

    m.def(
        "render",
        [](const Stimulus& s, const Extent& e, double time_origin) {
            return to_numpy(render(s, e, {.time_origin = time_origin}));
        },
        py::arg("stimulus"), py::arg("extent"), py::arg("time_origin") = 0.0,
        "Wave volume as a (T, H, W) array.");
    m.def("dilation_alias_check", &dilation_alias_check, py::arg("h"), py::arg("lambda0"), py::arg("x_max"));
    m.def("rotation_alias_check", &rotation_alias_check, py::arg("omega"), py::arg("m_max"), py::arg("lambda0"));

    // --- grids -------------------------------------------------------------------
    py::class_<GridSpec>(m, "GridSpec")
        .def_property_readonly("kind", [](const GridSpec& g) { return g.kind; })
        .def("size", &GridSpec::size)
        .def("shape", &GridSpec::shape)
        .def("at", &GridSpec::at)
        .def("canonical", &GridSpec::canonical)
        .def("hash", [](const GridSpec& g) { return format_hash(g.hash()); });
    m.def("parse_grid_spec", [](const std::string& text) { return parse_grid_spec(text); });
    m.def("preset", &preset_for, py::arg("kind"));
    m.def(
        "manifest_text",
        [](const GridSpec& g, const Extent& e) {
            std::ostringstream out;
            export_manifest(g, e, out);
            return out.str();
        },
        py::arg("spec"), py::arg("extent"));

    // --- Gabor model -----------------------------------------------------------------
    py::class_<GaborParams>(m, "GaborParams")
        .def(py::init([](double F0, double theta0, double ft0, double phi0, double sx, double sy, double st, double K,
                         double b) { return GaborParams{F0, theta0, ft0, phi0, sx, sy, st, K, b}; }),
             py::arg("F0") = 1.0 / 64.0, py::arg("theta0") = 0.0, py::arg("ft0") = 0.0, py::arg("phi0") = 0.0,
             py::arg("sigma_x") = 16.0, py::arg("sigma_y") = 16.0, py::arg("sigma_t") = 1.0, py::arg("K") = 1.0,
             py::arg("b") = 0.0)
        .def_readwrite("F0", &GaborParams::F0)
        .def_readwrite("theta0", &GaborParams::theta0)
        .def_readwrite("ft0", &GaborParams::ft0)
        .def_readwrite("phi0", &GaborParams::phi0)
        .def_readwrite("sigma_x", &GaborParams::sigma_x)
        .def_readwrite("sigma_y", &GaborParams::sigma_y)
        .def_readwrite("sigma_t", &GaborParams::sigma_t)
        .def_readwrite("K", &GaborParams::K)
        .def_readwrite("b", &GaborParams::b)
        .def("preferred_velocity", &GaborParams::preferred_velocity);
    m.def(
        "gabor_kernel",
        [](const GaborParams& g, const Extent& e, double t0) { return to_numpy(gabor_kernel(g, e, t0)); },
        py::arg("params"), py::arg("extent"), py::arg("time_origin") = 0.0);
    m.def(
        "unit_response",
        [](const GaborParams& g, const Array& stimulus, double t0) { return unit_response(g, from_numpy(stimulus), t0); },
        py::arg("params"), py::arg("stimulus"), py::arg("time_origin") = 0.0);

    py::class_<Bandwidths>(m, "Bandwidths")
        .def_readonly("spatial_octaves", &Bandwidths::spatial_octaves)
        .def_readonly("orientation_deg", &Bandwidths::orientation_deg)
        .def_readonly("temporal_cpf", &Bandwidths::temporal_cpf);
    m.def(
        "half_magnitude_bandwidths",
        [](const GaborParams& g, double r0, const Extent& e) { return half_magnitude_bandwidths(g, r0, e); },
        py::arg("params"), py::arg("peak_response"), py::arg("extent"));

    // --- probing and fitting -------------------------------------------------------------
    py::class_<SyntheticBank>(m, "SyntheticBank")
        .def(py::init<std::vector<GaborParams>, const Extent&>(), py::arg("filters"), py::arg("extent"))
        .def("filter_count", &SyntheticBank::filter_count)
        .def(
            "respond",
            [](const SyntheticBank& b, const std::vector<Stimulus>& batch) {
                return b.respond(std::span<const Stimulus>(batch));
            },
            py::arg("stimuli"), "Activation matrix, rows = stimuli, columns = filters.");

    py::class_<FitResult>(m, "FitResult")
        .def_readonly("params", &FitResult::params)
        .def_readonly("L", &FitResult::L)
        .def_readonly("L_norm", &FitResult::L_norm)
        .def_readonly("converged", &FitResult::converged)
        .def_readonly("iterations", &FitResult::iterations);

    m.def(
        "probe_and_fit",
        [](const std::vector<GaborParams>& bank, const GridSpec& spec, const Extent& e) {
            const SyntheticBank provider(bank, e);
            const auto set = stimulus_set_from_grid(spec, e);
            py::gil_scoped_release release;
            const auto table = run_stimulus_set(provider, set);
            std::vector<PeakResponse> peaks;
            for (const auto f : active_filters(table)) {
                peaks.push_back(find_peak(table, spec, f));
            }
            const auto profiles = extract_profiles(provider, peaks);
            std::vector<FitResult> fits;
            for (std::size_t i = 0; i < peaks.size(); ++i) {
                fits.push_back(fit_gabor(profiles[i], peaks[i], e));
            }
            return fits;
        },
        py::arg("bank"), py::arg("spec"), py::arg("extent"),
        "Gridsearch, profiles and Gabor fits for the active filters of a synthetic bank.");

    // --- spectral ---------------------------------------------------------------------------
    m.def(
        "dft3", [](const Array& v) { return spectrum_array(dft3(from_numpy(v))); }, py::arg("volume"),
        "3-D DFT of a (T, H, W) array.");
    m.def("phase_difference", &phase_difference, py::arg("p"), py::arg("q"));
    m.def(
        "simulate_filter",
        [](const std::string& kind) { return to_numpy(simulate_filter(parse_simulated_filter(kind))); },
        py::arg("kind"));
    m.def(
        "phase_map_summary",
        [](const Array& filter, double time_origin) {
            const Volume v = from_numpy(filter);
            const auto waves = lattice_waves(v.extent(), full_lattice(v.extent()));
            const auto map = phase_map(v, waves, {.time_origin = time_origin});
            py::dict d;
            d["entries"] = map.entries.size();
            d["out_of_phase_fraction"] = map.out_of_phase_fraction();
            d["lobes"] = superthreshold_lobes(map, 0.1).size();
            return d;
        },
        py::arg("filter"), py::arg("time_origin") = kSimulationOrigin);

    // --- motion -------------------------------------------------------------------------------
    m.def(
        "motion_grid_counts",
        [](const GridSpec& spec, const Extent& e) {
            const auto g = build_motion_grid(spec, spec.kind, e);
            return py::make_tuple(g.set.stimuli.size(), g.excluded.size());
        },
        py::arg("spec"), py::arg("extent") = kDefaultExtent, "(admissible, excluded) tuple counts.");

    // --- aperture --------------------------------------------------------------------------------
    m.def("epe", &epe, py::arg("est"), py::arg("gt"));
    m.def(
        "oracle_sweep",
        [](const std::vector<double>& scales, double rho) {
            const EdgeOracleFlowSource src(rho);
            const auto t = run_sweep(scales, {BarDirection::up_right, BarDirection::down_left},
                                     {kNetworkLevels.begin(), kNetworkLevels.end()}, src);
            std::vector<std::tuple<double, std::string, double>> rows;
            for (const auto& r : t.rows) {
                rows.emplace_back(r.scale, to_string(r.level), r.mean);
            }
            return rows;
        },
        py::arg("scales"), py::arg("rho"), "(scale, level, mean EPE) rows for the edge oracle.");
    m.def(
        "read_flo",
        [](const std::string& path) {
            const auto f = load_flo(path);
            py::array_t<float> a({f.height, f.width, 2});
            auto* p = a.mutable_data();
            for (std::size_t i = 0; i < f.u.size(); ++i) {
                p[2 * i] = f.u[i];
                p[2 * i + 1] = f.v[i];
            }
            return a;
        },
        py::arg("path"), "Flow as an (H, W, 2) float32 array.");
    m.def(
        "write_flo",
        [](const std::string& path, const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
            if (a.ndim() != 3 || a.shape(2) != 2) {
                throw InvalidArgument("flow arrays are shaped (H, W, 2)");
            }
            FlowMap f;
            f.height = static_cast<int>(a.shape(0));
            f.width = static_cast<int>(a.shape(1));
            const float* p = a.data();
            for (py::ssize_t i = 0; i < a.shape(0) * a.shape(1); ++i) {
                f.u.push_back(p[2 * i]);
                f.v.push_back(p[2 * i + 1]);
            }
            save_flo(f, path);
        },
        py::arg("path"), py::arg("flow"));
}
