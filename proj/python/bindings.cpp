#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nonhyp/cli.hpp"
#include "nonhyp/horseshoe.hpp"
#include "nonhyp/lyapunov.hpp"
#include "nonhyp/map_system.hpp"
#include "nonhyp/shadowing.hpp"
#include "nonhyp/tangency.hpp"

namespace py = pybind11;
using namespace nonhyp;

namespace {

// JSON crosses the boundary as text; Python's json module does the rest.
py::object from_json(const cli::Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

cli::Json to_json(const py::object& o) {
    return cli::Json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::list records(const ConditionReport& rep) {
    py::list out;
    for (const auto& r : rep.records) {
        py::dict d;
        d["name"] = r.name;
        d["pass"] = r.pass;
        d["margin"] = r.margin;
        d["samples"] = r.samples;
        d["status"] = r.status;
        d["values"] = r.values;
        out.append(d);
    }
    return out;
}

Matrix rows_to_matrix(const std::vector<Point>& pts) {
    Matrix m(static_cast<Eigen::Index>(pts.size()), pts.empty() ? 0 : pts.front().size());
    for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
    return m;
}

std::vector<Point> matrix_to_rows(const Matrix& m) {
    std::vector<Point> pts;
    for (Eigen::Index i = 0; i < m.rows(); ++i) pts.push_back(m.row(i).transpose());
    return pts;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Shadowing, horseshoes and tangency flattening near nonhyperbolic fixed points";

    // Translators are tried newest first, so the base class goes first.
    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
    py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

    py::class_<MapSystem>(m, "MapSystem")
        .def_readonly("dimension", &MapSystem::dimension)
        .def_readonly("stable_split", &MapSystem::stable_split)
        .def_readonly("builtin", &MapSystem::builtin)
        .def("forward", [](const MapSystem& s, const Point& p) { return eval_forward(s, p); })
        .def("jacobian", [](const MapSystem& s, const Point& p) { return eval_jacobian(s, p); })
        .def("source", &MapSystem::forward_source);

    m.def("builtin_map", &builtin_map, py::arg("name"), py::arg("params") = std::map<std::string, double>{});
    m.def("parse_map", &parse_map, py::arg("source"), py::arg("params") = std::map<std::string, double>{},
          py::arg("stable_split") = std::nullopt);
    m.def("linear_diagonal", &linear_diagonal, py::arg("multipliers"), py::arg("stable_split"));

    m.def(
        "check_conditions",
        [](const MapSystem& sys, double delta, double K, double alpha, double region, double epsilon, std::size_t samples,
           std::uint64_t seed) {
            const LyapunovPair pair = LyapunovPair::coordinate_split(sys.dimension, sys.stable_split);
            RegionSpec spec;
            spec.delta = delta;
            spec.K = K;
            spec.alpha = alpha;
            spec.neighborhood = Box::symmetric(sys.dimension, region);
            ConditionReport rep;
            rep.records.push_back(check_C1(pair, spec, epsilon, samples, stream_seed(seed, "C1")));
            rep.append(certify_C3_C4_C9(pair, spec));
            rep.append(check_C5_C6_C7_C8(sys, pair, spec, samples, stream_seed(seed, "sampled")));
            return records(rep);
        },
        py::arg("map"), py::arg("delta"), py::arg("K") = 2.0, py::arg("alpha") = 1.0, py::arg("region") = 0.2,
        py::arg("epsilon") = 0.1, py::arg("samples") = 10000, py::arg("seed") = 0);

    m.def(
        "generate_pseudotrajectory",
        [](const MapSystem& sys, const Point& p0, int steps, double d, const std::string& noise, std::uint64_t seed) {
            return rows_to_matrix(generate_pseudotrajectory(sys, p0, steps, d, parse_noise_model(noise), seed).points);
        },
        py::arg("map"), py::arg("p0"), py::arg("steps"), py::arg("d"), py::arg("noise") = "uniform-box",
        py::arg("seed") = 0);

    m.def(
        "find_shadow_point",
        [](const MapSystem& sys, const Matrix& points, double epsilon) {
            PseudoTrajectory traj;
            traj.points = matrix_to_rows(points);
            traj.declared_d = measure_pseudotrajectory(sys, traj.points);
            const ShadowResult r = find_shadow_point(sys, traj, epsilon);
            py::dict d;
            d["shadow_point"] = r.shadow_point;
            d["deviation"] = r.deviation;
            d["residual"] = r.residual;
            d["iterations"] = r.iterations;
            d["converged"] = r.converged;
            return d;
        },
        py::arg("map"), py::arg("points"), py::arg("epsilon"));

    m.def(
        "orbit_deviation",
        [](const MapSystem& sys, const Point& r, const Matrix& points) { return orbit_deviation(sys, r, matrix_to_rows(points)); },
        py::arg("map"), py::arg("r"), py::arg("points"));

    py::class_<ChartedSystem>(m, "ChartedSystem")
        .def_readwrite("k", &ChartedSystem::k)
        .def_readonly("a0", &ChartedSystem::a0)
        .def_readonly("b0", &ChartedSystem::b0)
        .def_readonly("name", &ChartedSystem::name)
        .def("apply", py::overload_cast<const Point&, int>(&ChartedSystem::apply, py::const_), py::arg("point"),
             py::arg("steps") = 1)
        .def("as_map", &ChartedSystem::as_map_system);

    m.def(
        "homoclinic_system",
        [](double stable, double perturb_scale) {
            HomoclinicParams p;
            p.stable = stable;
            p.perturb_scale = perturb_scale;
            return builtin_homoclinic_system(p);
        },
        py::arg("stable") = 0.0, py::arg("perturb_scale") = 0.0);

    m.def(
        "auto_tune_k",
        [](ChartedSystem& sys, std::uint64_t seed) {
            sys.k = auto_tune_k(sys, 8, seed).k;
            return sys.k;
        },
        py::arg("system"), py::arg("seed") = 0, "Tunes the system's iterate count in place and returns it.");

    m.def(
        "verify_contraction",
        [](const ChartedSystem& sys, std::size_t trials, std::uint64_t seed) {
            const ContractionReport r = verify_contraction(sys, trials, seed);
            py::dict d;
            d["max_ratio"] = r.max_ratio;
            d["pass"] = r.pass;
            py::list branches;
            for (const auto& b : r.branches) {
                py::dict e;
                e["from"] = b.from;
                e["to"] = b.to;
                e["realizable"] = b.realizable;
                e["max_ratio"] = b.max_ratio;
                e["pairs"] = b.pairs;
                branches.append(e);
            }
            d["branches"] = branches;
            return d;
        },
        py::arg("system"), py::arg("trials") = 100, py::arg("seed") = 0);

    m.def(
        "find_periodic_point",
        [](const ChartedSystem& sys, const std::string& word) {
            const SymbolWord w(word);
            const PeriodicPoint p = find_periodic_point(sys, w, periodic_disk(sys, w).disk);
            py::dict d;
            d["point"] = p.point;
            d["orbit"] = rows_to_matrix(p.orbit);
            d["itinerary"] = p.itinerary;
            d["residual"] = p.residual;
            return d;
        },
        py::arg("system"), py::arg("word"));

    m.def("primitive_words", [](std::size_t len) {
        std::vector<std::string> out;
        for (const auto& w : primitive_words(len)) out.push_back(w.letters());
        return out;
    });

    m.def(
        "coding_fit",
        [](const ChartedSystem& sys, int max_prefix) {
            const CodingFit f = coding_fit(sys, max_prefix);
            py::dict d;
            d["prefix_lengths"] = f.prefix_lengths;
            d["distances"] = f.distances;
            d["slope"] = f.slope;
            d["bound_holds"] = f.bound_holds;
            return d;
        },
        py::arg("system"), py::arg("max_prefix") = 8);

    m.def(
        "track_inclination",
        [](const MapSystem& sys, const Point& r, const Point& v, int steps, double kappa_floor) {
            const InclinationReport rep = track_inclination(sys, r, v, steps, std::nullopt, kappa_floor);
            py::dict d;
            d["lambda"] = rep.lambda;
            d["bound"] = rep.bound;
            d["max_excess"] = rep.max_excess;
            d["pass"] = rep.pass;
            return d;
        },
        py::arg("map"), py::arg("r"), py::arg("v"), py::arg("steps"), py::arg("kappa_floor") = 0.0);

    m.def("z_form", &z_form, py::arg("k"), py::arg("z"), py::arg("v"));

    m.def(
        "matrix_log",
        [](const Matrix& C) {
            const CenterGenerator g = real_matrix_log(C);
            py::dict d;
            d["power"] = g.power;
            d["P"] = g.P;
            d["chi"] = g.chi;
            d["K"] = g.K;
            d["exp_check"] = g.exp_check;
            return d;
        },
        py::arg("C"));

    m.def(
        "flatten_tangency",
        [](const std::vector<double>& stable, const std::vector<double>& center, const std::string& g,
           std::optional<std::function<double(double)>> delta, std::vector<double> radii) {
            std::vector<double> mult = stable;
            mult.insert(mult.end(), center.begin(), center.end());
            PipelineOptions opt;
            if (delta) opt.delta = *delta;
            if (!radii.empty()) opt.radii = radii;
            const PipelineResult res = quasitransverse_pipeline(linear_diagonal(mult, static_cast<int>(stable.size())),
                                                                parse_tangency(g, static_cast<int>(center.size())), opt);
            py::dict d;
            d["rho"] = res.rho;
            d["flattening_pass"] = res.flattening.pass();
            py::list rows;
            for (const auto& rf : res.flatness.radii) {
                py::dict e;
                e["radius"] = rf.radius;
                e["identity_distance"] = rf.identity_distance;
                e["tau_min"] = rf.tau_min;
                e["tau_max"] = rf.tau_max;
                e["g_ratio"] = rf.g_ratio;
                rows.append(e);
            }
            d["radii"] = rows;
            d["identity_decreasing"] = res.flatness.identity_decreasing;
            d["tau_in_unit_interval"] = res.flatness.tau_in_unit_interval;
            d["r0"] = res.flatness.r0;
            d["disk_admissible"] = res.disk_admissible;
            d["transformed"] = res.transformed;
            return d;
        },
        py::arg("stable"), py::arg("center"), py::arg("g"), py::arg("delta") = std::nullopt,
        py::arg("radii") = std::vector<double>{});

    m.def(
        "run_experiment",
        [](const std::string& subcommand, const py::object& config) {
            const cli::Json values = config.is_none() ? cli::Json::object() : to_json(config);
            cli::RunManifest manifest;
            {
                py::gil_scoped_release release;
                manifest = cli::run(cli::resolve_config(subcommand, values, cli::Json::object()));
            }
            py::object out = from_json(manifest.to_json());
            out["path"] = manifest.path.string();
            return out;
        },
        py::arg("subcommand"), py::arg("config") = py::none(),
        "Runs a subcommand with a config dict (keys as in the command line flags) and returns its manifest.");

    m.def("verify_manifest", [](const std::string& path) {
        const cli::VerifyReport r = cli::verify_manifest(path);
        py::dict d;
        d["ok"] = r.ok;
        d["mismatched"] = r.mismatched;
        d["missing"] = r.missing;
        return d;
    });

    m.attr("__version__") = cli::kToolVersion;
}
