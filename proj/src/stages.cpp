#include "nonhyp/stages.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nonhyp/expr.hpp"
#include "nonhyp/lyapunov.hpp"
#include "nonhyp/parallel.hpp"
#include "nonhyp/shadowing.hpp"
#include "nonhyp/tangency.hpp"

namespace nonhyp::cli {

namespace fs = std::filesystem;

// ------------------------------------------------------------------- helpers

namespace {

const std::string kCsvHeader = "# schema_version: 1\n";

std::string num(double v) { return format_number(v); }

Json vec_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Json mat_json(const Matrix& m) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vec_json(m.row(i).transpose()));
    return out;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json report_header(const std::string& subcommand) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["subcommand"] = subcommand;
    return j;
}

std::int64_t positive_int(const Json& o, const std::string& key) {
    const auto v = o.at(key).get<std::int64_t>();
    if (v < 1) throw ConfigError("'" + key + "' must be at least 1");
    return v;
}

double positive_number(const Json& o, const std::string& key) {
    const double v = o.at(key).get<double>();
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("'" + key + "' must be positive");
    return v;
}

std::vector<double> positive_list(const Json& o, const std::string& key) {
    auto v = o.at(key).get<std::vector<double>>();
    if (v.empty()) throw ConfigError("'" + key + "' must not be empty");
    for (double x : v)
        if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError("'" + key + "' entries must be positive");
    return v;
}

std::string read_text(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot read " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

HomoclinicParams load_homoclinic_params(const std::string& spec) {
    HomoclinicParams p;
    if (spec == "builtin") return p;
    Json j;
    try {
        j = Json::parse(read_text(spec));
    } catch (const Json::exception& e) {
        throw ConfigError("system file is not valid JSON: " + std::string(e.what()));
    }
    if (!j.is_object()) throw ConfigError("system file must hold a JSON object");
    for (const auto& [key, v] : j.items()) {
        const auto number = [&](double& slot) {
            if (!v.is_number()) throw ConfigError("system key '" + key + "' must be a number");
            slot = v.get<double>();
        };
        if (key == "schema_version") {
            if (!v.is_number_integer() || v.get<int>() != kSchemaVersion) throw ConfigError("unsupported system schema_version");
        } else if (key == "kind") {
            if (v != "homoclinic") throw ConfigError("system kind must be 'homoclinic'");
        } else if (key == "stable") number(p.stable);
        else if (key == "gamma") number(p.gamma);
        else if (key == "y_p") number(p.y_p);
        else if (key == "eps_y0") number(p.eps_y0);
        else if (key == "eps_z0") number(p.eps_z0);
        else if (key == "eps_y1") number(p.eps_y1);
        else if (key == "eps_z1") number(p.eps_z1);
        else if (key == "perturb_scale") number(p.perturb_scale);
        else if (key == "k") {
            if (!v.is_number_integer()) throw ConfigError("system key 'k' must be an integer");
            p.k = v.get<int>();
        } else if (key == "perturb_y" || key == "perturb_z") {
            if (!v.is_string()) throw ConfigError("system key '" + key + "' must be a string");
            (key == "perturb_y" ? p.perturb_y : p.perturb_z) = v.get<std::string>();
        } else if (key == "source") {
            // provenance note written by the tangency stage
        } else {
            throw ConfigError("unknown system key '" + key + "'");
        }
    }
    return p;
}

}  // namespace

fs::path sidecar(const fs::path& out, const std::string& suffix) {
    fs::path p = out;
    p.replace_extension(suffix);
    return p;
}

MapSystem load_map_spec(const std::string& spec) {
    if (spec.rfind("builtin:", 0) == 0) return builtin_map(spec.substr(8), {});
    if (!fs::exists(spec)) throw ConfigError("map '" + spec + "' is neither builtin:<name> nor an existing file");
    return load_map_file(spec);
}

ChartedSystem load_charted_system(const std::string& spec) {
    return builtin_homoclinic_system(load_homoclinic_params(spec));
}

// ---------------------------------------------------------------- conditions

StageResult run_conditions_stage(const Json& o, std::uint64_t seed, const fs::path& out) {
    const MapSystem sys = load_map_spec(o.at("map").get<std::string>());
    const auto deltas = positive_list(o, "delta");
    const double K = positive_number(o, "K"), alpha = positive_number(o, "alpha");
    const double half = positive_number(o, "region"), eps = positive_number(o, "epsilon");
    const auto samples = static_cast<std::size_t>(positive_int(o, "samples"));
    if (!(K > 1.0)) throw ConfigError("'K' must exceed 1");

    const LyapunovPair pair = LyapunovPair::coordinate_split(sys.dimension, sys.stable_split);
    Json rep = report_header("conditions");
    rep["map"] = sys.builtin.empty() ? sys.forward_source() : sys.builtin;
    rep["region_half_width"] = half;
    rep["K"] = K;
    rep["alpha"] = alpha;
    rep["epsilon"] = eps;
    rep["samples"] = samples;
    Json runs = Json::array();
    std::string csv = kCsvHeader + "condition,delta,margin\n";
    bool pass = true;
    std::string failed;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        RegionSpec region;
        region.delta = deltas[i];
        region.K = K;
        region.alpha = alpha;
        region.neighborhood = Box::symmetric(sys.dimension, half);
        ConditionReport cr;
        cr.records.push_back(check_C1(pair, region, eps, samples, stream_seed(seed, "conditions.C1", i)));
        cr.append(certify_C3_C4_C9(pair, region));
        cr.append(check_C5_C6_C7_C8(sys, pair, region, samples, stream_seed(seed, "conditions.sampled", i)));
        const bool ok = cr.all_pass();
        pass = pass && ok;
        for (const auto& r : cr.records) {
            csv += r.name + "," + num(deltas[i]) + "," + num(r.margin) + "\n";
            if (!r.pass && failed.empty()) failed = r.name + " at delta " + num(deltas[i]);
        }
        runs.push_back({{"delta", deltas[i]}, {"pass", ok}, {"records", Json::parse(cr.to_json())}});
    }
    rep["runs"] = runs;
    rep["pass"] = pass;
    return {pass, pass ? "" : "condition failed: " + failed,
            {{out, dump(rep)}, {sidecar(out, ".margins.csv"), csv}}};
}

// -------------------------------------------------------------------- shadow

StageResult run_shadow_stage(const Json& o, std::uint64_t seed, const fs::path& out) {
    const MapSystem sys = load_map_spec(o.at("map").get<std::string>());
    ShadowingExperimentConfig cfg;
    cfg.d_grid = positive_list(o, "d");
    cfg.epsilon_grid = positive_list(o, "epsilon");
    cfg.trials = static_cast<std::size_t>(positive_int(o, "trials"));
    cfg.steps = static_cast<int>(positive_int(o, "steps"));
    cfg.noise = parse_noise_model(o.at("noise").get<std::string>());
    cfg.seed = stream_seed(seed, "shadow");
    const auto cond_samples = o.at("condition-samples").get<std::int64_t>();
    if (cond_samples < 0) throw ConfigError("'condition-samples' must be nonnegative");
    cfg.condition_samples = static_cast<std::size_t>(cond_samples);
    cfg.check_conditions = cond_samples > 0;

    RegionSpec region;
    region.delta = positive_number(o, "delta");
    region.K = positive_number(o, "K");
    if (!(region.K > 1.0)) throw ConfigError("'K' must exceed 1");
    region.neighborhood = Box::symmetric(sys.dimension, positive_number(o, "region"));
    const LyapunovPair pair = LyapunovPair::coordinate_split(sys.dimension, sys.stable_split);

    ShadowingTable table;
    const std::string p0_text = o.at("p0").get<std::string>();
    if (p0_text.empty()) {
        table = shadowing_experiment(sys, pair, region, cfg);
    } else {
        std::vector<double> coords;
        std::istringstream is(p0_text);
        std::string item;
        while (std::getline(is, item, ',')) {
            try {
                std::size_t used = 0;
                coords.push_back(std::stod(item, &used));
                if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw ConfigError("invalid value for 'p0': " + p0_text);
            }
        }
        if (static_cast<int>(coords.size()) != sys.dimension) throw ConfigError("'p0' must have one entry per coordinate");
        const Point p0 = Eigen::Map<const Vector>(coords.data(), static_cast<Eigen::Index>(coords.size()));
        if (cfg.check_conditions)
            table.conditions = check_C5_C6_C7_C8(sys, pair, region, cfg.condition_samples, stream_seed(cfg.seed, "conditions"));
        for (double epsilon : cfg.epsilon_grid) {
            for (double d : cfg.d_grid) {
                struct Slot {
                    bool escaped = false, success = false;
                    double deviation = 0.0;
                    int iterations = 0;
                };
                std::vector<Slot> slots(cfg.trials);
                parallel_for(cfg.trials, [&](std::size_t t) {
                    Slot& s = slots[t];
                    PseudoTrajectory traj;
                    try {
                        traj = generate_pseudotrajectory(sys, p0, cfg.steps, d, cfg.noise, stream_seed(cfg.seed, "trial", t),
                                                         region.neighborhood);
                    } catch (const DomainError&) {
                        s.escaped = true;
                        return;
                    }
                    const ShadowResult r = find_shadow_point(sys, traj, epsilon);
                    s.iterations = r.iterations;
                    s.deviation = orbit_deviation(sys, r.shadow_point, traj.points);
                    s.success = r.converged && s.deviation < epsilon;
                });
                ShadowingRow row;
                row.epsilon = epsilon;
                row.d = d;
                row.trials = cfg.trials;
                double iter_sum = 0.0;
                std::size_t ran = 0;
                for (const auto& s : slots) {
                    if (s.escaped) {
                        ++row.escaped;
                        continue;
                    }
                    ++ran;
                    iter_sum += s.iterations;
                    row.max_deviation = std::max(row.max_deviation, s.deviation);
                    if (s.success) ++row.successes;
                }
                row.success_rate = static_cast<double>(row.successes) / static_cast<double>(row.trials);
                row.mean_iterations = ran ? iter_sum / static_cast<double>(ran) : 0.0;
                table.rows.push_back(row);
            }
        }
    }

    bool pass = true;
    for (const auto& row : table.rows) pass = pass && row.successes == row.trials;
    Json cond = report_header("shadow");
    cond["records"] = cfg.check_conditions ? Json::parse(table.conditions.to_json()) : Json::array();
    Json empirical = Json::array();
    for (const auto& [eps, d] : table.empirical_d) empirical.push_back({{"epsilon", eps}, {"d", d}});
    cond["empirical_d"] = empirical;
    std::string margins = kCsvHeader + "condition,delta,margin\n";
    for (const auto& r : table.conditions.records) margins += r.name + "," + num(region.delta) + "," + num(r.margin) + "\n";
    return {pass, pass ? "" : "some trials were not shadowed",
            {{out, kCsvHeader + table.to_csv()},
             {sidecar(out, ".conditions.json"), dump(cond)},
             {sidecar(out, ".margins.csv"), margins}}};
}

// ----------------------------------------------------------------- horseshoe

namespace {

struct WordOutcome {
    std::string word;
    bool ok = false;
    std::string error;
    PeriodicDiskResult disk;
    PeriodicPoint point;
};

WordOutcome solve_word(const ChartedSystem& sys, const SymbolWord& word) {
    WordOutcome w;
    w.word = word.letters();
    try {
        w.disk = periodic_disk(sys, word);
        w.point = find_periodic_point(sys, word, w.disk.disk);
        w.ok = w.point.residual <= 1e-8;
        if (!w.ok) w.error = "residual " + num(w.point.residual) + " above 1e-8";
    } catch (const Error& e) {
        w.error = e.what();
    }
    return w;
}

std::vector<SymbolWord> resolve_words(const Json& o) {
    std::vector<SymbolWord> words;
    for (const auto& text : o.at("words").get<std::vector<std::string>>()) {
        SymbolWord w(text);
        if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
    }
    if (words.empty()) {
        const auto max_len = positive_int(o, "max-word-length");
        if (max_len > 12) throw ConfigError("'max-word-length' must be at most 12");
        for (std::int64_t len = 1; len <= max_len; ++len)
            for (auto& w : primitive_words(static_cast<std::size_t>(len))) words.push_back(w);
    }
    return words;
}

Json sweep_entry(const HomoclinicParams& base, double scale, std::uint64_t seed) {
    HomoclinicParams p = base;
    // 2*pi-periodic in z, vanishing with z so the fixed point at the origin persists.
    if (p.perturb_y.empty()) p.perturb_y = "sin(x2) + 0.5*x1*cos(x2)";
    if (p.perturb_z.empty()) p.perturb_z = "sin(x2)^2";
    p.perturb_scale = scale;
    Json e{{"scale", scale}};
    try {
        const ChartedSystem sys = builtin_homoclinic_system(p);
        const ContractionReport c = verify_contraction(sys, 20, seed);
        std::size_t found = 0, total = 0;
        for (std::size_t len = 1; len <= 3; ++len)
            for (const auto& w : primitive_words(len)) {
                ++total;
                if (solve_word(sys, w).ok) ++found;
            }
        e["max_ratio"] = c.max_ratio;
        e["periodic_points"] = found;
        e["words"] = total;
        e["pass"] = c.pass && found == total;
    } catch (const Error& err) {
        e["pass"] = false;
        e["error"] = err.what();
    }
    return e;
}

}  // namespace

StageResult run_horseshoe_stage(const Json& o, std::uint64_t seed, const fs::path& out) {
    const HomoclinicParams params = load_homoclinic_params(o.at("system").get<std::string>());
    ChartedSystem sys = builtin_homoclinic_system(params);
    const auto trials = static_cast<std::size_t>(positive_int(o, "trials"));
    const auto orbits = static_cast<std::size_t>(positive_int(o, "orbits"));
    const int steps = static_cast<int>(positive_int(o, "inclination-steps"));
    const std::vector<SymbolWord> words = resolve_words(o);
    auto sweep = o.at("perturb-sweep").get<std::vector<double>>();
    for (double sc : sweep)
        if (!(sc >= 0.0) || !std::isfinite(sc)) throw ConfigError("'perturb-sweep' entries must be nonnegative");
    std::sort(sweep.begin(), sweep.end());

    Json rep = report_header("horseshoe");
    if (o.at("auto-k").get<bool>()) {
        const AutoKResult ak = auto_tune_k(sys, 8, stream_seed(seed, "horseshoe.auto-k"));
        sys.k = ak.k;
        rep["auto_k"] = {{"k", ak.k}, {"tried", ak.tried}};
    }
    Json charts = Json::array();
    for (const auto& c : sys.charts)
        charts.push_back({{"y_center", c.y_center}, {"y_half", c.y_half}, {"z_half", c.z_half}, {"z_lift", c.z_lift}});
    rep["system"] = {{"name", sys.name}, {"k", sys.k}, {"a0", sys.a0}, {"b0", sys.b0}, {"y_p", sys.y_p}, {"charts", charts}};

    // Contraction of the graph transforms.
    const ContractionReport contraction = verify_contraction(sys, trials, stream_seed(seed, "horseshoe.contraction"));
    Json branches = Json::array();
    std::string contraction_csv = kCsvHeader + "from,to,realizable,max_ratio,pairs\n";
    for (const auto& b : contraction.branches) {
        branches.push_back({{"from", b.from}, {"to", b.to}, {"realizable", b.realizable}, {"max_ratio", b.max_ratio},
                            {"pairs", b.pairs}, {"skipped", b.skipped}});
        contraction_csv += std::to_string(b.from) + "," + std::to_string(b.to) + "," + (b.realizable ? "1" : "0") + "," +
                           num(b.max_ratio) + "," + std::to_string(b.pairs) + "\n";
    }
    rep["contraction"] = {{"max_ratio", contraction.max_ratio}, {"pass", contraction.pass}, {"branches", branches}};

    // Fixed disks and periodic points, one word per slot.
    std::vector<WordOutcome> outcomes(words.size());
    parallel_for(words.size(), [&](std::size_t i) { outcomes[i] = solve_word(sys, words[i]); });
    Json points = Json::array();
    std::string disks_csv = kCsvHeader + "z,eta,word\n";
    bool points_ok = true;
    std::vector<Vector> lifted;
    for (const auto& w : outcomes) {
        Json e{{"word", w.word}, {"ok", w.ok}};
        if (!w.error.empty()) e["error"] = w.error;
        if (!w.disk.disk.eta.empty()) {
            e["disk"] = {{"chart", w.disk.disk.chart}, {"z_half", w.disk.disk.z_half}, {"iterations", w.disk.iterations},
                         {"eta", w.disk.disk.eta}};
            for (std::size_t i = 0; i < w.disk.disk.size(); ++i)
                disks_csv += num(w.disk.disk.z(i)) + "," + num(w.disk.disk.eta[i]) + "," + w.word + "\n";
        }
        if (w.ok) {
            e["point"] = vec_json(w.point.point);
            e["itinerary"] = w.point.itinerary;
            e["residual"] = w.point.residual;
            e["composite_residual"] = w.point.composite_residual;
            e["disk_gap"] = w.point.disk_gap;
            e["newton_iterations"] = w.point.iterations;
            Vector x = w.point.point;
            x[1] += sys.charts[static_cast<std::size_t>(w.point.itinerary.at(0))].z_lift;
            lifted.push_back(x);
        }
        points_ok = points_ok && w.ok;
        points.push_back(e);
    }
    double min_distance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < lifted.size(); ++i)
        for (std::size_t j = i + 1; j < lifted.size(); ++j) min_distance = std::min(min_distance, (lifted[i] - lifted[j]).norm());
    const bool distinct = lifted.size() < 2 || min_distance > 1e-6;
    rep["periodic_points"] = {{"words", points}, {"all_found", points_ok}, {"min_pairwise_distance", min_distance},
                              {"distinct", distinct}};

    // Symbolic coding and conjugacy.
    const CodingFit fit = coding_fit(sys, 8);
    rep["coding"] = {{"prefix_lengths", fit.prefix_lengths}, {"distances", fit.distances}, {"slope", fit.slope},
                     {"constant", fit.constant}, {"bound_holds", fit.bound_holds}};
    Json conj = Json::array();
    bool conj_ok = true;
    for (std::size_t i = 0; i < std::min<std::size_t>(words.size(), 5); ++i)
        for (int letter : {0, 1}) {
            const ConjugacyReport c = verify_conjugacy(sys, words[i], letter);
            conj_ok = conj_ok && c.pass;
            conj.push_back({{"word", c.word}, {"letter", c.letter}, {"distance", c.distance}, {"pass", c.pass}});
        }
    rep["conjugacy"] = conj;

    // Inclination traces along orbits near the fixed point.
    const MapSystem map = sys.as_map_system();
    const double gap = sys.b0 - sys.a0;
    std::vector<InclinationReport> traces(orbits);
    parallel_for(orbits, [&](std::size_t i) {
        Rng rng = make_stream(seed, "horseshoe.inclination", i);
        const double y = uniform(rng, -0.1, 0.1);
        const double z = uniform(rng, -0.05, 0.05);
        traces[i] = track_inclination(map, (Vector(2) << y, z).finished(), (Vector(2) << 1.0, 1.0).finished(), steps,
                                      std::nullopt, gap * gap / 16.0);
    });
    std::string lambda_csv = kCsvHeader + "orbit,m,lambda,bound\n";
    bool incl_ok = true;
    double worst_excess = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < traces.size(); ++i) {
        incl_ok = incl_ok && traces[i].pass;
        worst_excess = std::max(worst_excess, traces[i].max_excess);
        for (std::size_t m = 0; m < traces[i].lambda.size(); ++m)
            lambda_csv += std::to_string(i) + "," + std::to_string(m) + "," + num(traces[i].lambda[m]) + "," +
                          num(traces[i].bound[m]) + "\n";
    }
    const auto& c0 = traces.front().constants;
    rep["inclination"] = {{"orbits", orbits}, {"steps", steps}, {"a0", c0.a0}, {"b0", c0.b0}, {"kappa", c0.kappa},
                          {"max_excess", worst_excess}, {"pass", incl_ok}};

    // Persistence under C^1-small perturbations, reported empirically.
    if (!sweep.empty()) {
        Json entries = Json::array();
        std::optional<double> delta;
        bool prefix_ok = true;
        for (std::size_t i = 0; i < sweep.size(); ++i) {
            Json e = sweep_entry(params, sweep[i], stream_seed(seed, "horseshoe.perturb", i));
            prefix_ok = prefix_ok && e["pass"].get<bool>();
            if (prefix_ok) delta = sweep[i];
            entries.push_back(e);
        }
        rep["perturbation"] = {{"entries", entries}, {"empirical_delta", delta ? Json(*delta) : Json(nullptr)}};
    }

    const bool pass = contraction.pass && points_ok && distinct && incl_ok && conj_ok;
    rep["pass"] = pass;
    std::string message;
    if (!contraction.pass) message = "contraction ratio above 1/2";
    else if (!points_ok) message = "periodic point extraction failed";
    else if (!distinct) message = "periodic points are not distinct";
    else if (!incl_ok) message = "inclination bound violated";
    else if (!conj_ok) message = "conjugacy check failed";
    return {pass, message,
            {{out, dump(rep)},
             {sidecar(out, ".disks.csv"), disks_csv},
             {sidecar(out, ".lambda.csv"), lambda_csv},
             {sidecar(out, ".contraction.csv"), contraction_csv}}};
}

// ------------------------------------------------------------------ tangency

StageResult run_tangency_stage(const Json& o, std::uint64_t, const fs::path& out) {
    const Matrix B = parse_matrix_literal(o.at("B").get<std::string>());
    const Matrix C = parse_matrix_literal(o.at("C").get<std::string>());
    const int s = static_cast<int>(B.rows()), u = static_cast<int>(C.rows()), n = s + u;
    if (n > kMaxDimension) throw ConfigError("'B' and 'C' together must have dimension at most 4");
    const std::string g_text = o.at("g").get<std::string>();
    const std::string delta_text = o.at("delta").get<std::string>();
    const TangencyData data = parse_tangency(g_text, u);
    PipelineOptions po;
    po.working_radius = positive_number(o, "working-radius");
    po.radii = positive_list(o, "radii");
    for (double r : po.radii)
        if (r > po.working_radius) throw ConfigError("'radii' must not exceed the working radius");
    const auto samples = static_cast<std::size_t>(positive_int(o, "samples"));
    if (!delta_text.empty()) {
        expr::Symbols sym;
        sym.variables = {"xi"};
        auto e = std::make_shared<const expr::Expr>(expr::parse(delta_text, sym));
        po.delta = [e](double xi) { return e->eval(std::span<const double>(&xi, 1)); };
    }

    Matrix A = Matrix::Zero(n, n);
    A.topLeftCorner(s, s) = B;
    A.bottomRightCorner(u, u) = C;
    NativeMap native;
    native.forward = [A](const Vector& x) { return Vector(A * x); };
    native.jacobian = [A](const Vector&) { return A; };
    const MapSystem sys = from_native(n, s, std::move(native), "block-linear");

    const PipelineResult res = quasitransverse_pipeline(sys, data, po);
    const TimeReparam& t = *res.time;
    const FlatteningFunction& f = t.flattening();
    const FlatteningCheck check = verify_flattening(f, samples);

    Json rep = report_header("tangency");
    rep["input"] = {{"B", mat_json(B)}, {"C", mat_json(C)}, {"g", g_text}, {"delta", delta_text},
                    {"working_radius", po.working_radius}};
    const CenterGenerator& gen = res.generator;
    rep["matrix_log"] = {{"power", gen.power}, {"P", mat_json(gen.P)}, {"K", gen.K}, {"chi", gen.chi},
                         {"transversality", gen.transversality}, {"exp_check", gen.exp_check}};
    rep["rho"] = res.rho;
    rep["xi_min"] = t.xi_min();
    rep["flattening"] = {{"points", check.points}, {"positive", check.positive}, {"monotone", check.monotone},
                         {"minorant", check.minorant}, {"flat", check.flat},
                         {"worst_minorant_log_gap", check.worst_minorant_log_gap},
                         {"flatness_drop_6_decades", check.flatness_drop_6}, {"pass", check.pass()}};

    std::string delta_csv = kCsvHeader + "xi,delta,log_delta0,log_t\n";
    Json table = Json::array();
    constexpr int kRows = 60;
    const double lo = std::log(res.rho * 1e-4), hi = std::log(res.rho * (1.0 - 1e-9));
    for (int i = 0; i < kRows; ++i) {
        const double xi = std::exp(lo + (hi - lo) * i / (kRows - 1));
        const double d = f.delta(xi), l0 = f.log_value(xi), lt = t.log_t(xi);
        delta_csv += num(xi) + "," + num(d) + "," + num(l0) + "," + num(lt) + "\n";
        table.push_back({{"xi", xi}, {"delta", d}, {"log_delta0", l0}, {"log_t", lt}});
    }
    rep["delta0_t_samples"] = table;

    std::string flat_csv = kCsvHeader + "radius,identity_distance,tau_min,tau_max,g_ratio,angle,h_log_norm,h_underflow\n";
    Json radii = Json::array();
    for (const auto& rf : res.flatness.radii) {
        radii.push_back({{"radius", rf.radius}, {"identity_distance", rf.identity_distance}, {"tau_min", rf.tau_min},
                         {"tau_max", rf.tau_max}, {"g_ratio", rf.g_ratio.value_or(NAN)}, {"angle", rf.angle.value_or(NAN)},
                         {"h_log_norm", rf.h_log_norm}, {"h_underflow", rf.h_underflow}});
        flat_csv += num(rf.radius) + "," + num(rf.identity_distance) + "," + num(rf.tau_min) + "," + num(rf.tau_max) + "," +
                    num(rf.g_ratio.value_or(NAN)) + "," + num(rf.angle.value_or(NAN)) + "," + num(rf.h_log_norm) + "," +
                    (rf.h_underflow ? "1" : "0") + "\n";
    }
    const auto& fr = res.flatness;
    rep["flatness"] = {{"radii", radii}, {"identity_decreasing", fr.identity_decreasing},
                       {"tau_in_unit_interval", fr.tau_in_unit_interval}, {"h_norm_monotone", fr.h_norm_monotone},
                       {"r0", fr.r0 ? Json(*fr.r0) : Json(nullptr)}, {"angle", res.angle},
                       {"ghat_slope_small", res.ghat_slope_small}};

    // Round trip h^-1(h(z)) = z over the annulus 0.1 <= |z| <= working radius.
    double round_trip = 0.0;
    const double r_lo = std::min(0.1, po.working_radius);
    for (int i = 0; i <= 80; ++i) {
        const double r = r_lo + (po.working_radius - r_lo) * i / 80.0;
        for (int k = 0; k < (u == 1 ? 2 : 16); ++k) {
            Vector z = Vector::Zero(u);
            if (u == 1) {
                z[0] = k == 0 ? r : -r;
            } else {
                z[0] = r * std::cos(2.0 * M_PI * k / 16.0);
                z[1] = r * std::sin(2.0 * M_PI * k / 16.0);
            }
            const HInverse inv = invert_h(gen, t, apply_h(gen, t, z, po.working_radius));
            round_trip = std::max(round_trip, (inv.zhat - z).norm() / r);
        }
    }
    rep["round_trip_max_relative_error"] = round_trip;
    rep["disk"] = {{"admissible", res.disk_admissible}, {"max_height", res.disk_max_height},
                   {"max_slope", res.disk_max_slope}};

    Json handle = {{"kind", "flattened-block-linear"}, {"B", mat_json(B)}, {"C", mat_json(C)}, {"g", g_text},
                   {"delta", delta_text}, {"rho", res.rho}, {"working_radius", po.working_radius}};
    std::vector<OutputFile> files;
    if (s == 1 && u == 1 && res.disk_admissible && B(0, 0) > 0.0 && B(0, 0) < 1.0) {
        const fs::path system_path = sidecar(out, ".system.json");
        Json system = {{"schema_version", kSchemaVersion}, {"kind", "homoclinic"}, {"stable", B(0, 0)},
                       {"source", "flattened tangency with g = " + g_text}};
        handle["horseshoe_system"] = system_path.filename().generic_string();
        files.push_back({system_path, dump(system)});
    }
    rep["transformed_system"] = handle;

    const bool pass = check.pass() && fr.tau_in_unit_interval && fr.identity_decreasing && fr.h_norm_monotone &&
                      fr.r0.has_value() && res.disk_admissible && round_trip <= 1e-9;
    rep["pass"] = pass;
    std::string message;
    if (!check.pass()) message = "flattening invariants failed";
    else if (!fr.tau_in_unit_interval) message = "tau left (0, 1)";
    else if (!fr.identity_decreasing) message = "distance to the identity does not decrease with the radius";
    else if (!fr.h_norm_monotone) message = "|h| is not monotone in the radius";
    else if (!fr.r0) message = "no radius with |ghat| <= |z|^2";
    else if (!res.disk_admissible) message = "flattened curve is not an admissible disk";
    else if (round_trip > 1e-9) message = "h round trip above 1e-9";
    files.insert(files.begin(), {{out, dump(rep)},
                                 {sidecar(out, ".flatness.csv"), flat_csv},
                                 {sidecar(out, ".delta0.csv"), delta_csv}});
    return {pass, message, std::move(files)};
}

}  // namespace nonhyp::cli
