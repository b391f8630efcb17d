// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "nonhyp/cli.hpp"
#include "nonhyp/horseshoe.hpp"
#include "nonhyp/lyapunov.hpp"
#include "nonhyp/parallel.hpp"
#include "nonhyp/shadowing.hpp"
#include "nonhyp/stages.hpp"
#include "nonhyp/tangency.hpp"

using namespace nonhyp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Detail {
public:
    template <class T>
    Detail& operator()(const std::string& key, const T& value) {
        if (!text_.str().empty()) text_ << ", ";
        text_ << key << "=" << value;
        return *this;
    }
    std::string str() const { return text_.str(); }

private:
    std::ostringstream text_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Point pt(double a, double b) { return (Point(2) << a, b).finished(); }

RegionSpec model_region(double delta) {
    RegionSpec r;
    r.delta = delta;
    r.K = 2.0;
    r.alpha = 1.0;
    r.neighborhood = Box::symmetric(2, 0.2);
    return r;
}

Outcome model_conditions() {
    const auto t0 = std::chrono::steady_clock::now();
    const MapSystem sys = model_map(3, 3);
    const LyapunovPair pair = LyapunovPair::coordinate_split(2, 1);
    bool pass = true;
    double worst = INFINITY;
    for (double delta : {1e-3, 1e-2}) {
        const RegionSpec region = model_region(delta);
        const ConditionRecord c1 = check_C1(pair, region, 0.1, 10000, 1);
        pass = pass && c1.pass && c1.margin > 0.0;
        const ConditionReport s = certify_C3_C4_C9(pair, region);
        for (const char* name : {"C3", "C4", "C9"}) pass = pass && s.at(name).pass && s.at(name).status == "certified";
        const ConditionReport sampled = check_C5_C6_C7_C8(sys, pair, region, 10000, 2);
        for (const char* name : {"C5", "C6", "C7", "C8.1", "C8.2"}) {
            const auto& r = sampled.at(name);
            pass = pass && r.pass && r.margin > 0.0 && r.samples >= 10000;
            worst = std::min(worst, r.margin);
        }
    }
    const double secs = seconds_since(t0);
    return {pass && secs < 10.0, Detail()("min_margin", worst)("seconds", secs).str()};
}

Outcome c7_half_delta() {
    const MapSystem sys = model_map(3, 3);
    const LyapunovPair pair = LyapunovPair::coordinate_split(2, 1);
    bool pass = true;
    Detail d;
    for (double delta : {1e-3, 1e-2}) {
        const double max_v = check_C5_C6_C7_C8(sys, pair, model_region(delta), 10000, 3).at("C7.half_delta").values.at("max_V");
        pass = pass && max_v <= 0.5 * delta + 1e-12;
        d("max_V/delta@" + std::to_string(delta), max_v / delta);
    }
    return {pass, d.str()};
}

Outcome shadow_exact() {
    const MapSystem sys = model_map(3, 3);
    Rng rng = make_stream(12, "acceptance.exact");
    double worst = 0.0;
    bool pass = true;
    for (int t = 0; t < 100; ++t) {
        const Point p0 = draw_confined_start(sys, Box::symmetric(2, 0.2), 30, rng);
        const auto traj = generate_pseudotrajectory(sys, p0, 30, 0.0, NoiseModel::UniformBox, 0);
        const ShadowResult r = find_shadow_point(sys, traj, 1e-3);
        pass = pass && r.converged;
        worst = std::max(worst, r.deviation);
    }
    return {pass && worst <= 1e-12, Detail()("starts", 100)("max_deviation", worst).str()};
}

Outcome shadow_linear_oracle() {
    const MapSystem sys = linear_diagonal({0.5, 2.0}, 1);
    Rng rng = make_stream(13, "acceptance.linear");
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        const Point p0 = pt(uniform(rng, -1, 1), uniform(rng, -1e-3, 1e-3));
        const auto traj = generate_pseudotrajectory(sys, p0, 30, 1e-3, NoiseModel::UniformBox, stream_seed(13, "noise", t));
        const ShadowResult r = find_shadow_point(sys, traj, 1e-2);
        // Keep the stable coordinate and pull the unstable errors back through 1/2^k.
        double unstable = traj.points[0][1], scale = 0.5;
        for (std::size_t k = 0; k + 1 < traj.points.size(); ++k) {
            unstable += scale * (traj.points[k + 1][1] - 2.0 * traj.points[k][1]);
            scale *= 0.5;
        }
        worst = std::max(worst, (r.shadow_point - pt(traj.points[0][0], unstable)).cwiseAbs().maxCoeff());
    }
    return {worst <= 1e-10, Detail()("trajectories", 200)("max_componentwise_error", worst).str()};
}

Outcome shadow_model() {
    const auto t0 = std::chrono::steady_clock::now();
    const MapSystem sys = model_map(3, 3);
    Rng rng = make_stream(14, "acceptance.model");
    std::size_t ok = 0;
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Point p0 = draw_confined_start(sys, Box::symmetric(2, 0.2), 50, rng);
        const auto traj = generate_pseudotrajectory(sys, p0, 50, 1e-5, NoiseModel::UniformBox, stream_seed(14, "noise", t));
        const ShadowResult r = find_shadow_point(sys, traj, 1e-3);
        const double recomputed = orbit_deviation(sys, r.shadow_point, traj.points);
        worst = std::max(worst, recomputed);
        if (r.converged && recomputed <= 1e-3) ++ok;
    }
    const double secs = seconds_since(t0);
    return {ok == 100 && secs < 30.0, Detail()("success", std::to_string(ok) + "/100")("max_deviation", worst)("seconds", secs).str()};
}

Outcome horseshoe_contraction(ChartedSystem& sys) {
    const AutoKResult ak = auto_tune_k(sys, 8, 21);
    sys.k = ak.k;
    const ContractionReport rep = verify_contraction(sys, 100, 22);
    bool pass = rep.pass;
    std::size_t realizable = 0;
    for (const auto& b : rep.branches)
        if (b.realizable) {
            ++realizable;
            pass = pass && b.max_ratio <= 0.5 && b.pairs + b.skipped >= 100;
        }
    return {pass && realizable > 0,
            Detail()("k", ak.k)("realizable_branches", realizable)("max_ratio", rep.max_ratio).str()};
}

Outcome symbolic_coding(const ChartedSystem& sys) {
    const CodingFit fit = coding_fit(sys, 8);
    std::size_t ok = 0;
    double worst = 0.0;
    for (const char* w : {"0", "1", "01", "001", "011"})
        for (int letter : {0, 1}) {
            const ConjugacyReport c = verify_conjugacy(sys, SymbolWord(w), letter);
            worst = std::max(worst, c.distance);
            if (c.pass && c.distance <= 1e-8) ++ok;
        }
    const bool pass = fit.slope >= -1.2 && fit.slope <= -0.8 && ok == 10;
    return {pass, Detail()("slope", fit.slope)("conjugacy_pairs", std::to_string(ok) + "/10")("max_dist1", worst).str()};
}

Outcome periodic_points(const ChartedSystem& sys) {
    std::vector<SymbolWord> words;
    for (std::size_t len = 1; len <= 5; ++len)
        for (const auto& w : primitive_words(len)) words.push_back(w);
    std::vector<PeriodicPoint> pts(words.size());
    std::vector<char> ok(words.size(), 0);
    parallel_for(words.size(), [&](std::size_t i) {
        try {
            const PeriodicDiskResult d = periodic_disk(sys, words[i]);
            pts[i] = find_periodic_point(sys, words[i], d.disk);
            bool match = pts[i].residual <= 1e-8 && pts[i].itinerary.size() == words[i].length();
            const std::size_t L = words[i].length();
            for (std::size_t j = 0; match && j < L; ++j) match = pts[i].itinerary[j] == words[i].at((L - j) % L);
            ok[i] = match;
        } catch (const Error&) {
            ok[i] = 0;
        }
    });
    std::vector<Point> lifted;
    std::vector<bool> period_seen(6, false);
    double worst_residual = 0.0;
    bool all = true;
    for (std::size_t i = 0; i < words.size(); ++i) {
        all = all && ok[i];
        if (!ok[i]) continue;
        worst_residual = std::max(worst_residual, pts[i].residual);
        period_seen[words[i].length()] = true;
        Point x = pts[i].point;
        x[1] += sys.charts[static_cast<std::size_t>(pts[i].itinerary[0])].z_lift;
        lifted.push_back(x);
    }
    double min_dist = INFINITY;
    for (std::size_t i = 0; i < lifted.size(); ++i)
        for (std::size_t j = i + 1; j < lifted.size(); ++j) min_dist = std::min(min_dist, (lifted[i] - lifted[j]).norm());
    const bool periods = std::all_of(period_seen.begin() + 1, period_seen.end(), [](bool b) { return b; });
    return {all && min_dist > 1e-6 && periods,
            Detail()("points", std::to_string(lifted.size()) + "/" + std::to_string(words.size()))("max_residual", worst_residual)(
                "min_pairwise_distance", min_dist)
                .str()};
}

Outcome inclination(const ChartedSystem& sys) {
    const MapSystem map = sys.as_map_system();
    const double gap = sys.b0 - sys.a0;
    bool pass = true;
    double worst_excess = -INFINITY;
    for (std::size_t i = 0; i < 100; ++i) {
        Rng rng = make_stream(31, "acceptance.inclination", i);
        const Point r = pt(uniform(rng, -0.1, 0.1), uniform(rng, -0.05, 0.05));
        const InclinationReport rep = track_inclination(map, r, pt(1.0, 1.0), 30, std::nullopt, gap * gap / 16.0);
        pass = pass && rep.pass;
        worst_excess = std::max(worst_excess, rep.max_excess);
    }
    const InclinationReport lin = track_inclination(linear_diagonal({0.5, 2.0}, 1), pt(0.1, 0.0), pt(1.0, 1.0), 30);
    const bool exact = lin.pass && lin.constants.kappa == 0.0 && lin.max_relative_gap <= 1e-12;
    return {pass && exact, Detail()("orbits", 100)("max_excess", worst_excess)("linear_relative_gap", lin.max_relative_gap).str()};
}

Outcome tangency_transform() {
    const auto t0 = std::chrono::steady_clock::now();
    PipelineOptions opt;
    opt.delta = [](double xi) { return xi; };
    opt.radii = {0.5, 0.4, 0.3, 0.2, 0.1};
    const PipelineResult res = quasitransverse_pipeline(linear_diagonal({0.5, 2.0}, 1), parse_tangency("cbrt(zeta)"), opt);
    const TimeReparam& t = *res.time;

    // (a) flattening invariants on 10^4 points
    const bool a = verify_flattening(t.flattening(), 10000).pass();
    // (b) tau in (0,1), decreasing to 0 along 0.5, 0.3, 0.1
    bool b = true;
    double prev = 1.0, last = 1.0;
    for (double r : {0.5, 0.3, 0.1}) {
        const TauValue tv = tau(res.generator, t, Vector::Constant(1, r));
        b = b && !tv.underflow && tv.tau > 0.0 && tv.tau < prev;
        prev = last = tv.tau;
    }
    b = b && last < 1e-30;
    // (c) distance to the identity strictly decreasing along 0.3, 0.2, 0.1
    std::map<double, double> id;
    for (const auto& rf : res.flatness.radii) id[rf.radius] = rf.identity_distance;
    const bool c = id.at(0.3) > id.at(0.2) && id.at(0.2) > id.at(0.1);
    // (d) |ghat|/|z|^2 <= 1 below r0
    bool d = res.flatness.r0.has_value();
    for (const auto& rf : res.flatness.radii)
        if (d && rf.radius <= *res.flatness.r0) d = d && rf.g_ratio && *rf.g_ratio <= 1.0;
    // (e) round trip on the working annulus
    double round_trip = 0.0;
    for (int i = 0; i <= 160; ++i) {
        const double r = 0.1 + (opt.working_radius - 0.1) * i / 160.0;
        for (double sign : {-1.0, 1.0}) {
            const Vector z = Vector::Constant(1, sign * r);
            const HInverse inv = invert_h(res.generator, t, apply_h(res.generator, t, z, opt.working_radius));
            round_trip = std::max(round_trip, (inv.zhat - z).norm() / r);
        }
    }
    const bool e = round_trip <= 1e-9;
    const double secs = seconds_since(t0);
    return {a && b && c && d && e && secs < 10.0,
            Detail()("a", a)("b", b)("c", c)("d", d)("e", e)("tau@0.1", last)("round_trip", round_trip)("seconds", secs).str()};
}

Outcome z_forms() {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    double worst = 0.0, circle_min = INFINITY;
    for (int k = 1; k <= 3; ++k) {
        for (int i = 0; i < 10000; ++i) {
            const double z = u(rng), v = u(rng);
            long double zp = 1, sp = 1;
            for (int e = 0; e < 2 * k + 1; ++e) {
                zp *= static_cast<long double>(z);
                sp *= static_cast<long double>(z) + v;
            }
            const long double rhs = sp - zp;
            const long double lhs = static_cast<long double>(v) * z_form(k, z, v);
            if (rhs != 0) worst = std::max(worst, static_cast<double>(std::fabs((lhs - rhs) / rhs)));
        }
        circle_min = std::min(circle_min, z_form_summary(k, 100000).circle_min);
    }
    const double counter = z_form(1, 1.0, -1.0);
    return {worst <= 1e-12 && circle_min > 0.0 && counter == 1.0 && counter < 3.0,
            Detail()("max_relative_error", worst)("circle_min", circle_min)("Z2(1,-1)", counter).str()};
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "nonhyp_acceptance_determinism";
    fs::remove_all(root);
    std::vector<std::vector<cli::OutputDigest>> runs;
    bool exit_ok = true;
    for (int threads : {1, 2, 8}) {
        const cli::Json file = {{"seed", 2024},
                                {"threads", threads},
                                {"out", (root / ("w" + std::to_string(threads))).string()},
                                {"shadow", {{"trials", 100}}},
                                {"horseshoe", {{"max-word-length", 4}, {"orbits", 50}}}};
        const cli::RunManifest m = cli::run(cli::resolve_config("all", file, cli::Json::object()));
        exit_ok = exit_ok && m.exit_code == cli::kExitOk;
        runs.push_back(m.outputs);
    }
    bool same = true;
    std::size_t files = runs[0].size();
    for (std::size_t r = 1; r < runs.size(); ++r) {
        same = same && runs[r].size() == files;
        for (std::size_t i = 0; same && i < files; ++i)
            same = runs[r][i].path == runs[0][i].path && runs[r][i].sha256 == runs[0][i].sha256;
    }
    return {same && exit_ok && files > 0, Detail()("files", files)("workers", "1,2,8")("all_stages_ok", exit_ok).str()};
}

}  // namespace

int main() {
    ChartedSystem horseshoe = builtin_homoclinic_system();
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"model-example condition suite", model_conditions},
        {"C7 half-delta bound", c7_half_delta},
        {"shadowing exactness", shadow_exact},
        {"shadowing linear oracle", shadow_linear_oracle},
        {"shadowing model map", shadow_model},
        {"horseshoe contraction", [&] { return horseshoe_contraction(horseshoe); }},
        {"symbolic coding", [&] { return symbolic_coding(horseshoe); }},
        {"periodic points", [&] { return periodic_points(horseshoe); }},
        {"inclination bounds", [&] { return inclination(horseshoe); }},
        {"tangency transform", tangency_transform},
        {"Z-forms", z_forms},
        {"determinism", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failures == 0 ? 0 : 1;
}
