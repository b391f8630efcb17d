#include "nonhyp/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "nonhyp/parallel.hpp"

namespace nonhyp {

// ---------------------------------------------------------------------------
// Pair

LyapunovPair LyapunovPair::coordinate_split(int dimension, int stable_split) {
    if (dimension < 1 || dimension > kMaxDimension) throw PreconditionError("pair dimension out of range");
    if (stable_split < 0 || stable_split > dimension) throw PreconditionError("stable_split must lie in [0, dimension]");
    LyapunovPair pair;
    pair.kind_ = Kind::CoordinateSplit;
    pair.dimension_ = dimension;
    for (int i = 0; i < dimension; ++i) (i < stable_split ? pair.stable_ : pair.unstable_).push_back(i);
    return pair;
}

LyapunovPair LyapunovPair::user_defined(int dimension, const std::string& w_source, const std::string& v_source,
                                        const std::map<std::string, double>& params) {
    if (dimension < 1 || dimension > kMaxDimension) throw PreconditionError("pair dimension out of range");
    expr::Symbols symbols;
    for (int i = 1; i <= dimension; ++i) symbols.variables.push_back("q" + std::to_string(i));
    for (int i = 1; i <= dimension; ++i) symbols.variables.push_back("p" + std::to_string(i));
    symbols.params = params;
    LyapunovPair pair;
    pair.kind_ = Kind::UserDefined;
    pair.dimension_ = dimension;
    pair.w_expr_ = expr::parse(w_source, symbols);
    pair.v_expr_ = expr::parse(v_source, symbols);
    return pair;
}

namespace {

double max_abs_gap(const Point& q, const Point& p, const std::vector<int>& idx) {
    double out = 0.0;
    for (int i : idx) out = std::max(out, std::abs(q[i] - p[i]));
    return out;
}

double eval_pair_expr(const expr::Expr& e, const Point& q, const Point& p) {
    std::array<double, 2 * kMaxDimension> vars{};
    const auto n = static_cast<std::size_t>(q.size());
    for (std::size_t i = 0; i < n; ++i) {
        vars[i] = q[static_cast<Eigen::Index>(i)];
        vars[n + i] = p[static_cast<Eigen::Index>(i)];
    }
    return e.eval(std::span<const double>(vars.data(), 2 * n));
}

}  // namespace

double LyapunovPair::W(const Point& q, const Point& p) const {
    return kind_ == Kind::CoordinateSplit ? max_abs_gap(q, p, stable_) : eval_pair_expr(w_expr_, q, p);
}

double LyapunovPair::V(const Point& q, const Point& p) const {
    return kind_ == Kind::CoordinateSplit ? max_abs_gap(q, p, unstable_) : eval_pair_expr(v_expr_, q, p);
}

bool in_P(const LyapunovPair& pair, double a, const Point& p, const Point& q) {
    return pair.W(q, p) <= a && pair.V(q, p) <= a;
}

bool in_Q(const LyapunovPair& pair, double a, const Point& p, const Point& q) {
    return in_P(pair, a, p, q) && std::abs(pair.V(q, p) - a) <= level_tolerance(a);
}

bool in_T(const LyapunovPair& pair, double a, const Point& p, const Point& q) {
    return in_P(pair, a, p, q) && pair.V(q, p) <= level_tolerance(a);
}

bool in_R(const LyapunovPair& pair, double b, double a, const Point& p, const Point& q) {
    const double w = pair.W(q, p);
    return a <= w && w <= b && pair.V(q, p) <= a;
}

void RegionSpec::validate() const {
    if (!(delta > 0.0)) throw PreconditionError("delta must be positive");
    if (!(K > 1.0)) throw PreconditionError("K must exceed 1 so that Delta > delta");
    if (!(alpha > 0.0)) throw PreconditionError("alpha must be positive");
    if (neighborhood.dim() == 0) throw PreconditionError("region needs a neighborhood box");
}

// ---------------------------------------------------------------------------
// Reports

bool ConditionReport::all_pass() const {
    return std::all_of(records.begin(), records.end(), [](const ConditionRecord& r) { return r.pass; });
}

const ConditionRecord& ConditionReport::at(const std::string& name) const {
    for (const auto& r : records)
        if (r.name == name) return r;
    throw PreconditionError("no condition record named '" + name + "'");
}

bool ConditionReport::contains(const std::string& name) const {
    return std::any_of(records.begin(), records.end(), [&](const ConditionRecord& r) { return r.name == name; });
}

void ConditionReport::append(const ConditionReport& other) {
    records.insert(records.end(), other.records.begin(), other.records.end());
}

namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

std::string ConditionReport::to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : records) {
        nlohmann::json rec;
        rec["name"] = r.name;
        rec["pass"] = r.pass;
        rec["margin"] = finite_or_null(r.margin);
        rec["strict"] = r.strict;
        rec["status"] = r.status;
        rec["samples"] = r.samples;
        rec["seed"] = r.seed;
        nlohmann::json witness = nlohmann::json::array();
        for (const auto& w : r.witness) witness.push_back(std::vector<double>(w.data(), w.data() + w.size()));
        rec["witness"] = witness;
        nlohmann::json values = nlohmann::json::object();
        for (const auto& [k, v] : r.values) values[k] = finite_or_null(v);
        rec["values"] = values;
        out.push_back(rec);
    }
    return out.dump(2);
}

std::string ConditionReport::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "name,pass,margin,samples,seed,status\n";
    for (const auto& r : records)
        os << r.name << ',' << (r.pass ? "true" : "false") << ',' << r.margin << ',' << r.samples << ',' << r.seed << ','
           << r.status << '\n';
    return os.str();
}

namespace {

void finalize(ConditionRecord& r) { r.pass = r.strict ? r.margin > 0.0 : r.margin >= 0.0; }

constexpr double kFailedEvaluation = std::numeric_limits<double>::lowest();

struct Sample {
    double margin = std::numeric_limits<double>::infinity();
    std::vector<Point> witness;
    double aux = 0.0;
};

/// Evaluates `body(i, rng)` for every index on its own stream and keeps the
/// smallest margin, ties resolved by index so the result is worker-independent.
template <class Body>
ConditionRecord sampled_minimum(const std::string& name, std::size_t samples, std::uint64_t seed, Body body) {
    std::vector<Sample> slots(samples);
    parallel_for(samples, [&](std::size_t i) {
        Rng rng = make_stream(seed, name, i);
        try {
            slots[i] = body(i, rng);
        } catch (const Error&) {
            slots[i].margin = kFailedEvaluation;
        }
    });
    ConditionRecord rec;
    rec.name = name;
    rec.samples = samples;
    rec.seed = seed;
    rec.margin = std::numeric_limits<double>::infinity();
    std::size_t failures = 0;
    double aux_max = -std::numeric_limits<double>::infinity();
    for (const auto& s : slots) {
        if (s.margin == kFailedEvaluation) ++failures;
        if (s.margin < rec.margin) {
            rec.margin = s.margin;
            rec.witness = s.witness;
        }
        aux_max = std::max(aux_max, s.aux);
    }
    if (failures) rec.values["failed_evaluations"] = static_cast<double>(failures);
    rec.values["aux_max"] = aux_max;
    finalize(rec);
    return rec;
}

// Sampling strata. Every eighth sample puts p on the stable axis, on the
// unstable axis, or at the origin (when those lie in the box), mirroring the
// degenerate branches of the analytic argument.
Point sample_base_point(Rng& rng, const Box& box, const LyapunovPair& pair, std::size_t i) {
    Point p(box.dim());
    for (int k = 0; k < box.dim(); ++k) p[k] = uniform(rng, box.lower[k], box.upper[k]);
    const auto zero = [&](const std::vector<int>& idx) {
        for (int k : idx)
            if (box.lower[k] <= 0.0 && 0.0 <= box.upper[k]) p[k] = 0.0;
    };
    switch (i % 8) {
        case 0: zero(pair.stable_indices()); break;
        case 1: zero(pair.unstable_indices()); break;
        case 2:
            zero(pair.stable_indices());
            zero(pair.unstable_indices());
            break;
        default: break;
    }
    return p;
}

double signed_uniform(Rng& rng, double a) { return uniform(rng, -a, a); }
double random_sign(Rng& rng) { return (rng() >> 63) ? 1.0 : -1.0; }

int pick(Rng& rng, const std::vector<int>& idx) { return idx[static_cast<std::size_t>(rng() % idx.size())]; }

/// Fills the coordinates `idx` of v uniformly in [-a, a]; stratum 1 pushes a
/// single coordinate to a face, stratum 2 pushes all of them to corners.
void fill_block(Rng& rng, Vector& v, const std::vector<int>& idx, double a, int stratum) {
    for (int k : idx) v[k] = signed_uniform(rng, a);
    if (idx.empty()) return;
    if (stratum == 1) v[pick(rng, idx)] = random_sign(rng) * a;
    if (stratum == 2)
        for (int k : idx) v[k] = random_sign(rng) * a;
}

int stratum_of(std::size_t i) { return static_cast<int>((i / 8) % 3); }

// Offsets q - p for the coordinate-split sets.
Vector offset_T(Rng& rng, const LyapunovPair& pair, double a, std::size_t i) {
    Vector v = Vector::Zero(pair.dimension());
    fill_block(rng, v, pair.stable_indices(), a, stratum_of(i));
    return v;
}

Vector offset_P(Rng& rng, const LyapunovPair& pair, double a, std::size_t i) {
    Vector v = Vector::Zero(pair.dimension());
    fill_block(rng, v, pair.stable_indices(), a, stratum_of(i));
    fill_block(rng, v, pair.unstable_indices(), a, stratum_of(i / 3));
    return v;
}

Vector offset_Q(Rng& rng, const LyapunovPair& pair, double a, std::size_t i) {
    Vector v = offset_P(rng, pair, a, i);
    v[pick(rng, pair.unstable_indices())] = random_sign(rng) * a;
    return v;
}

/// q in P(hi, p) with the `block` gap between lo and hi (the slab V >= lo or W >= lo).
Vector offset_slab(Rng& rng, const LyapunovPair& pair, const std::vector<int>& block, const std::vector<int>& other,
                   double lo, double hi, std::size_t i) {
    Vector v = Vector::Zero(pair.dimension());
    const int j = pick(rng, block);
    double mag = uniform(rng, lo, hi);
    switch (stratum_of(i)) {
        case 1: mag = lo; break;
        case 2: mag = hi; break;
        default: break;
    }
    for (int k : block) v[k] = signed_uniform(rng, mag);
    v[j] = random_sign(rng) * mag;
    fill_block(rng, v, other, hi, stratum_of(i / 3));
    return v;
}

void require_coordinate_split(const LyapunovPair& pair, const char* what) {
    if (pair.kind() != LyapunovPair::Kind::CoordinateSplit)
        throw PreconditionError(std::string(what) + " samples sets by face parametrization and needs a coordinate-split pair");
    if (pair.stable_indices().empty() || pair.unstable_indices().empty())
        throw PreconditionError(std::string(what) + " needs nonempty stable and unstable blocks");
}

Point inverse_near(const MapSystem& sys, const Point& target, const Point& image_anchor, const Point& anchor) {
    // F(anchor) = image_anchor, so anchor + (target - image_anchor) is a
    // first-order guess for the preimage.
    return eval_inverse(sys, target, Point(anchor + (target - image_anchor)));
}

}  // namespace

// ---------------------------------------------------------------------------
// C1

ConditionRecord check_C1(const LyapunovPair& pair, const RegionSpec& region, double epsilon, std::size_t samples, std::uint64_t seed) {
    ConditionRecord rec;
    rec.name = "C1";
    rec.seed = seed;
    rec.samples = samples;
    if (!(epsilon > 0.0)) {
        rec.margin = 0.0;
        rec.values["delta0"] = 0.0;
        rec.values["epsilon"] = epsilon;
        rec.pass = false;
        rec.status = "empty";
        return rec;
    }
    const int n = pair.dimension();
    // Directions: the 2^n diagonals and coordinate axes first, then random
    // unit vectors. Diagonals are where the sup-ball corners sit.
    std::vector<Vector> dirs;
    for (int mask = 0; mask < (1 << n); ++mask) {
        Vector d(n);
        for (int k = 0; k < n; ++k) d[k] = (mask >> k) & 1 ? -1.0 : 1.0;
        dirs.push_back(d.normalized());
    }
    for (int k = 0; k < n; ++k) {
        dirs.push_back(Vector::Unit(n, k));
        dirs.push_back(-Vector::Unit(n, k));
    }
    const std::size_t fixed = dirs.size();
    const std::size_t total = std::max(samples, fixed);

    ConditionRecord inner = sampled_minimum("C1", total, seed, [&](std::size_t i, Rng& rng) {
        Sample s;
        const Point p = sample_base_point(rng, region.neighborhood, pair, i);
        Vector d(n);
        if (i < fixed) {
            d = dirs[i];
        } else {
            for (int k = 0; k < n; ++k) d[k] = standard_normal(rng);
            if (d.norm() == 0.0) d = dirs[0];
            d.normalize();
        }
        const Point q = p + epsilon * d;
        s.margin = std::max(pair.W(q, p), pair.V(q, p));
        s.witness = {p, q};
        return s;
    });
    rec.samples = total;
    rec.margin = inner.margin;
    rec.witness = inner.witness;
    rec.values["delta0"] = inner.margin;
    rec.values["epsilon"] = epsilon;
    finalize(rec);
    return rec;
}

// ---------------------------------------------------------------------------
// C3, C4, C9

ConditionReport certify_C3_C4_C9(const LyapunovPair& pair, const RegionSpec& region) {
    region.validate();
    ConditionReport report;
    const bool certifiable = pair.kind() == LyapunovPair::Kind::CoordinateSplit && pair.unstable_indices().size() == 1 &&
                             !pair.stable_indices().empty();
    const char* names[] = {"C3", "C4", "C9"};
    for (const char* name : names) {
        ConditionRecord rec;
        rec.name = name;
        rec.samples = 0;
        if (certifiable) {
            rec.status = "certified";
            rec.margin = 1.0;
            rec.pass = true;
        } else {
            rec.status = "not-certifiable";
            rec.margin = 0.0;
            rec.pass = false;
            rec.values["needs_sampled_retraction_evidence"] = 1.0;
        }
        if (std::string(name) == "C9") rec.values["alpha"] = certifiable ? 1.0 : 0.0;
        report.records.push_back(rec);
    }
    return report;
}

// ---------------------------------------------------------------------------
// C5 .. C8

ConditionReport check_C5_C6_C7_C8(const MapSystem& sys, const LyapunovPair& pair, const RegionSpec& region,
                                  std::size_t samples_per_set, std::uint64_t seed) {
    region.validate();
    require_coordinate_split(pair, "check_C5_C6_C7_C8");
    if (samples_per_set < 100) throw PreconditionError("samples_per_set must be at least 100");
    if (sys.dimension != pair.dimension()) throw PreconditionError("map and pair dimensions differ");
    const double delta = region.delta;
    const double Delta = region.Delta();
    const Box& box = region.neighborhood;
    const auto& S = pair.stable_indices();
    const auto& U = pair.unstable_indices();
    auto both = [&](const Point& q, const Point& p) { return std::max(pair.W(q, p), pair.V(q, p)); };

    ConditionReport report;

    // C5: F(T(delta,p)) inside Int P(delta, F(p)).
    report.records.push_back(sampled_minimum("C5", samples_per_set, seed, [&](std::size_t i, Rng& rng) {
        Sample s;
        const Point p = sample_base_point(rng, box, pair, i);
        const Point q = p + offset_T(rng, pair, delta, i);
        const Point fp = eval_forward(sys, p);
        const Point fq = eval_forward(sys, q);
        s.margin = delta - both(fq, fp);
        s.witness = {p, q};
        return s;
    }));

    // C6: forward image of P(delta,p) and backward image of P(delta,F(p)) stay
    // inside the open Delta boxes.
    ConditionRecord c6_fwd = sampled_minimum("C6.forward", samples_per_set, seed, [&](std::size_t i, Rng& rng) {
        Sample s;
        const Point p = sample_base_point(rng, box, pair, i);
        const Point q = p + offset_P(rng, pair, delta, i);
        s.margin = Delta - both(eval_forward(sys, q), eval_forward(sys, p));
        s.witness = {p, q};
        return s;
    });
    ConditionRecord c6_bwd = sampled_minimum("C6.backward", samples_per_set, seed, [&](std::size_t i, Rng& rng) {
        Sample s;
        const Point p = sample_base_point(rng, box, pair, i);
        const Point fp = eval_forward(sys, p);
        const Point q = fp + offset_P(rng, pair, delta, i);
        s.margin = Delta - both(inverse_near(sys, q, fp, p), p);
        s.witness = {p, q};
        return s;
    });
    {
        ConditionRecord c6 = c6_fwd.margin <= c6_bwd.margin ? c6_fwd : c6_bwd;
        c6.name = "C6";
        c6.samples = c6_fwd.samples + c6_bwd.samples;
        c6.values = {{"forward_margin", c6_fwd.margin}, {"backward_margin", c6_bwd.margin}};
        finalize(c6);
        report.records.push_back(c6);
    }

    // C7: F^{-1}(Q(delta,F(p))) misses T(Delta,p). A preimage x is outside T
    // when V(x,p) > 0 or W(x,p) > Delta.
    report.records.push_back(sampled_minimum("C7", samples_per_set, seed, [&](std::size_t i, Rng& rng) {
        Sample s;
        const Point p = sample_base_point(rng, box, pair, i);
        const Point fp = eval_forward(sys, p);
        const Point q = fp + offset_Q(rng, pair, delta, i);
        const Point x = inverse_near(sys, q, fp, p);
        s.margin = std::max(pair.V(x, p), pair.W(x, p) - Delta);
        s.witness = {p, q, x};
        return s;
    }));

    // Forward view of C7: the unstable gap of F(T(Delta,p)) stays below delta/2.
    {
        ConditionRecord half = sampled_minimum("C7.half_delta", samples_per_set, seed, [&](std::size_t i, Rng& rng) {
            Sample s;
            const Point p = sample_base_point(rng, box, pair, i);
            const Point q = p + offset_T(rng, pair, Delta, i);
            const double v = pair.V(eval_forward(sys, q), eval_forward(sys, p));
            s.margin = 0.5 * delta - v;
            s.aux = v;
            s.witness = {p, q};
            return s;
        });
        half.strict = false;
        half.values["max_V"] = half.values["aux_max"];
        half.values["bound"] = 0.5 * delta;
        half.values.erase("aux_max");
        finalize(half);
        report.records.push_back(half);
    }

    // C8.1: on the slab V(q,p) >= delta inside P(Delta,p) the unstable gap grows.
    report.records.push_back(sampled_minimum("C8.1", samples_per_set, seed, [&](std::size_t i, Rng& rng) {
        Sample s;
        const Point p = sample_base_point(rng, box, pair, i);
        const Point q = p + offset_slab(rng, pair, U, S, delta, Delta, i);
        s.margin = pair.V(eval_forward(sys, q), eval_forward(sys, p)) - pair.V(q, p);
        s.witness = {p, q};
        return s;
    }));

    // C8.2: on the slab W(q,F(p)) >= delta inside P(Delta,F(p)) the stable gap
    // grows under the inverse.
    report.records.push_back(sampled_minimum("C8.2", samples_per_set, seed, [&](std::size_t i, Rng& rng) {
        Sample s;
        const Point p = sample_base_point(rng, box, pair, i);
        const Point fp = eval_forward(sys, p);
        const Point q = fp + offset_slab(rng, pair, S, U, delta, Delta, i);
        s.margin = pair.W(inverse_near(sys, q, fp, p), p) - pair.W(q, fp);
        s.witness = {p, q};
        return s;
    }));

    for (auto& r : report.records) {
        r.values.erase("aux_max");
        r.values["delta"] = delta;
        r.values["Delta"] = Delta;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Condition G

ConditionReport check_condition_G(const MapSystem& sys, const LyapunovPair& pair, double delta, const Point& p,
                                  const Point& p_next, std::size_t samples, std::uint64_t seed) {
    if (!(delta > 0.0)) throw PreconditionError("condition G needs delta > 0");
    require_coordinate_split(pair, "check_condition_G");
    if (samples == 0) throw PreconditionError("condition G needs at least one sample");
    ConditionReport report;

    ConditionRecord image = sampled_minimum("G.image_boundary", samples, seed, [&](std::size_t i, Rng& rng) {
        Sample s;
        const Point q = p + offset_P(rng, pair, delta, i);
        const Point x = eval_forward(sys, q);
        s.margin = std::max(pair.V(x, p_next) - delta, delta - pair.W(x, p_next));
        s.witness = {q, x};
        return s;
    });
    image.values.erase("aux_max");
    report.records.push_back(image);

    ConditionRecord disjoint = sampled_minimum("G.Q_disjoint", samples, seed, [&](std::size_t i, Rng& rng) {
        Sample s;
        const Point q = p + offset_Q(rng, pair, delta, i);
        const Point x = eval_forward(sys, q);
        s.margin = std::max(pair.W(x, p_next), pair.V(x, p_next)) - delta;
        s.witness = {q, x};
        return s;
    });
    disjoint.values.erase("aux_max");
    report.records.push_back(disjoint);

    ConditionRecord retraction;
    retraction.name = "G.retraction";
    if (pair.unstable_indices().size() == 1) {
        retraction.status = "certified";
        retraction.margin = 1.0;
    } else {
        retraction.status = "unverified";
        retraction.margin = 0.0;
    }
    finalize(retraction);
    report.records.push_back(retraction);
    return report;
}

// ---------------------------------------------------------------------------
// Z-forms

double z_form(int k, double z, double v) {
    if (k < 0) throw PreconditionError("z_form needs k >= 0");
    const int deg = 2 * k;
    // sum_{j=0}^{2k} binom(2k+1, j+1) z^{2k-j} v^j, accumulated with running
    // powers and an exact integer binomial recurrence.
    double sum = 0.0;
    double binom = deg + 1;  // binom(2k+1, 1)
    double vpow = 1.0;
    for (int j = 0; j <= deg; ++j) {
        double zpow = 1.0;
        for (int e = 0; e < deg - j; ++e) zpow *= z;
        sum += binom * zpow * vpow;
        vpow *= v;
        binom = binom * (deg + 1 - (j + 1)) / (j + 2);
    }
    return sum;
}

ZFormSummary z_form_summary(int k, std::size_t circle_samples) {
    if (circle_samples == 0) throw PreconditionError("z_form_summary needs samples");
    ZFormSummary out;
    out.samples = circle_samples;
    out.circle_min = std::numeric_limits<double>::infinity();
    out.bound_worst_margin = std::numeric_limits<double>::infinity();
    std::size_t hold = 0;
    for (std::size_t i = 0; i < circle_samples; ++i) {
        const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(circle_samples);
        const double z = std::cos(t);
        const double v = std::sin(t);
        const double value = z_form(k, z, v);
        out.circle_min = std::min(out.circle_min, value);
        const double margin = value - (2 * k + 1) * std::pow(z, 2 * k);
        out.bound_worst_margin = std::min(out.bound_worst_margin, margin);
        if (margin >= 0.0) ++hold;
    }
    out.bound_hold_fraction = static_cast<double>(hold) / static_cast<double>(circle_samples);
    return out;
}

// ---------------------------------------------------------------------------
// Smallness of the remainders

ScalarField scalar_field(const std::string& source, const std::map<std::string, double>& params) {
    const auto e = expr::parse(source, expr::Symbols::coordinates(2, params));
    return [e](double x, double y) {
        const double vars[2] = {x, y};
        return e.eval(vars);
    };
}

namespace {

double ipow(double x, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= x;
    return r;
}

/// Observed vanishing order of f at the origin from the maxima on two small
/// circles; infinity when f vanishes on both.
double vanishing_order(const ScalarField& f, double r) {
    auto circle_max = [&](double radius) {
        double out = 0.0;
        for (int i = 0; i < 64; ++i) {
            const double t = 2.0 * std::numbers::pi * i / 64.0;
            out = std::max(out, std::abs(f(radius * std::cos(t), radius * std::sin(t))));
        }
        return out;
    };
    const double big = circle_max(r);
    const double small = circle_max(0.5 * r);
    if (big == 0.0 && small == 0.0) return std::numeric_limits<double>::infinity();
    if (small == 0.0) return std::numeric_limits<double>::infinity();
    return std::log2(big / small);
}

}  // namespace

ConditionReport check_smallness(const SmallnessInputs& in, std::size_t samples, std::uint64_t seed) {
    if (!in.X || !in.Y) throw PreconditionError("check_smallness needs X and Y");
    if (in.neighborhood.dim() != 2) throw PreconditionError("check_smallness works on planar neighborhoods");
    if (samples == 0) throw PreconditionError("check_smallness needs samples");
    const double reach = in.K * in.delta1;
    const LyapunovPair plane = LyapunovPair::coordinate_split(2, 1);

    struct Draw {
        double ps, pu, vs, vu;
    };
    // Strata: v_s = 0, v_u = 0, and extreme offsets, on top of the base-point strata.
    auto draw = [&](std::size_t i, Rng& rng) {
        const Point p = sample_base_point(rng, in.neighborhood, plane, i);
        Draw d{p[0], p[1], signed_uniform(rng, reach), signed_uniform(rng, reach)};
        switch ((i / 8) % 4) {
            case 1: d.vs = 0.0; break;
            case 2: d.vu = 0.0; break;
            case 3:
                d.vs = random_sign(rng) * reach;
                d.vu = random_sign(rng) * reach;
                break;
            default: break;
        }
        return d;
    };
    auto witness = [](const Draw& d) {
        Point p(2), v(2);
        p << d.ps, d.pu;
        v << d.vs, d.vu;
        return std::vector<Point>{p, v};
    };
    auto add = [&](ConditionReport& rep, const std::string& name, auto margin_of) {
        ConditionRecord rec = sampled_minimum(name, samples, seed, [&](std::size_t i, Rng& rng) {
            Sample s;
            const Draw d = draw(i, rng);
            s.margin = margin_of(d);
            s.witness = witness(d);
            return s;
        });
        rec.values.erase("aux_max");
        rec.strict = false;
        finalize(rec);
        rep.records.push_back(rec);
    };

    ConditionReport report;
    const double eps = in.epsilon;
    add(report, "lipschitz.X", [&](const Draw& d) {
        return eps * (std::abs(d.vs) + std::abs(d.vu)) - std::abs(in.X(d.ps + d.vs, d.pu + d.vu) - in.X(d.ps, d.pu));
    });
    add(report, "lipschitz.Y", [&](const Draw& d) {
        return eps * (std::abs(d.vs) + std::abs(d.vu)) - std::abs(in.Y(d.ps + d.vs, d.pu + d.vu) - in.Y(d.ps, d.pu));
    });
    add(report, "stable_weighted.X", [&](const Draw& d) {
        return (in.m - 1) * ipow(std::abs(d.ps), in.m - 1) * std::abs(d.vs) - std::abs(in.X(d.ps + d.vs, d.pu) - in.X(d.ps, d.pu));
    });
    add(report, "stable_origin.X", [&](const Draw& d) {
        return 0.5 * ipow(std::abs(d.vs), in.m) - std::abs(in.X(d.vs, d.pu) - in.X(0.0, d.pu));
    });
    add(report, "unstable_weighted.Y", [&](const Draw& d) {
        return (in.n - 1) / (in.K + 1.0) * ipow(std::abs(d.pu), in.n - 1) * (std::abs(d.vu) + std::abs(d.vs)) -
               std::abs(in.Y(d.ps + d.vs, d.pu + d.vu) - in.Y(d.ps, d.pu));
    });
    add(report, "unstable_origin.Y", [&](const Draw& d) {
        return 0.5 * ipow(std::abs(d.vu), in.n) - std::abs(in.Y(d.ps + d.vs, d.vu) - in.Y(d.ps, 0.0));
    });
    if (in.Xi) {
        add(report, "lipschitz.Xi", [&](const Draw& d) {
            return eps * (std::abs(d.vs) + std::abs(d.vu)) - std::abs(in.Xi(d.ps + d.vs, d.pu + d.vu) - in.Xi(d.ps, d.pu));
        });
    }
    if (in.H) {
        add(report, "lipschitz.H", [&](const Draw& d) {
            return eps * (std::abs(d.vs) + std::abs(d.vu)) - std::abs(in.H(d.ps + d.vs, d.pu + d.vu) - in.H(d.ps, d.pu));
        });
    }

    // The remainders must vanish to order m+1 (X) and n+1 (Y) at the origin.
    const auto order_record = [&](const std::string& name, const ScalarField& f, int required) {
        ConditionRecord rec;
        rec.name = name;
        rec.status = "informational";
        rec.strict = false;
        rec.samples = 128;
        rec.seed = seed;
        const double order = vanishing_order(f, 1e-2);
        rec.values["observed_order"] = order;
        rec.values["required_order"] = required;
        rec.margin = std::isinf(order) ? 1.0 : order - (required - 0.25);
        finalize(rec);
        report.records.push_back(rec);
    };
    order_record("order.X", in.X, in.m + 1);
    order_record("order.Y", in.Y, in.n + 1);
    return report;
}

}  // namespace nonhyp
