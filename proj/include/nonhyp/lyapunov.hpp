#pragma once

// Lyapunov pairs (W, V), the sets P/Q/T/R built from them, and sampled
// verification of the shadowing conditions with explicit margins.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nonhyp/expr.hpp"
#include "nonhyp/linalg.hpp"
#include "nonhyp/map_system.hpp"

namespace nonhyp {

class LyapunovPair {
public:
    enum class Kind { CoordinateSplit, UserDefined };

    /// W = max over the first `stable_split` coordinates of |q_i - p_i|,
    /// V = max over the remaining ones.
    static LyapunovPair coordinate_split(int dimension, int stable_split);
    /// Expressions over q1..qn, p1..pn.
    static LyapunovPair user_defined(int dimension, const std::string& w_source, const std::string& v_source,
                                     const std::map<std::string, double>& params = {});

    double W(const Point& q, const Point& p) const;
    double V(const Point& q, const Point& p) const;

    Kind kind() const { return kind_; }
    int dimension() const { return dimension_; }
    const std::vector<int>& stable_indices() const { return stable_; }
    const std::vector<int>& unstable_indices() const { return unstable_; }

private:
    Kind kind_ = Kind::CoordinateSplit;
    int dimension_ = 0;
    std::vector<int> stable_;
    std::vector<int> unstable_;
    expr::Expr w_expr_;
    expr::Expr v_expr_;
};

/// Tolerance used for the equality V = a in Q and V = 0 in T.
inline double level_tolerance(double a) { return 1e-12 * a; }

bool in_P(const LyapunovPair& pair, double a, const Point& p, const Point& q);
bool in_Q(const LyapunovPair& pair, double a, const Point& p, const Point& q);
bool in_T(const LyapunovPair& pair, double a, const Point& p, const Point& q);
bool in_R(const LyapunovPair& pair, double b, double a, const Point& p, const Point& q);

struct RegionSpec {
    double delta = 0.01;
    double K = 2.0;
    double alpha = 1.0;
    Box neighborhood;                 // the compact set on which conditions are checked
    std::optional<double> delta1;     // default 0.05 * diameter(neighborhood)

    double Delta() const { return K * delta; }
    double delta1_value() const { return delta1.value_or(0.05 * neighborhood.diameter()); }
    void validate() const;
};

/// One verified (or certified) condition. `margin` is signed: positive means
/// the defining inequality holds with room to spare.
struct ConditionRecord {
    std::string name;
    bool pass = false;
    double margin = 0.0;
    std::vector<Point> witness;       // sample achieving the worst margin (p, q, ...)
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    bool strict = true;               // strict: pass iff margin > 0; otherwise margin >= 0
    std::string status = "sampled";   // sampled | certified | not-certifiable | unverified | informational
    std::map<std::string, double> values;  // extra named quantities (delta0, alpha, bounds)
};

struct ConditionReport {
    std::vector<ConditionRecord> records;

    bool all_pass() const;
    const ConditionRecord& at(const std::string& name) const;
    bool contains(const std::string& name) const;
    void append(const ConditionReport& other);

    std::string to_json() const;
    /// name,pass,margin,samples,seed,status
    std::string to_csv() const;
};

/// Largest sampled delta0 with P(delta, p) inside the open eps-ball; uses
/// delta0 = min over p, unit d of max(W,V)(p + eps d, p).
ConditionRecord check_C1(const LyapunovPair& pair, const RegionSpec& region, double epsilon, std::size_t samples = 4096,
                         std::uint64_t seed = 0);

/// Structural certification for coordinate-split pairs with one unstable
/// coordinate. Other pairs get records with status "not-certifiable".
ConditionReport certify_C3_C4_C9(const LyapunovPair& pair, const RegionSpec& region);

/// Sampled checks of C5, C6, C7, C8.1 and C8.2, plus the informational record
/// "C7.half_delta" holding max V(F(q),F(p)) over q in T(Delta, p).
ConditionReport check_C5_C6_C7_C8(const MapSystem& sys, const LyapunovPair& pair, const RegionSpec& region,
                                  std::size_t samples_per_set, std::uint64_t seed);

/// Condition G(delta, p, p'). Records:
///   "G.image_boundary"  F(P) meets the boundary of P' only inside Q'
///                       (margin: F(P) stays within the W-bounds of P' while
///                       inside its V-slab, a sufficient form)
///   "G.Q_disjoint"      F(Q) misses P'
///   "G.retraction"      structural status of the retraction clause
ConditionReport check_condition_G(const MapSystem& sys, const LyapunovPair& pair, double delta, const Point& p,
                                  const Point& p_next, std::size_t samples, std::uint64_t seed = 0);

/// Z_{2k}(z,v) with (z+v)^{2k+1} - z^{2k+1} = v * Z_{2k}(z,v).
double z_form(int k, double z, double v);

struct ZFormSummary {
    double circle_min = 0.0;          // min of Z_{2k} on the unit circle
    double bound_worst_margin = 0.0;  // min of Z_{2k}(z,v) - (2k+1) z^{2k}
    double bound_hold_fraction = 0.0; // share of circle samples where that bound holds
    std::size_t samples = 0;
};
ZFormSummary z_form_summary(int k, std::size_t circle_samples);

/// Remainders X, Y of the model family and optionally Xi, H of its inverse, as
/// scalar functions of (x, y).
using ScalarField = std::function<double(double, double)>;
ScalarField scalar_field(const std::string& source, const std::map<std::string, double>& params = {});

struct SmallnessInputs {
    ScalarField X;
    ScalarField Y;
    ScalarField Xi;  // optional
    ScalarField H;   // optional
    int m = 3;
    int n = 3;
    double K = 2.0;
    double delta1 = 0.01;
    double epsilon = 0.1;
    Box neighborhood;
};

/// Per-inequality worst margins over sampled (p, v) with |v_s|, |v_u| <= K delta1.
/// Records: lipschitz.X, lipschitz.Y, stable_weighted.X, stable_origin.X,
/// unstable_weighted.Y, unstable_origin.Y, lipschitz.Xi, lipschitz.H (when
/// supplied) and order.X, order.Y (vanishing order near the origin).
/// All are non-strict: a margin of exactly zero passes.
ConditionReport check_smallness(const SmallnessInputs& inputs, std::size_t samples, std::uint64_t seed);

}  // namespace nonhyp
