#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nonhyp/expr.hpp"
#include "nonhyp/linalg.hpp"

namespace nonhyp {

/// Natively coded map, for systems that are awkward to write as expressions.
struct NativeMap {
    std::function<Vector(const Vector&)> forward;
    std::function<Matrix(const Vector&)> jacobian;  // optional; finite differences otherwise
    std::function<Vector(const Vector&)> inverse;   // optional; Newton otherwise
};

/// A diffeomorphism of R^n (1 <= n <= 4) given by coordinate expressions or
/// native callbacks. The first `stable_split` coordinates form the stable
/// block, the rest the center-unstable block.
struct MapSystem {
    int dimension = 0;
    int stable_split = 0;
    std::map<std::string, double> params;
    std::vector<expr::Expr> forward;
    std::vector<expr::Expr> inverse;                  // empty when not supplied
    std::vector<std::vector<expr::Expr>> jacobian;    // jacobian[i][j] = d forward_i / d x_j
    std::optional<Box> domain;
    std::string builtin;                              // empty for user maps
    std::shared_ptr<const NativeMap> native;

    bool has_inverse() const { return !inverse.empty() || (native && native->inverse); }
    int unstable_dim() const { return dimension - stable_split; }

    /// Text of the forward expressions, re-parseable by parse_map.
    std::string forward_source() const;
    std::string inverse_source() const;
};

inline constexpr int kMaxDimension = 4;

/// Parses "expr1, expr2, ..." over variables x1..xn; n is the number of
/// expressions. stable_split defaults to floor(n/2).
MapSystem parse_map(const std::string& source, const std::map<std::string, double>& params = {},
                    std::optional<int> stable_split = std::nullopt);

/// Attaches closed-form inverse expressions to a parsed map.
MapSystem with_inverse(MapSystem sys, const std::string& inverse_source);

/// Model family F(x,y) = (x - x^m + X(x,y), y + y^n + Y(x,y)); X and Y are
/// optional expressions in x1, x2. m and n must be odd and at least 3.
MapSystem model_map(int m = 3, int n = 3, const std::string& remainder_x = "", const std::string& remainder_y = "");

/// Diagonal linear map with closed-form inverse.
MapSystem linear_diagonal(const std::vector<double>& multipliers, int stable_split);

MapSystem from_native(int dimension, int stable_split, NativeMap native, std::string name);

/// Looks up a built-in by name ("model", "linear", "identity") with parameters.
MapSystem builtin_map(const std::string& name, const std::map<std::string, double>& params);

/// Map definition file: one `key: value` per line, '#' starts a comment.
/// Keys: dimension, forward, inverse, params, stable_split, domain.
///   forward: x1 - x1^m, x2 + x2^n      (or  forward: builtin model)
///   params: m=3, n=3
///   domain: [-0.2,0.2] x [-0.2,0.2]
MapSystem parse_map_file(const std::string& text);
MapSystem load_map_file(const std::string& path);
std::string format_map_file(const MapSystem& sys);

Point eval_forward(const MapSystem& sys, const Point& p);
Matrix eval_jacobian(const MapSystem& sys, const Point& p);
/// Central differences with step cbrt(eps) * max(1, |p|).
Matrix eval_jacobian_fd(const MapSystem& sys, const Point& p);

struct InverseOptions {
    int max_iterations = 100;
    double relative_tolerance = 1e-12;
};

/// Closed-form inverse when available, otherwise damped Newton from `guess`
/// (default: p itself).
Point eval_inverse(const MapSystem& sys, const Point& p, const std::optional<Point>& guess = std::nullopt,
                   const InverseOptions& options = {});

/// Grid lower bound of max|F - G| + max|DF - DG| over the box.
double c1_distance(const MapSystem& f, const MapSystem& g, const Box& region, int grid_per_axis);

/// Parses "[a,b] x [c,d] ..." into a box.
Box parse_box(const std::string& text);
std::string format_box(const Box& box);

/// Parses "name=value, name=value".
std::map<std::string, double> parse_bindings(const std::string& text);

}  // namespace nonhyp
