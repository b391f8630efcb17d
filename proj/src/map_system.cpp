#include "nonhyp/map_system.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "nonhyp/parallel.hpp"

namespace nonhyp {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string join_exprs(const std::vector<expr::Expr>& list) {
    std::string out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        if (i) out += ", ";
        out += list[i].to_string();
    }
    return out;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void build_jacobian(MapSystem& sys) {
    const auto symbols = expr::Symbols::coordinates(sys.dimension, sys.params);
    sys.jacobian.assign(static_cast<std::size_t>(sys.dimension), {});
    for (int i = 0; i < sys.dimension; ++i)
        for (int j = 0; j < sys.dimension; ++j)
            sys.jacobian[static_cast<std::size_t>(i)].push_back(sys.forward[static_cast<std::size_t>(i)].derivative(j, symbols));
}

std::vector<expr::Expr> parse_coordinates(const std::string& source, const std::map<std::string, double>& params,
                                          std::optional<int> expected) {
    // Count first with the widest symbol table, then re-parse so that a
    // reference to x3 in a 2D map is reported as an unknown identifier.
    auto probe = expr::parse_list(source, expr::Symbols::coordinates(kMaxDimension, params));
    const int n = static_cast<int>(probe.size());
    if (n < 1 || n > kMaxDimension)
        throw PreconditionError("map dimension must be between 1 and " + std::to_string(kMaxDimension) + ", got " + std::to_string(n));
    if (expected && *expected != n)
        throw ParseError("expected " + std::to_string(*expected) + " expressions, got " + std::to_string(n), 0);
    return expr::parse_list(source, expr::Symbols::coordinates(n, params));
}

}  // namespace

std::string MapSystem::forward_source() const { return join_exprs(forward); }
std::string MapSystem::inverse_source() const { return join_exprs(inverse); }

MapSystem parse_map(const std::string& source, const std::map<std::string, double>& params, std::optional<int> stable_split) {
    MapSystem sys;
    sys.params = params;
    sys.forward = parse_coordinates(source, params, std::nullopt);
    sys.dimension = static_cast<int>(sys.forward.size());
    sys.stable_split = stable_split.value_or(sys.dimension / 2);
    if (sys.stable_split < 0 || sys.stable_split > sys.dimension)
        throw PreconditionError("stable_split must lie in [0, dimension]");
    build_jacobian(sys);
    return sys;
}

MapSystem with_inverse(MapSystem sys, const std::string& inverse_source) {
    sys.inverse = parse_coordinates(inverse_source, sys.params, sys.dimension);
    return sys;
}

MapSystem model_map(int m, int n, const std::string& remainder_x, const std::string& remainder_y) {
    if (m < 3 || n < 3 || m % 2 == 0 || n % 2 == 0)
        throw PreconditionError("model exponents must be odd and at least 3");
    std::string fx = "x1 - x1^m";
    std::string fy = "x2 + x2^n";
    if (!trim(remainder_x).empty()) fx += " + (" + remainder_x + ")";
    if (!trim(remainder_y).empty()) fy += " + (" + remainder_y + ")";
    MapSystem sys = parse_map(fx + ", " + fy, {{"m", m}, {"n", n}}, 1);
    sys.builtin = "model";
    return sys;
}

MapSystem linear_diagonal(const std::vector<double>& multipliers, int stable_split) {
    std::string fwd;
    std::string inv;
    for (std::size_t i = 0; i < multipliers.size(); ++i) {
        if (multipliers[i] == 0.0) throw PreconditionError("linear multipliers must be nonzero");
        const std::string var = "x" + std::to_string(i + 1);
        if (i) {
            fwd += ", ";
            inv += ", ";
        }
        fwd += format_double(multipliers[i]) + "*" + var;
        inv += var + "/" + format_double(multipliers[i]);
    }
    MapSystem sys = with_inverse(parse_map(fwd, {}, stable_split), inv);
    sys.builtin = "linear";
    return sys;
}

MapSystem from_native(int dimension, int stable_split, NativeMap native, std::string name) {
    if (dimension < 1 || dimension > kMaxDimension) throw PreconditionError("map dimension out of range");
    if (!native.forward) throw PreconditionError("native map needs a forward function");
    MapSystem sys;
    sys.dimension = dimension;
    sys.stable_split = stable_split;
    sys.builtin = std::move(name);
    sys.native = std::make_shared<const NativeMap>(std::move(native));
    return sys;
}

MapSystem builtin_map(const std::string& name, const std::map<std::string, double>& params) {
    auto get = [&](const std::string& key, double fallback) {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    };
    if (name == "model") {
        for (const auto& [k, v] : params)
            if (k != "m" && k != "n") throw ConfigError("unknown parameter '" + k + "' for built-in model");
        return model_map(static_cast<int>(get("m", 3)), static_cast<int>(get("n", 3)));
    }
    if (name == "linear") {
        std::vector<double> mult;
        for (int i = 1; i <= kMaxDimension; ++i) {
            auto it = params.find("a" + std::to_string(i));
            if (it == params.end()) break;
            mult.push_back(it->second);
        }
        if (mult.empty()) mult = {0.5, 2.0};
        const int split = static_cast<int>(std::count_if(mult.begin(), mult.end(), [](double a) { return std::abs(a) < 1.0; }));
        return linear_diagonal(mult, split);
    }
    if (name == "identity") {
        const int n = static_cast<int>(get("n", 2));
        return linear_diagonal(std::vector<double>(static_cast<std::size_t>(n), 1.0), n / 2);
    }
    throw ConfigError("unknown built-in map '" + name + "'");
}

// ---------------------------------------------------------------------------
// Map files

std::map<std::string, double> parse_bindings(const std::string& text) {
    std::map<std::string, double> out;
    std::stringstream ss(text);
    std::string item;
    std::size_t offset = 0;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (!t.empty()) {
            const auto eq = t.find('=');
            if (eq == std::string::npos) throw ParseError("expected name=value in parameter list", offset);
            const std::string name = trim(t.substr(0, eq));
            const std::string value = trim(t.substr(eq + 1));
            char* end = nullptr;
            const double v = std::strtod(value.c_str(), &end);
            if (name.empty() || value.empty() || end != value.c_str() + value.size())
                throw ParseError("malformed parameter binding '" + t + "'", offset);
            out[name] = v;
        }
        offset += item.size() + 1;
    }
    return out;
}

Box parse_box(const std::string& text) {
    std::vector<double> lo;
    std::vector<double> hi;
    std::size_t i = 0;
    auto skip = [&] {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    };
    auto number = [&] {
        skip();
        const char* begin = text.c_str() + i;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) throw ParseError("expected a number in box", i);
        i += static_cast<std::size_t>(end - begin);
        return v;
    };
    auto expect = [&](char c) {
        skip();
        if (i >= text.size() || text[i] != c) throw ParseError(std::string("expected '") + c + "' in box", i);
        ++i;
    };
    for (;;) {
        expect('[');
        lo.push_back(number());
        expect(',');
        hi.push_back(number());
        expect(']');
        skip();
        if (i >= text.size()) break;
        if (text[i] != 'x' && text[i] != 'X') throw ParseError("expected 'x' between box intervals", i);
        ++i;
    }
    return Box(Eigen::Map<Vector>(lo.data(), static_cast<Eigen::Index>(lo.size())),
               Eigen::Map<Vector>(hi.data(), static_cast<Eigen::Index>(hi.size())));
}

std::string format_box(const Box& box) {
    std::string out;
    for (int i = 0; i < box.dim(); ++i) {
        if (i) out += " x ";
        out += "[" + format_double(box.lower[i]) + "," + format_double(box.upper[i]) + "]";
    }
    return out;
}

MapSystem parse_map_file(const std::string& text) {
    std::map<std::string, std::string> fields;
    std::map<std::string, std::size_t> field_pos;
    std::stringstream ss(text);
    std::string line;
    std::size_t offset = 0;
    static const std::vector<std::string> known = {"dimension", "forward", "inverse", "params", "stable_split", "domain"};
    while (std::getline(ss, line)) {
        const std::size_t line_start = offset;
        offset += line.size() + 1;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        if (trim(line).empty()) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) throw ParseError("expected 'key: value'", line_start);
        const std::string key = trim(line.substr(0, colon));
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ParseError("unknown key '" + key + "'", line_start);
        if (fields.count(key)) throw ParseError("duplicate key '" + key + "'", line_start);
        fields[key] = trim(line.substr(colon + 1));
        field_pos[key] = line_start + colon + 1;
    }
    if (!fields.count("forward")) throw ParseError("map file has no 'forward' entry", 0);
    const auto params = fields.count("params") ? parse_bindings(fields["params"]) : std::map<std::string, double>{};

    std::optional<int> split;
    if (fields.count("stable_split")) split = std::stoi(fields["stable_split"]);

    MapSystem sys;
    const std::string& fwd = fields["forward"];
    try {
        if (fwd.rfind("builtin", 0) == 0) {
            sys = builtin_map(trim(fwd.substr(7)), params);
            if (split) sys.stable_split = *split;
        } else {
            sys = parse_map(fwd, params, split);
        }
        if (fields.count("inverse")) sys = with_inverse(std::move(sys), fields["inverse"]);
    } catch (const ParseError& e) {
        throw ParseError("in map file: " + e.detail(), field_pos["forward"] + e.position());
    }
    if (fields.count("dimension") && std::stoi(fields["dimension"]) != sys.dimension)
        throw ParseError("dimension " + fields["dimension"] + " does not match " + std::to_string(sys.dimension) + " forward expressions",
                         field_pos["dimension"]);
    if (fields.count("domain")) {
        Box box = parse_box(fields["domain"]);
        if (box.dim() != sys.dimension) throw ParseError("domain dimension does not match the map", field_pos["domain"]);
        sys.domain = std::move(box);
    }
    return sys;
}

MapSystem load_map_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open map file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_map_file(buf.str());
}

std::string format_map_file(const MapSystem& sys) {
    if (sys.native) throw PreconditionError("native maps cannot be written as map files");
    std::string out;
    out += "dimension: " + std::to_string(sys.dimension) + "\n";
    out += "forward: " + sys.forward_source() + "\n";
    if (!sys.params.empty()) {
        std::string list;
        for (const auto& [name, value] : sys.params) list += (list.empty() ? "" : ", ") + name + "=" + format_double(value);
        out += "params: " + list + "\n";
    }
    if (!sys.inverse.empty()) out += "inverse: " + sys.inverse_source() + "\n";
    out += "stable_split: " + std::to_string(sys.stable_split) + "\n";
    if (sys.domain) out += "domain: " + format_box(*sys.domain) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

Point eval_forward(const MapSystem& sys, const Point& p) {
    if (p.size() != sys.dimension) throw PreconditionError("point dimension does not match the map");
    if (!all_finite(p)) throw DomainError("non-finite input point");
    Point out(sys.dimension);
    if (sys.native) {
        out = sys.native->forward(p);
    } else {
        const std::span<const double> vars(p.data(), static_cast<std::size_t>(p.size()));
        for (int i = 0; i < sys.dimension; ++i) out[i] = sys.forward[static_cast<std::size_t>(i)].eval(vars);
    }
    if (!all_finite(out)) throw DomainError("map evaluation produced a non-finite value");
    return out;
}

Matrix eval_jacobian_fd(const MapSystem& sys, const Point& p) {
    const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, p.norm());
    Matrix jac(sys.dimension, sys.dimension);
    for (int j = 0; j < sys.dimension; ++j) {
        Point plus = p;
        Point minus = p;
        plus[j] += h;
        minus[j] -= h;
        jac.col(j) = (eval_forward(sys, plus) - eval_forward(sys, minus)) / (2.0 * h);
    }
    return jac;
}

Matrix eval_jacobian(const MapSystem& sys, const Point& p) {
    if (p.size() != sys.dimension) throw PreconditionError("point dimension does not match the map");
    if (!all_finite(p)) throw DomainError("non-finite input point");
    Matrix jac(sys.dimension, sys.dimension);
    if (sys.native) {
        jac = sys.native->jacobian ? sys.native->jacobian(p) : eval_jacobian_fd(sys, p);
    } else {
        const std::span<const double> vars(p.data(), static_cast<std::size_t>(p.size()));
        for (int i = 0; i < sys.dimension; ++i)
            for (int j = 0; j < sys.dimension; ++j)
                jac(i, j) = sys.jacobian[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].eval(vars);
    }
    if (!all_finite(jac)) throw DomainError("Jacobian has non-finite entries");
    return jac;
}

Point eval_inverse(const MapSystem& sys, const Point& p, const std::optional<Point>& guess, const InverseOptions& options) {
    if (p.size() != sys.dimension) throw PreconditionError("point dimension does not match the map");
    if (!all_finite(p)) throw DomainError("non-finite input point");
    if (sys.native && sys.native->inverse) return sys.native->inverse(p);
    if (!sys.inverse.empty()) {
        Point out(sys.dimension);
        const std::span<const double> vars(p.data(), static_cast<std::size_t>(p.size()));
        for (int i = 0; i < sys.dimension; ++i) out[i] = sys.inverse[static_cast<std::size_t>(i)].eval(vars);
        if (!all_finite(out)) throw DomainError("inverse evaluation produced a non-finite value");
        return out;
    }

    // Damped Newton on F(q) = p. Once the tolerance is met we keep going while
    // the residual still decreases, which lands at machine precision.
    const double tol = options.relative_tolerance * std::max(1.0, p.norm());
    Point q = guess.value_or(p);
    double res = (eval_forward(sys, q) - p).norm();
    bool converged = res <= tol;
    for (int it = 0; it < options.max_iterations; ++it) {
        if (res == 0.0) break;
        const Matrix jac = eval_jacobian(sys, q);
        Eigen::FullPivLU<Matrix> lu(jac);
        if (!lu.isInvertible()) throw ConvergenceError("singular Jacobian during Newton inversion");
        const Vector step = lu.solve(eval_forward(sys, q) - p);
        double damping = 1.0;
        Point next = q - step;
        double next_res = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 30; ++k) {
            try {
                next_res = (eval_forward(sys, next) - p).norm();
            } catch (const DomainError&) {
                next_res = std::numeric_limits<double>::infinity();
            }
            if (next_res < res) break;
            damping *= 0.5;
            next = q - damping * step;
        }
        if (!(next_res < res)) break;  // no further progress possible
        q = next;
        res = next_res;
        if (res <= tol) converged = true;
    }
    if (!converged) throw ConvergenceError("Newton inversion did not converge in " + std::to_string(options.max_iterations) + " iterations");
    return q;
}

double c1_distance(const MapSystem& f, const MapSystem& g, const Box& region, int grid_per_axis) {
    if (f.dimension != g.dimension) throw PreconditionError("c1_distance: dimension mismatch");
    if (region.dim() != f.dimension) throw PreconditionError("c1_distance: region dimension mismatch");
    if (grid_per_axis < 2) throw PreconditionError("c1_distance: grid_per_axis must be at least 2");
    const int n = f.dimension;
    std::size_t total = 1;
    for (int i = 0; i < n; ++i) total *= static_cast<std::size_t>(grid_per_axis);

    std::vector<double> c0(total);
    std::vector<double> c1(total);
    parallel_for(total, [&](std::size_t idx) {
        Point x(n);
        std::size_t rest = idx;
        for (int i = 0; i < n; ++i) {
            const auto k = rest % static_cast<std::size_t>(grid_per_axis);
            rest /= static_cast<std::size_t>(grid_per_axis);
            const double t = static_cast<double>(k) / (grid_per_axis - 1);
            x[i] = k + 1 == static_cast<std::size_t>(grid_per_axis) ? region.upper[i] : region.lower[i] + t * (region.upper[i] - region.lower[i]);
        }
        c0[idx] = (eval_forward(f, x) - eval_forward(g, x)).norm();
        c1[idx] = operator_norm(eval_jacobian(f, x) - eval_jacobian(g, x));
    });
    return *std::max_element(c0.begin(), c0.end()) + *std::max_element(c1.begin(), c1.end());
}

}  // namespace nonhyp
