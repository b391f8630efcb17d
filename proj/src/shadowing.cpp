#include "nonhyp/shadowing.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nonhyp/parallel.hpp"

namespace nonhyp {

std::string to_string(NoiseModel model) {
    switch (model) {
        case NoiseModel::UniformBox: return "uniform-box";
        case NoiseModel::GaussianClipped: return "gaussian-clipped";
        case NoiseModel::AdversarialFace: return "adversarial-face";
    }
    return "uniform-box";
}

NoiseModel parse_noise_model(const std::string& name) {
    if (name == "uniform-box") return NoiseModel::UniformBox;
    if (name == "gaussian-clipped") return NoiseModel::GaussianClipped;
    if (name == "adversarial-face") return NoiseModel::AdversarialFace;
    throw ConfigError("unknown noise model '" + name + "' (expected uniform-box, gaussian-clipped or adversarial-face)");
}

namespace {

// Keeps |eta| strictly below d after rounding.
constexpr double kShrink = 0.999999;

/// A perturbation of norm < 1; scaled by d by the caller.
Vector unit_noise(Rng& rng, int n, int stable_split, NoiseModel model) {
    Vector u(n);
    switch (model) {
        case NoiseModel::UniformBox: {
            const double half = kShrink / std::sqrt(static_cast<double>(n));
            for (int i = 0; i < n; ++i) u[i] = uniform(rng, -half, half);
            break;
        }
        case NoiseModel::GaussianClipped: {
            for (int i = 0; i < n; ++i) u[i] = standard_normal(rng) / (2.0 * std::sqrt(static_cast<double>(n)));
            const double norm = u.norm();
            if (norm >= kShrink) u *= kShrink / norm;
            break;
        }
        case NoiseModel::AdversarialFace: {
            // Push along an unstable axis, toward the faces where V is extremal.
            u.setZero();
            const int unstable = n - stable_split;
            const int axis = unstable > 0 ? stable_split + static_cast<int>(rng() % static_cast<std::uint64_t>(unstable))
                                          : static_cast<int>(rng() % static_cast<std::uint64_t>(n));
            u[axis] = (rng() >> 63) ? kShrink : -kShrink;
            break;
        }
    }
    return u;
}

PseudoTrajectory build_trajectory(const MapSystem& sys, const Point& p0, int m, double d, NoiseModel noise,
                                  std::uint64_t seed, const std::optional<Box>& domain_override) {
    if (!(d >= 0.0)) throw PreconditionError("noise amplitude d must be nonnegative");
    if (m < 1) throw PreconditionError("pseudotrajectory needs at least one step");
    if (p0.size() != sys.dimension) throw PreconditionError("p0 dimension does not match the map");
    const std::optional<Box> domain = domain_override ? domain_override : sys.domain;
    if (domain && !domain->contains(p0)) throw DomainError("pseudotrajectory leaves the domain at index 0");

    PseudoTrajectory traj;
    traj.declared_d = d;
    traj.noise_model = noise;
    traj.seed = seed;
    traj.points.reserve(static_cast<std::size_t>(m) + 1);
    traj.points.push_back(p0);
    Rng rng = make_stream(seed, "pseudotrajectory");
    for (int k = 0; k < m; ++k) {
        const Point image = eval_forward(sys, traj.points.back());
        Vector eta = d * unit_noise(rng, sys.dimension, sys.stable_split, noise);
        Point next = image + eta;
        // Rounding in image + eta can push the realized gap past d when d is
        // tiny relative to |image|; shrink deterministically until it fits.
        for (int shrink = 0; shrink < 60 && d > 0.0 && (next - image).norm() >= d; ++shrink) {
            eta *= 0.5;
            next = image + eta;
        }
        if (d > 0.0 && (next - image).norm() >= d) next = image;
        if (domain && !domain->contains(next))
            throw DomainError("pseudotrajectory leaves the domain at index " + std::to_string(k + 1));
        traj.points.push_back(next);
    }
    return traj;
}

}  // namespace

PseudoTrajectory generate_pseudotrajectory(const MapSystem& sys, const Point& p0, int m, double d, NoiseModel noise,
                                           std::uint64_t seed, const std::optional<Box>& domain) {
    PseudoTrajectory traj = build_trajectory(sys, p0, m, d, noise, seed, domain);
    const double gap = measure_pseudotrajectory(sys, traj);
    if (gap > d) throw DomainError("generated pseudotrajectory exceeds its declared gap");
    return traj;
}

Point draw_confined_start(const MapSystem& sys, const Box& region, int steps, Rng& rng, int max_attempts) {
    if (region.dim() != sys.dimension) throw PreconditionError("start region dimension does not match the map");
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        Point p0(region.dim());
        for (int i = 0; i < region.dim(); ++i) p0[i] = uniform(rng, region.lower[i], region.upper[i]);
        Point x = p0;
        bool inside = true;
        try {
            for (int k = 0; k < steps && inside; ++k) {
                x = eval_forward(sys, x);
                inside = region.contains(x);
            }
        } catch (const DomainError&) {
            inside = false;
        }
        if (inside) return p0;
    }
    throw DomainError("no start point with an orbit confined to the region after " + std::to_string(max_attempts) + " draws");
}

double measure_pseudotrajectory(const MapSystem& sys, const std::vector<Point>& points) {
    double gap = 0.0;
    for (std::size_t k = 0; k + 1 < points.size(); ++k) gap = std::max(gap, (points[k + 1] - eval_forward(sys, points[k])).norm());
    return gap;
}

double measure_pseudotrajectory(const MapSystem& sys, const PseudoTrajectory& traj) {
    return measure_pseudotrajectory(sys, traj.points);
}

PseudoTrajectory concatenate(const PseudoTrajectory& a, const PseudoTrajectory& b) {
    PseudoTrajectory out = a;
    out.points.insert(out.points.end(), b.points.begin(), b.points.end());
    out.declared_d = std::max(a.declared_d, b.declared_d);
    return out;
}

double orbit_deviation(const MapSystem& sys, const Point& r, const std::vector<Point>& points) {
    Point x = r;
    double dev = (x - points.front()).norm();
    for (std::size_t k = 1; k < points.size(); ++k) {
        x = eval_forward(sys, x);
        dev = std::max(dev, (x - points[k]).norm());
    }
    return dev;
}

// ---------------------------------------------------------------------------
// Orbit solver

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct OrbitSystem {
    const MapSystem& sys;
    const std::vector<Point>& anchor;  // the pseudotrajectory
    int n;
    int m;
    int s;

    Eigen::Index unknowns() const { return static_cast<Eigen::Index>(n) * (m + 1); }

    /// Stacked equations: stable block of x_0, orbit residuals, unstable block of x_m.
    Vector equations(const Vector& X, double* scaled_orbit_residual) const {
        Vector G(unknowns());
        Eigen::Index row = 0;
        for (int i = 0; i < s; ++i) G[row++] = X[i] - anchor.front()[i];
        double worst = 0.0;
        for (int k = 0; k < m; ++k) {
            const Point xk = X.segment(static_cast<Eigen::Index>(k) * n, n);
            const Point xk1 = X.segment(static_cast<Eigen::Index>(k + 1) * n, n);
            const Vector r = xk1 - eval_forward(sys, xk);
            G.segment(row, n) = r;
            row += n;
            worst = std::max(worst, r.norm() / std::max(1.0, xk1.norm()));
        }
        for (int i = s; i < n; ++i) G[row++] = X[static_cast<Eigen::Index>(m) * n + i] - anchor.back()[i];
        if (scaled_orbit_residual) *scaled_orbit_residual = worst;
        return G;
    }

    SparseMatrix jacobian(const Vector& X) const {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(static_cast<std::size_t>(m) * static_cast<std::size_t>(n * n + n) + static_cast<std::size_t>(n));
        Eigen::Index row = 0;
        for (int i = 0; i < s; ++i) trips.emplace_back(row++, i, 1.0);
        for (int k = 0; k < m; ++k) {
            const Point xk = X.segment(static_cast<Eigen::Index>(k) * n, n);
            const Matrix J = eval_jacobian(sys, xk);
            const Eigen::Index col = static_cast<Eigen::Index>(k) * n;
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j)
                    if (J(i, j) != 0.0) trips.emplace_back(row + i, col + j, -J(i, j));
                trips.emplace_back(row + i, col + n + i, 1.0);
            }
            row += n;
        }
        for (int i = s; i < n; ++i) trips.emplace_back(row++, static_cast<Eigen::Index>(m) * n + i, 1.0);
        SparseMatrix A(unknowns(), unknowns());
        A.setFromTriplets(trips.begin(), trips.end());
        return A;
    }
};

/// Merit used by the line search: the scaled orbit residual together with the
/// boundary-condition defects.
double merit(const OrbitSystem& os, const Vector& X, double* orbit_residual) {
    const Vector G = os.equations(X, orbit_residual);
    double bc = 0.0;
    for (int i = 0; i < os.s; ++i) bc = std::max(bc, std::abs(G[i]));
    for (Eigen::Index i = G.size() - (os.n - os.s); i < G.size(); ++i) bc = std::max(bc, std::abs(G[i]));
    return std::max(*orbit_residual, bc);
}

}  // namespace

ShadowResult find_shadow_point(const MapSystem& sys, const PseudoTrajectory& traj, double epsilon, const ShadowOptions& options) {
    if (traj.points.size() < 2) throw PreconditionError("find_shadow_point needs at least two points");
    const int n = sys.dimension;
    const int m = traj.steps();
    OrbitSystem os{sys, traj.points, n, m, sys.stable_split};

    Vector X(os.unknowns());
    for (int k = 0; k <= m; ++k) X.segment(static_cast<Eigen::Index>(k) * n, n) = traj.points[static_cast<std::size_t>(k)];

    ShadowResult result;
    double orbit_res = 0.0;
    double current = merit(os, X, &orbit_res);
    result.residual_history.push_back(orbit_res);

    // Newton with backtracking until the tolerance is met, then one extra
    // full step that is kept only if it lowers the merit further.
    for (int it = 0; it < options.max_newton && current > 0.0; ++it) {
        const bool polishing = current <= options.residual_tolerance;
        const Vector G = os.equations(X, nullptr);
        const SparseMatrix A = os.jacobian(X);
        Vector step;
        Eigen::SparseLU<SparseMatrix> lu;
        lu.analyzePattern(A);
        lu.factorize(A);
        if (lu.info() == Eigen::Success) step = lu.solve(-G);
        if (lu.info() != Eigen::Success || !step.allFinite()) {
            // Singular orbit system: take a regularized least-squares step.
            result.regularized = true;
            SparseMatrix N = SparseMatrix(A.transpose()) * A;
            for (Eigen::Index i = 0; i < N.rows(); ++i) N.coeffRef(i, i) += 1e-8;
            Eigen::SimplicialLDLT<SparseMatrix> ldlt(N);
            if (ldlt.info() == Eigen::Success) step = ldlt.solve(-(A.transpose() * G));
            if (ldlt.info() != Eigen::Success || !step.allFinite())
                throw ConvergenceError("orbit system is singular even after regularization");
        }

        ++result.iterations;
        bool accepted = false;
        double t = 1.0;
        for (int ls = 0; ls < (polishing ? 1 : 30); ++ls, t *= 0.5) {
            const Vector trial = X + t * step;
            double trial_res = 0.0;
            double trial_merit = 0.0;
            try {
                trial_merit = merit(os, trial, &trial_res);
            } catch (const DomainError&) {
                continue;
            }
            if (trial_merit < current) {
                X = trial;
                current = trial_merit;
                orbit_res = trial_res;
                result.residual_history.push_back(orbit_res);
                accepted = true;
                break;
            }
        }
        if (!accepted || polishing) break;
    }

    result.orbit.resize(static_cast<std::size_t>(m) + 1);
    for (int k = 0; k <= m; ++k) result.orbit[static_cast<std::size_t>(k)] = X.segment(static_cast<Eigen::Index>(k) * n, n);
    result.shadow_point = result.orbit.front();
    result.residual = orbit_res;
    try {
        result.deviation = orbit_deviation(sys, result.shadow_point, traj.points);
    } catch (const DomainError&) {
        result.deviation = std::numeric_limits<double>::infinity();
    }
    result.converged = std::isfinite(result.deviation) && result.deviation < epsilon && result.residual < options.residual_tolerance;
    return result;
}

// ---------------------------------------------------------------------------
// Experiment

std::string ShadowingTable::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "epsilon,d,trials,successes,escaped,success_rate,max_deviation,mean_iterations\n";
    for (const auto& r : rows)
        os << r.epsilon << ',' << r.d << ',' << r.trials << ',' << r.successes << ',' << r.escaped << ',' << r.success_rate << ','
           << r.max_deviation << ',' << r.mean_iterations << '\n';
    return os.str();
}

ShadowingTable shadowing_experiment(const MapSystem& sys, const LyapunovPair& pair, const RegionSpec& region,
                                    const ShadowingExperimentConfig& config) {
    if (config.d_grid.empty() || config.epsilon_grid.empty()) throw PreconditionError("experiment grids must be nonempty");
    region.validate();
    ShadowingTable table;

    if (config.check_conditions) {
        table.conditions = certify_C3_C4_C9(pair, region);
        for (double eps : config.epsilon_grid) {
            ConditionRecord c1 = check_C1(pair, region, eps, 1024, config.seed);
            std::ostringstream name;
            name.precision(17);
            name << "C1[epsilon=" << eps << "]";
            c1.name = name.str();
            table.conditions.records.push_back(c1);
        }
        if (pair.kind() == LyapunovPair::Kind::CoordinateSplit)
            table.conditions.append(check_C5_C6_C7_C8(sys, pair, region, std::max<std::size_t>(100, config.condition_samples), config.seed));
    }

    const std::size_t nd = config.d_grid.size();
    const std::size_t trials = config.trials;
    if (trials == 0) return table;
    struct Outcome {
        bool escaped = false;
        double deviation = std::numeric_limits<double>::infinity();
        double residual = std::numeric_limits<double>::infinity();
        int iterations = 0;
    };
    std::vector<Outcome> outcomes(nd * trials);
    const ShadowOptions options;
    parallel_for(nd * trials, [&](std::size_t idx) {
        const std::size_t di = idx / trials;
        const std::size_t t = idx % trials;
        Rng start = make_stream(config.seed, "shadow.p0", t);
        Outcome& out = outcomes[idx];
        try {
            const Point p0 = draw_confined_start(sys, region.neighborhood, config.steps, start);
            const auto traj = generate_pseudotrajectory(sys, p0, config.steps, config.d_grid[di], config.noise,
                                                        stream_seed(config.seed, "shadow.noise", t));
            const auto res = find_shadow_point(sys, traj, std::numeric_limits<double>::infinity(), options);
            out.deviation = res.deviation;
            out.residual = res.residual;
            out.iterations = res.iterations;
        } catch (const DomainError&) {
            out.escaped = true;
        } catch (const ConvergenceError&) {
        }
    });

    for (double eps : config.epsilon_grid) {
        double best_d = -1.0;
        for (std::size_t di = 0; di < nd; ++di) {
            ShadowingRow row;
            row.epsilon = eps;
            row.d = config.d_grid[di];
            row.trials = trials;
            double iter_sum = 0.0;
            std::size_t solved = 0;
            for (std::size_t t = 0; t < trials; ++t) {
                const Outcome& o = outcomes[di * trials + t];
                if (o.escaped) {
                    ++row.escaped;
                    continue;
                }
                ++solved;
                iter_sum += o.iterations;
                if (std::isfinite(o.deviation)) row.max_deviation = std::max(row.max_deviation, o.deviation);
                if (o.deviation < eps && o.residual < options.residual_tolerance) ++row.successes;
            }
            row.success_rate = trials ? static_cast<double>(row.successes) / static_cast<double>(trials) : 0.0;
            row.mean_iterations = solved ? iter_sum / static_cast<double>(solved) : 0.0;
            if (trials && row.successes == trials) best_d = std::max(best_d, row.d);
            table.rows.push_back(row);
        }
        if (best_d >= 0.0) table.empirical_d[eps] = best_d;
    }
    return table;
}

}  // namespace nonhyp
