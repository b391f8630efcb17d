#pragma once

// Pseudotrajectories and the search for exact orbits that shadow them.
//
// The shadow is found by solving the all-points orbit system
//   x_{k+1} = F(x_k),  k = 0..m-1,
// closed by pinning the stable block of x_0 to p_0 and the unstable block of
// x_m to p_m. For a hyperbolic linear map this is exactly the classical
// shadow: stable errors summed forward, unstable errors summed backward.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nonhyp/lyapunov.hpp"
#include "nonhyp/map_system.hpp"
#include "nonhyp/parallel.hpp"

namespace nonhyp {

enum class NoiseModel { UniformBox, GaussianClipped, AdversarialFace };

std::string to_string(NoiseModel model);
NoiseModel parse_noise_model(const std::string& name);

struct PseudoTrajectory {
    std::vector<Point> points;  // p_0 .. p_m
    double declared_d = 0.0;
    NoiseModel noise_model = NoiseModel::UniformBox;
    std::uint64_t seed = 0;

    int steps() const { return static_cast<int>(points.size()) - 1; }
};

/// p_{k+1} = F(p_k) + eta_k with |eta_k| < d. Throws DomainError naming the
/// first index that leaves `domain` (defaults to the map's declared domain).
PseudoTrajectory generate_pseudotrajectory(const MapSystem& sys, const Point& p0, int m, double d, NoiseModel noise,
                                           std::uint64_t seed, const std::optional<Box>& domain = std::nullopt);

/// Draws a start point uniformly in `region` whose exact orbit of `steps`
/// iterates stays in `region`, by rejection (at most `max_attempts` draws).
Point draw_confined_start(const MapSystem& sys, const Box& region, int steps, Rng& rng, int max_attempts = 10000);

/// max_k |p_{k+1} - F(p_k)|; zero for a single point.
double measure_pseudotrajectory(const MapSystem& sys, const std::vector<Point>& points);
double measure_pseudotrajectory(const MapSystem& sys, const PseudoTrajectory& traj);

/// Joins b after a (the junction gap |b_0 - F(a_m)| counts toward the measure).
PseudoTrajectory concatenate(const PseudoTrajectory& a, const PseudoTrajectory& b);

struct ShadowResult {
    Point shadow_point;
    std::vector<Point> orbit;             // Newton orbit x_0..x_m
    double deviation = 0.0;               // max_k |F^k(r) - p_k| by forward iteration from r
    double residual = 0.0;                // max_k |x_{k+1} - F(x_k)| / max(1, |x_{k+1}|)
    int iterations = 0;
    bool converged = false;
    bool regularized = false;             // a damped least-squares step was needed
    std::vector<double> residual_history;
};

struct ShadowOptions {
    int max_newton = 50;
    double residual_tolerance = 1e-10;
};

ShadowResult find_shadow_point(const MapSystem& sys, const PseudoTrajectory& traj, double epsilon,
                               const ShadowOptions& options = {});

/// Forward-iterates r and returns max_k |F^k(r) - p_k|.
double orbit_deviation(const MapSystem& sys, const Point& r, const std::vector<Point>& points);

struct ShadowingRow {
    double epsilon = 0.0;
    double d = 0.0;
    std::size_t trials = 0;
    std::size_t successes = 0;
    std::size_t escaped = 0;              // pseudotrajectory left the domain
    double success_rate = 0.0;
    double max_deviation = 0.0;
    double mean_iterations = 0.0;
};

struct ShadowingExperimentConfig {
    std::vector<double> d_grid;
    std::vector<double> epsilon_grid;
    std::size_t trials = 100;
    int steps = 50;
    NoiseModel noise = NoiseModel::UniformBox;
    std::uint64_t seed = 0;
    std::size_t condition_samples = 1000;
    bool check_conditions = true;
};

struct ShadowingTable {
    std::vector<ShadowingRow> rows;
    ConditionReport conditions;
    /// Largest d on the grid with 100% success for each epsilon: an empirical
    /// stand-in for the existential d(epsilon). Absent when none succeeded.
    std::map<double, double> empirical_d;

    /// epsilon,d,trials,successes,escaped,success_rate,max_deviation,mean_iterations
    std::string to_csv() const;
};

/// Runs find_shadow_point over the (epsilon, d) grid. Trial t starts at a
/// point whose exact orbit stays in the region's neighborhood and reuses the
/// same unit noise draws for every d, so rows differ only through the noise
/// amplitude.
ShadowingTable shadowing_experiment(const MapSystem& sys, const LyapunovPair& pair, const RegionSpec& region,
                                    const ShadowingExperimentConfig& config);

}  // namespace nonhyp
