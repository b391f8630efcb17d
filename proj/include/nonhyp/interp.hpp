#pragma once

#include <vector>

namespace nonhyp {

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
/// Between monotone data it stays monotone and never overshoots the samples.
class Pchip {
public:
    Pchip() = default;
    /// x strictly increasing, same length as y, at least 2 points.
    Pchip(std::vector<double> x, std::vector<double> y);

    /// Evaluation clamps to the end values outside [x_front, x_back].
    double operator()(double t) const;
    double derivative(double t) const;
    /// Value and derivative in one lookup.
    void evaluate(double t, double& value, double& slope) const;
    /// p(b) - p(a) given b - a; exact up to rounding when a and b share a cell,
    /// so it stays accurate for b - a far below the spacing of representable t.
    double difference(double a, double b, double b_minus_a) const;

    const std::vector<double>& nodes() const { return x_; }
    const std::vector<double>& values() const { return y_; }

private:
    std::vector<double> x_, y_, d_;
};

/// Slopes by centered differences on a uniform grid, one-sided at the ends.
std::vector<double> grid_slopes(const std::vector<double>& values, double spacing);

}  // namespace nonhyp
