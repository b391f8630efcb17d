#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "nonhyp/error.hpp"

namespace nonhyp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Point = Vector;

/// Axis-aligned closed box, one interval per coordinate.
struct Box {
    Vector lower;
    Vector upper;

    Box() = default;
    Box(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) {
        if (lower.size() != upper.size()) throw PreconditionError("box bounds differ in dimension");
        for (Eigen::Index i = 0; i < lower.size(); ++i)
            if (!(lower[i] <= upper[i])) throw PreconditionError("box lower bound exceeds upper bound");
    }

    static Box symmetric(int dim, double half_width) {
        return Box(Vector::Constant(dim, -half_width), Vector::Constant(dim, half_width));
    }

    int dim() const { return static_cast<int>(lower.size()); }

    bool contains(const Point& p, double slack = 0.0) const {
        for (Eigen::Index i = 0; i < lower.size(); ++i)
            if (p[i] < lower[i] - slack || p[i] > upper[i] + slack) return false;
        return true;
    }

    Box inflated(double margin) const {
        return Box(lower.array() - margin, upper.array() + margin);
    }

    double diameter() const { return (upper - lower).norm(); }
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Largest singular value by power iteration on A^T A (tolerance 1e-12 on the
/// Rayleigh quotient). Falls back to the Jacobi SVD when the iteration stalls.
inline double operator_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    const Matrix ata = a.transpose() * a;
    // Irrational-ratio start vector; avoids starting orthogonal to the top
    // singular vector for the structured matrices seen in practice.
    Vector v(ata.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = std::pow(0.7548776662466927, static_cast<double>(i));
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < 500; ++it) {
        Vector w = ata * v;
        const double nw = w.norm();
        if (nw == 0.0) break;
        w /= nw;
        const double next = w.dot(ata * w);
        if (std::abs(next - lambda) <= 1e-12 * std::max(1.0, std::abs(next))) {
            return std::sqrt(std::max(next, 0.0));
        }
        lambda = next;
        v = w;
    }
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0);
}

}  // namespace nonhyp
