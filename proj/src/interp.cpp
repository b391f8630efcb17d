#include "nonhyp/interp.hpp"

#include <algorithm>
#include <cmath>

#include "nonhyp/error.hpp"

namespace nonhyp {

namespace {
// Three-point endpoint slope, limited so the end interval stays monotone.
double end_slope(double h0, double h1, double del0, double del1) {
    double d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if (d * del0 <= 0.0) return 0.0;
    if (del0 * del1 <= 0.0 && std::abs(d) > 3.0 * std::abs(del0)) return 3.0 * del0;
    return d;
}
}  // namespace

Pchip::Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw PreconditionError("pchip needs at least two matching samples");
    for (std::size_t i = 0; i + 1 < n; ++i)
        if (!(x_[i] < x_[i + 1])) throw PreconditionError("pchip nodes must be strictly increasing");

    std::vector<double> h(n - 1), del(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = x_[i + 1] - x_[i];
        del[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    d_.assign(n, 0.0);
    if (n == 2) {
        d_[0] = d_[1] = del[0];
        return;
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (del[i - 1] * del[i] > 0.0) {
            const double w1 = 2.0 * h[i] + h[i - 1];
            const double w2 = h[i] + 2.0 * h[i - 1];
            d_[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
        }
    }
    d_[0] = end_slope(h[0], h[1], del[0], del[1]);
    d_[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
}

void Pchip::evaluate(double t, double& value, double& slope) const {
    if (t <= x_.front()) {
        value = y_.front();
        slope = 0.0;
        return;
    }
    if (t >= x_.back()) {
        value = y_.back();
        slope = 0.0;
        return;
    }
    const std::size_t i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), t) - x_.begin()) - 1;
    const double h = x_[i + 1] - x_[i];
    const double s = (t - x_[i]) / h;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    value = h00 * y_[i] + h10 * h * d_[i] + h01 * y_[i + 1] + h11 * h * d_[i + 1];
    const double g00 = 6 * s2 - 6 * s, g10 = 3 * s2 - 4 * s + 1, g01 = -6 * s2 + 6 * s, g11 = 3 * s2 - 2 * s;
    slope = (g00 * y_[i] + g01 * y_[i + 1]) / h + g10 * d_[i] + g11 * d_[i + 1];
}

double Pchip::operator()(double t) const {
    double v, s;
    evaluate(t, v, s);
    return v;
}

double Pchip::derivative(double t) const {
    double v, s;
    evaluate(t, v, s);
    return s;
}

double Pchip::difference(double a, double b, double b_minus_a) const {
    const double lo = std::min(a, b);
    if (lo <= x_.front() || std::max(a, b) >= x_.back()) return (*this)(b) - (*this)(a);
    const auto cell = [&](double t) {
        return static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), t) - x_.begin()) - 1;
    };
    const std::size_t i = cell(a);
    if (cell(b) != i) return (*this)(b) - (*this)(a);
    // p(s) = y_i + c1 s + c2 s^2 + c3 s^3 on the cell, differenced symbolically.
    const double h = x_[i + 1] - x_[i];
    const double dy = y_[i + 1] - y_[i];
    const double c1 = h * d_[i];
    const double c2 = 3.0 * dy - 2.0 * h * d_[i] - h * d_[i + 1];
    const double c3 = -2.0 * dy + h * d_[i] + h * d_[i + 1];
    const double s1 = (a - x_[i]) / h, s2 = (b - x_[i]) / h;
    return (b_minus_a / h) * (c1 + c2 * (s1 + s2) + c3 * (s1 * s1 + s1 * s2 + s2 * s2));
}

std::vector<double> grid_slopes(const std::vector<double>& values, double spacing) {
    const std::size_t n = values.size();
    std::vector<double> out(n, 0.0);
    if (n < 2) return out;
    out[0] = (values[1] - values[0]) / spacing;
    out[n - 1] = (values[n - 1] - values[n - 2]) / spacing;
    for (std::size_t i = 1; i + 1 < n; ++i) out[i] = (values[i + 1] - values[i - 1]) / (2.0 * spacing);
    return out;
}

}  // namespace nonhyp
