#include "nonhyp/tangency.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include <unsupported/Eigen/MatrixFunctions>

#include "nonhyp/expr.hpp"
#include "nonhyp/parallel.hpp"

namespace nonhyp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLogMax = std::log(DBL_MAX);
const double kLogMin = std::log(DBL_MIN);
}  // namespace

// ---------------------------------------------------------------- ScaledVector

ScaledVector ScaledVector::from(const Vector& v) {
    ScaledVector out;
    const double n = v.norm();
    if (!std::isfinite(n)) throw DomainError("non-finite vector");
    if (n == 0.0) {
        out.direction = Vector::Zero(v.size());
        return out;
    }
    out.log_scale = std::log(n);
    out.direction = v / n;
    return out;
}

Vector ScaledVector::value(bool* underflow) const {
    if (is_zero()) return Vector::Zero(direction.size());
    if (log_scale > kLogMax) throw DomainError("scaled vector overflows");
    const double s = std::exp(log_scale);
    if (underflow && s < DBL_MIN) *underflow = true;
    return s * direction;
}

// ---------------------------------------------------------- FlatteningFunction

FlatteningFunction::FlatteningFunction(std::function<double(double)> delta, double rho, int levels)
    : delta_(std::move(delta)), rho_(rho) {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw PreconditionError("flattening radius must be positive and finite");
    if (levels < 2) throw PreconditionError("flattening needs at least two levels");
    // Node xi_j = rho 2^-j carries delta(xi_{j+1}), the value at the far end
    // of its lower cell, so the interpolant stays below delta on every cell.
    std::vector<double> x(static_cast<std::size_t>(levels) + 1), y(x.size());
    double prev = kInf;
    for (int j = 0; j <= levels; ++j) {
        const double xi = std::ldexp(rho, -j);
        const double d = delta_(std::ldexp(rho, -(j + 1)));
        if (!(d > 0.0) || !std::isfinite(d))
            throw PreconditionError("tangency modulus must be positive and finite on (0, rho)");
        if (d > prev) throw PreconditionError("tangency modulus must be nondecreasing");
        prev = d;
        x[static_cast<std::size_t>(levels - j)] = xi;
        y[static_cast<std::size_t>(levels - j)] = d;
    }
    smallest_node_ = x.front();
    envelope_ = Pchip(std::move(x), std::move(y));
}

double FlatteningFunction::envelope(double xi) const {
    // Linear continuation to 0 below the last node keeps M positive and increasing.
    if (xi < smallest_node_) return envelope_.values().front() * xi / smallest_node_;
    return envelope_(xi);
}

double FlatteningFunction::envelope_slope(double xi) const {
    if (xi < smallest_node_) return envelope_.values().front() / smallest_node_;
    return envelope_.derivative(xi);
}

double FlatteningFunction::envelope_difference(double a, double b, double b_minus_a) const {
    const double front = envelope_.values().front();
    if (a < smallest_node_ && b < smallest_node_) return front * b_minus_a / smallest_node_;
    if (a < smallest_node_ || b < smallest_node_) return envelope(b) - envelope(a);
    return envelope_.difference(a, b, b_minus_a);
}

double FlatteningFunction::log_value(double xi) const {
    if (xi == 0.0) return -kInf;
    if (!(xi > 0.0) || xi > rho_) throw DomainError("flattening function evaluated outside [0, rho]");
    return std::log(envelope(xi)) - 1.0 / xi;
}

double FlatteningFunction::value(double xi) const { return std::exp(log_value(xi)); }

FlatteningFunction build_delta0(std::function<double(double)> delta, double rho) {
    return FlatteningFunction(std::move(delta), rho);
}

FlatteningFunction build_delta0(const std::vector<std::pair<double, double>>& samples, double rho) {
    if (samples.size() < 2) throw PreconditionError("tangency modulus needs at least two samples");
    for (std::size_t i = 0; i + 1 < samples.size(); ++i)
        if (!(samples[i].first < samples[i + 1].first)) throw PreconditionError("modulus samples must increase in xi");
    if (!(samples.front().first > 0.0)) throw PreconditionError("modulus samples must start above 0");
    auto data = std::make_shared<std::vector<std::pair<double, double>>>(samples);
    // Below the first sample the modulus is scaled down linearly; above the last it is held.
    auto fn = [data](double xi) {
        const auto& s = *data;
        if (xi <= s.front().first) return s.front().second * xi / s.front().first;
        if (xi >= s.back().first) return s.back().second;
        const auto it = std::upper_bound(s.begin(), s.end(), xi,
                                         [](double v, const std::pair<double, double>& p) { return v < p.first; });
        const auto& hi = *it;
        const auto& lo = *(it - 1);
        const double w = (xi - lo.first) / (hi.first - lo.first);
        return lo.second + w * (hi.second - lo.second);
    };
    return FlatteningFunction(fn, rho);
}

FlatteningCheck verify_flattening(const FlatteningFunction& f, std::size_t points) {
    FlatteningCheck out;
    out.points = points;
    const double rho = f.rho();
    const double lo = std::log(std::ldexp(rho, -60));
    const double hi = std::log(rho * (1.0 - 1e-12));
    double prev = -kInf;
    for (std::size_t i = 0; i < points; ++i) {
        const double w = points == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(points - 1);
        const double xi = std::exp(lo + w * (hi - lo));
        const double l0 = f.log_value(xi);
        if (!(l0 > -kInf) || !std::isfinite(l0)) out.positive = false;
        if (!(l0 > prev)) out.monotone = false;
        prev = l0;
        const double gap = l0 - std::log(f.delta(xi));
        out.worst_minorant_log_gap = i == 0 ? gap : std::max(out.worst_minorant_log_gap, gap);
        if (gap > 1e-12) out.minorant = false;
    }
    // delta0 / xi^k must keep falling along xi = rho 10^-m.
    for (int k = 1; k <= 6 && out.flat; ++k) {
        double last = kInf;
        for (int m = 1; m <= 12; ++m) {
            const double xi = rho * std::pow(10.0, -m);
            const double v = f.log_value(xi) - k * std::log(xi);
            if (!(v < last)) out.flat = false;
            last = v;
        }
        if (!(last < -1e3)) out.flat = false;
    }
    if (rho > 1e-2) {
        const auto scaled = [&](double xi) { return f.log_value(xi) - 6.0 * std::log(xi); };
        out.flatness_drop_6 = (scaled(1e-2) - scaled(1e-3)) / std::log(10.0);
    }
    return out;
}

// ---------------------------------------------------------------- TimeReparam

TimeReparam::TimeReparam(FlatteningFunction f) : f_(std::move(f)) {
    // log t is decreasing; locate where it crosses log(DBL_MAX).
    double lo = std::ldexp(f_.rho(), -60), hi = f_.rho() * (1.0 - 1e-15);
    if (log_t(hi) > kLogMax) throw DomainError("time reparametrization overflows on the whole domain");
    for (int it = 0; it < 200 && hi - lo > 1e-17 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (log_t(mid) > kLogMax ? lo : hi) = mid;
    }
    xi_min_ = hi;
}

double TimeReparam::log_t(double xi) const {
    if (!(xi > 0.0) || !(xi < f_.rho())) throw DomainError("time reparametrization needs 0 < xi < rho");
    return 1.0 / xi + std::log1p(1.0 / f_.envelope(xi));
}

double TimeReparam::t(double xi) const {
    const double l = log_t(xi);
    if (l > kLogMax) throw DomainError("time reparametrization overflows below xi_min");
    return std::exp(l);
}

double TimeReparam::log_neg_derivative(double xi) const {
    if (!(xi > 0.0) || !(xi < f_.rho())) throw DomainError("time reparametrization needs 0 < xi < rho");
    const double m = f_.envelope(xi);
    const double dm = f_.envelope_slope(xi);
    return 1.0 / xi + std::log((1.0 + 1.0 / m) / (xi * xi) + dm / (m * m));
}

double TimeReparam::derivative(double xi) const {
    const double l = log_neg_derivative(xi);
    if (l > kLogMax) throw DomainError("time derivative overflows");
    return -std::exp(l);
}

double TimeReparam::log_ratio(double a, double b, double b_minus_a) const {
    const double ma = f_.envelope(a), mb = f_.envelope(b);
    const double dm = f_.envelope_difference(a, b, b_minus_a);
    return -b_minus_a / (a * b) + std::log1p(-dm / (mb * (ma + 1.0)));
}

TimeReparam build_time_reparam(const FlatteningFunction& f) { return TimeReparam(f); }

// ------------------------------------------------------------ CenterGenerator

namespace {

using Complex = std::complex<double>;

// exp(w) - 1 without cancellation for small |w|.
Complex expm1c(Complex w) {
    const double a = w.real(), b = w.imag();
    const double sh = std::sin(0.5 * b);
    return {std::expm1(a) * std::cos(b) - 2.0 * sh * sh, std::exp(a) * std::sin(b)};
}

Matrix real_part_checked(const Eigen::MatrixXcd& m, const char* what) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if (m.imag().cwiseAbs().maxCoeff() > 1e-9 * scale) throw PreconditionError(std::string(what) + " is not real");
    return m.real();
}

bool has_negative_real_eigenvalue(const Eigen::VectorXcd& ev) {
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev[i].real() < 0.0 && std::abs(ev[i].imag()) <= 1e-12 * std::abs(ev[i])) return true;
    return false;
}

}  // namespace

CenterGenerator real_matrix_log(const Matrix& C) {
    if (C.rows() != C.cols() || C.rows() < 1 || C.rows() > kMaxDimension)
        throw PreconditionError("center block must be square of size 1..4");
    if (!C.allFinite()) throw DomainError("center block has non-finite entries");

    CenterGenerator gen;
    gen.C = C;
    Matrix W = C;
    Eigen::EigenSolver<Matrix> es(W);
    if (es.info() != Eigen::Success) throw ConvergenceError("eigen decomposition of the center block failed");
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        if (!(std::abs(es.eigenvalues()[i]) > 1.0))
            throw DomainError("center block must have its spectrum outside the closed unit disk");
    // A real logarithm needs every negative real eigenvalue paired; squaring removes them.
    while (has_negative_real_eigenvalue(es.eigenvalues())) {
        if (gen.power >= 8) throw PreconditionError("could not clear negative real eigenvalues by squaring");
        W = W * W;
        gen.power *= 2;
        es.compute(W);
    }

    const Eigen::MatrixXcd V = es.eigenvectors();
    const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(V);
    const auto& sv = svd.singularValues();
    if (!(sv(sv.size() - 1) > 0.0) || sv(0) / sv(sv.size() - 1) > 1e8)
        throw PreconditionError("center block is not diagonalizable to working accuracy");
    gen.eigenvectors = V;
    gen.inverse_eigenvectors = V.inverse();
    gen.eigenvalues = es.eigenvalues().unaryExpr([](Complex z) { return std::log(z); });

    const Eigen::MatrixXcd logm = V * gen.eigenvalues.asDiagonal() * gen.inverse_eigenvectors;
    gen.P = real_part_checked(logm, "matrix logarithm");
    gen.C_power = gen.P.exp();
    gen.exp_check = (gen.C_power - W).norm() / W.norm();
    if (gen.exp_check > 1e-10) throw ConvergenceError("matrix logarithm fails exp(P) = C^power to 1e-10");

    const Matrix sym = 0.5 * (gen.P + gen.P.transpose());
    gen.transversality = Eigen::SelfAdjointEigenSolver<Matrix>(sym).eigenvalues().minCoeff();
    if (!(gen.transversality > 0.0))
        throw PreconditionError("the flow of log C is not transverse to the unit sphere");

    double min_re = kInf;
    for (Eigen::Index i = 0; i < gen.eigenvalues.size(); ++i) min_re = std::min(min_re, gen.eigenvalues[i].real());
    gen.chi = 0.9 * min_re;
    gen.K = 1.0;
    for (int i = 0; i <= 500; ++i) {
        const double s = 0.1 * i;
        const Eigen::VectorXcd e = (-s * gen.eigenvalues).array().exp();
        const Matrix m = real_part_checked(V * e.asDiagonal() * gen.inverse_eigenvectors, "exp(-sP)");
        gen.K = std::max(gen.K, operator_norm(m) * std::exp(gen.chi * s));
    }
    return gen;
}

ScaledVector CenterGenerator::exp_action(double s, const ScaledVector& z) const {
    if (z.is_zero()) return z;
    const Eigen::VectorXcd c = inverse_eigenvectors * z.direction.cast<Complex>();
    double shift = -kInf;
    for (Eigen::Index i = 0; i < c.size(); ++i)
        if (c[i] != Complex(0.0)) shift = std::max(shift, s * eigenvalues[i].real());
    Eigen::VectorXcd scaled(c.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) scaled[i] = std::exp(s * eigenvalues[i] - shift) * c[i];
    const Vector w = (eigenvectors * scaled).real();
    const double n = w.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("exp(sP) z lost all significance");
    ScaledVector out;
    out.log_scale = z.log_scale + shift + std::log(n);
    out.direction = w / n;
    return out;
}

Vector CenterGenerator::expm1_action(double s, const Vector& z) const {
    const Eigen::VectorXcd c = inverse_eigenvectors * z.cast<Complex>();
    Eigen::VectorXcd scaled(c.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) scaled[i] = expm1c(s * eigenvalues[i]) * c[i];
    return (eigenvectors * scaled).real();
}

// -------------------------------------------------------------------------- h

ScaledVector apply_h(const CenterGenerator& gen, const TimeReparam& t, const Vector& zhat, double working_radius) {
    if (zhat.size() != gen.dim()) throw PreconditionError("h applied to a vector of the wrong dimension");
    const double r = zhat.norm();
    if (!(r <= working_radius)) throw DomainError("h evaluated outside the working radius");
    const ScaledVector z = ScaledVector::from(zhat);
    if (z.is_zero()) return z;
    const double lt = t.log_t(r * r);
    if (lt > kLogMax) {
        // exp(-t P) z is below exp(-DBL_MAX); keep the direction with the most negative finite scale.
        ScaledVector out = z;
        out.log_scale = -DBL_MAX;
        return out;
    }
    return gen.exp_action(-std::exp(lt), z);
}

HInverse invert_h(const CenterGenerator& gen, const TimeReparam& t, const ScaledVector& z) {
    if (z.direction.size() != gen.dim()) throw PreconditionError("h inverted on a vector of the wrong dimension");
    HInverse out;
    if (z.is_zero()) {
        out.zhat = Vector::Zero(gen.dim());
        return out;
    }
    const ScaledVector unit{0.0, z.direction};
    // phi(r) = log r - log|exp(t(r^2) P) z| is increasing in r; its root is |zhat|.
    const auto phi = [&](double r) {
        const double lt = t.log_t(r * r);
        // Near the overflow radius s * spec P itself overflows; such r lie below any representable preimage.
        if (lt > kLogMax - 8.0) return -kInf;
        return std::log(r) - (z.log_scale + gen.exp_action(std::exp(lt), unit).log_scale);
    };
    double hi = std::sqrt(t.flattening().rho()) * (1.0 - 1e-15);
    double lo = std::sqrt(t.xi_min()) * (1.0 + 1e-15);
    if (!(phi(hi) > 0.0)) throw DomainError("h preimage lies outside the domain of the time reparametrization");
    if (!(phi(lo) < 0.0)) throw DomainError("h preimage lies below the radius where t overflows");
    while (out.iterations < 200 && hi - lo > 2.0 * DBL_EPSILON * hi) {
        const double mid = 0.5 * (lo + hi);
        (phi(mid) < 0.0 ? lo : hi) = mid;
        ++out.iterations;
    }
    const double r = 0.5 * (lo + hi);
    out.residual = (hi - lo) / r;
    out.s = t.t(r * r);
    out.zhat = r * gen.exp_action(out.s, unit).direction;
    return out;
}

// ------------------------------------------------------------ conjugated map

TauValue tau(const CenterGenerator& gen, const TimeReparam& t, const Vector& zhat) {
    if (zhat.size() != gen.dim()) throw PreconditionError("tau evaluated on a vector of the wrong dimension");
    const double xi1 = zhat.squaredNorm();
    if (xi1 == 0.0) return {0.0, true};
    const double rho = t.flattening().rho();
    if (!(xi1 < rho)) throw DomainError("tau evaluated outside the domain of the time reparametrization");
    const double lt1 = t.log_t(xi1);
    // g(tau) = (1 - tau) - (t(xi1) - t(xi2)), decreasing; the difference of
    // times is t(xi1) (1 - t(xi2)/t(xi1)) with the ratio taken from its log.
    const auto g = [&](double tau_v) {
        const Vector d = gen.expm1_action(tau_v, zhat);
        const double dxi = d.dot(2.0 * zhat + d);
        const double xi2 = xi1 + dxi;
        if (!(xi2 < rho)) return -kInf;
        if (!(dxi > 0.0)) return 1.0 - tau_v;
        const double l = t.log_ratio(xi1, xi2, dxi);
        return (1.0 - tau_v) - std::exp(lt1 + std::log(-std::expm1(l)));
    };
    if (!(g(DBL_MIN) > 0.0)) return {0.0, true};
    double ulo = kLogMin, uhi = 0.0;
    while (uhi - ulo > 1e-6) {
        const double mid = 0.5 * (ulo + uhi);
        (g(std::exp(mid)) > 0.0 ? ulo : uhi) = mid;
    }
    double lo = std::exp(ulo), hi = std::min(1.0, std::exp(uhi));
    if (!(g(lo) > 0.0)) lo = DBL_MIN;
    if (g(hi) > 0.0) hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 2.0 * DBL_EPSILON * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) > 0.0 ? lo : hi) = mid;
    }
    return {0.5 * (lo + hi), false};
}

CenterMapValue conjugated_center_map(const CenterGenerator& gen, const TimeReparam& t, const Vector& zhat) {
    CenterMapValue out;
    out.tau = tau(gen, t, zhat);
    out.displacement = gen.expm1_action(out.tau.tau, zhat);
    out.value = zhat + out.displacement;
    return out;
}

Vector conjugated_center_map_direct(const CenterGenerator& gen, const TimeReparam& t, const Vector& zhat) {
    const ScaledVector h = apply_h(gen, t, zhat, kInf);
    if (h.is_zero()) return h.direction;
    const Vector w = gen.C_power * h.direction;
    const double n = w.norm();
    return invert_h(gen, t, ScaledVector{h.log_scale + std::log(n), w / n}).zhat;
}

// ------------------------------------------------------------ tangency data

TangencyData parse_tangency(const std::string& source, int dim) {
    if (dim < 1 || dim > kMaxDimension - 1) throw ConfigError("tangency dimension must be 1..3");
    expr::Symbols symbols;
    if (dim == 1) {
        symbols.variables = {"zeta"};
    } else {
        for (int i = 1; i <= dim; ++i) symbols.variables.push_back("zeta" + std::to_string(i));
    }
    auto e = std::make_shared<const expr::Expr>(expr::parse(source, symbols));
    TangencyData out;
    out.dim = dim;
    out.source = source;
    out.g = [e](const Vector& z) { return e->eval(std::span<const double>(z.data(), static_cast<std::size_t>(z.size()))); };
    return out;
}

std::function<double(double)> tangency_modulus(const TangencyData& data, double max_radius) {
    if (data.dim != 1) throw PreconditionError("a derived tangency modulus needs a one-dimensional unstable curve");
    if (!(max_radius > 0.0)) throw PreconditionError("modulus radius must be positive");
    constexpr int kSamples = 6000;
    const double llo = std::log(1e-300), lhi = std::log(max_radius);
    auto radii = std::make_shared<std::vector<double>>(kSamples);
    auto peaks = std::make_shared<std::vector<double>>(kSamples);
    double peak = 0.0;
    Vector z(1);
    for (int i = 0; i < kSamples; ++i) {
        const double r = std::exp(llo + (lhi - llo) * i / (kSamples - 1));
        z[0] = r;
        const double a = std::abs(data.g(z));
        z[0] = -r;
        const double b = std::abs(data.g(z));
        if (!std::isfinite(a) || !std::isfinite(b)) throw DomainError("unstable curve is not finite near the tangency");
        peak = std::max({peak, a, b});
        (*radii)[static_cast<std::size_t>(i)] = r;
        (*peaks)[static_cast<std::size_t>(i)] = peak;
    }
    return [radii, peaks](double eps) {
        const auto& m = *peaks;
        const auto it = std::upper_bound(m.begin(), m.end(), eps);
        if (it == m.begin()) {
            const double r = m.front() > 0.0 ? radii->front() * std::min(1.0, eps / m.front()) : radii->front();
            return std::max(r, std::numeric_limits<double>::denorm_min());
        }
        return (*radii)[static_cast<std::size_t>(it - m.begin() - 1)];
    };
}

// ---------------------------------------------------------------- flatness

namespace {

std::vector<Vector> sphere_directions(int dim, int count) {
    std::vector<Vector> out;
    if (dim == 1) {
        out.push_back(Vector::Constant(1, 1.0));
        out.push_back(Vector::Constant(1, -1.0));
        return out;
    }
    for (int k = 0; k < count; ++k) {
        Vector e(dim);
        if (dim == 2) {
            const double a = 2.0 * std::numbers::pi * k / count;
            e << std::cos(a), std::sin(a);
        } else {
            Rng rng = make_stream(0, "sphere-directions", static_cast<std::uint64_t>(k));
            for (int i = 0; i < dim; ++i) e[i] = standard_normal(rng);
            e.normalize();
        }
        out.push_back(e);
    }
    return out;
}

}  // namespace

FlatnessReport flatness_report(const CenterGenerator& gen, const TimeReparam& t, const std::optional<TangencyData>& g,
                               const std::vector<double>& radii, int directions) {
    if (radii.empty()) throw PreconditionError("flatness report needs at least one radius");
    if (g && g->dim != gen.dim()) throw PreconditionError("unstable curve and center block differ in dimension");
    const int u = gen.dim();
    const auto dirs = sphere_directions(u, std::max(directions, 1));
    FlatnessReport rep;
    for (double r : radii) {
        if (!(r > 0.0)) throw PreconditionError("flatness radii must be positive");
        RadiusFlatness rf;
        rf.radius = r;
        rf.tau_min = kInf;
        rf.tau_max = -kInf;
        rf.h_log_norm = -kInf;
        const double step = 1e-6 * r;
        for (const Vector& e : dirs) {
            const Vector z = r * e;
            const TauValue tv = tau(gen, t, z);
            rf.tau_min = std::min(rf.tau_min, tv.tau);
            rf.tau_max = std::max(rf.tau_max, tv.tau);
            if (!((tv.underflow || tv.tau > 0.0) && tv.tau < 1.0)) rep.tau_in_unit_interval = false;

            Matrix d(u, u);
            for (int j = 0; j < u; ++j) {
                Vector zp = z, zm = z;
                zp[j] += step;
                zm[j] -= step;
                d.col(j) = (conjugated_center_map(gen, t, zp).displacement -
                            conjugated_center_map(gen, t, zm).displacement) / (2.0 * step);
            }
            rf.identity_distance = std::max(rf.identity_distance, operator_norm(d));

            const ScaledVector h = apply_h(gen, t, z, kInf);
            rf.h_log_norm = std::max(rf.h_log_norm, h.log_scale);
            if (g) {
                bool underflow = false;
                const auto ghat = [&](const Vector& p) { return g->g(apply_h(gen, t, p, kInf).value(&underflow)); };
                const double value = ghat(z);
                Vector grad(u);
                for (int j = 0; j < u; ++j) {
                    Vector zp = z, zm = z;
                    zp[j] += step;
                    zm[j] -= step;
                    grad[j] = (ghat(zp) - ghat(zm)) / (2.0 * step);
                }
                if (!std::isfinite(value) || !grad.allFinite()) throw DomainError("flattened curve is not finite");
                rf.h_underflow = rf.h_underflow || underflow;
                const double ratio = std::abs(value) / (r * r);
                const double angle = std::atan2(1.0, grad.norm());
                rf.g_ratio = rf.g_ratio ? std::max(*rf.g_ratio, ratio) : ratio;
                rf.angle = rf.angle ? std::min(*rf.angle, angle) : angle;
            } else {
                bool underflow = false;
                (void)h.value(&underflow);
                rf.h_underflow = rf.h_underflow || underflow;
            }
        }
        rep.radii.push_back(rf);
    }

    std::vector<const RadiusFlatness*> order;
    for (const auto& rf : rep.radii) order.push_back(&rf);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->radius < b->radius; });
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        if (!(order[i]->identity_distance < order[i + 1]->identity_distance)) rep.identity_decreasing = false;
        if (!(order[i]->h_log_norm < order[i + 1]->h_log_norm)) rep.h_norm_monotone = false;
    }
    if (g) {
        for (const auto* rf : order) {
            if (!(*rf->g_ratio <= 1.0)) break;
            rep.r0 = rf->radius;
        }
    }
    return rep;
}

// ---------------------------------------------------------------- pipeline

namespace {

template <class F>
auto run_stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(name, e.what());
    }
}

}  // namespace

PipelineResult quasitransverse_pipeline(const MapSystem& sys, const TangencyData& tangency,
                                        const PipelineOptions& options) {
    PipelineResult res;
    const int n = sys.dimension, s = sys.stable_split, u = n - s;

    run_stage("block-form", [&] {
        if (s < 1 || u < 1) throw PreconditionError("system needs nonempty stable and center-unstable blocks");
        if (tangency.dim != u) throw PreconditionError("unstable curve dimension differs from the center block");
        if (!tangency.g) throw PreconditionError("unstable curve is missing");
        const Matrix J = eval_jacobian(sys, Vector::Zero(n));
        const double scale = std::max(1.0, J.cwiseAbs().maxCoeff());
        if (J.topRightCorner(s, u).cwiseAbs().maxCoeff() > 1e-12 * scale ||
            J.bottomLeftCorner(u, s).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw PreconditionError("system is not block diagonal at 0");
        for (int i = 0; i < n; ++i) {
            for (double sign : {-1.0, 1.0}) {
                Vector p = Vector::Zero(n);
                p[i] = 0.05 * sign;
                if ((eval_forward(sys, p) - J * p).norm() > 1e-9)
                    throw PreconditionError("system is not linear near 0");
            }
        }
        res.B = J.topLeftCorner(s, s);
        res.C = J.bottomRightCorner(u, u);
        if (!(operator_norm(res.B) < 1.0)) throw PreconditionError("stable block must be a contraction");
        Eigen::FullPivLU<Matrix> lu(res.C);
        if (!lu.isInvertible() || !(operator_norm(lu.inverse()) < 1.0))
            throw PreconditionError("center block must be expanding");
        return 0;
    });

    res.generator = run_stage("matrix-log", [&] { return real_matrix_log(res.C); });

    run_stage("flattening", [&] {
        if (!(options.working_radius > 0.0)) throw ConfigError("working radius must be positive");
        const double reach = operator_norm(res.generator.C_power) * options.working_radius;
        res.rho = std::max(1.0, reach * reach) * 1.01;
        auto delta = options.delta ? options.delta : tangency_modulus(tangency);
        FlatteningFunction f = build_delta0(delta, res.rho);
        res.flattening = verify_flattening(f);
        if (!res.flattening.pass()) throw DomainError("flattening function fails its invariants");
        res.time.emplace(std::move(f));
        return 0;
    });

    res.flatness = run_stage("flatness", [&] {
        for (double r : options.radii)
            if (!(r > 0.0 && r <= options.working_radius))
                throw ConfigError("flatness radii must lie in (0, working radius]");
        return flatness_report(res.generator, *res.time, tangency, options.radii);
    });

    run_stage("disk", [&] {
        constexpr int kIntervals = 256;
        const double spacing = 2.0 * options.disk_half / kIntervals;
        for (int axis = 0; axis < u; ++axis) {
            std::vector<double> values(kIntervals + 1);
            for (int i = 0; i <= kIntervals; ++i) {
                Vector z = Vector::Zero(u);
                z[axis] = -options.disk_half + spacing * i;
                values[static_cast<std::size_t>(i)] = tangency.g(apply_h(res.generator, *res.time, z, options.working_radius).value());
            }
            for (double v : values) res.disk_max_height = std::max(res.disk_max_height, std::abs(v));
            for (double d : grid_slopes(values, spacing)) res.disk_max_slope = std::max(res.disk_max_slope, std::abs(d));
        }
        res.disk_admissible = res.disk_max_height <= options.disk_eps_y && res.disk_max_slope <= 1.0;
        double angle = kInf, smallest = kInf;
        for (const auto& rf : res.flatness.radii) {
            if (!res.flatness.r0 || rf.radius <= *res.flatness.r0) angle = std::min(angle, *rf.angle);
            if (rf.radius < smallest) {
                smallest = rf.radius;
                res.ghat_slope_small = 1.0 / std::tan(*rf.angle);
            }
        }
        res.angle = angle;
        return 0;
    });

    auto gen = std::make_shared<const CenterGenerator>(res.generator);
    auto time = std::make_shared<const TimeReparam>(*res.time);
    const Matrix B = res.B;
    NativeMap native;
    native.forward = [gen, time, B, s, u](const Vector& x) {
        Vector out(x.size());
        out.head(s) = B * x.head(s);
        const Vector z = x.tail(u);
        out.tail(u) = z.squaredNorm() == 0.0 ? z : conjugated_center_map(*gen, *time, z).value;
        return out;
    };
    res.transformed = from_native(n, s, std::move(native), "flattened");
    return res;
}

}  // namespace nonhyp
