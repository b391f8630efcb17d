#pragma once

// Flattening a quasitransverse homoclinic intersection.
//
// A homeomorphism h(z) = exp(-t(|z|^2) P) z of the center-unstable
// coordinates, with C = exp(P) and t(xi) = 1/delta0(xi) + exp(1/xi), conjugates
// z -> C z to a map that is C^1-close to the identity near 0 and squeezes the
// unstable curve eta = g(zeta) into a flat graph g(h(z)).
//
// t grows like exp(1/xi), so h(z) leaves the double range already at
// moderate |z|. Values of h are therefore carried as ScaledVector
// (log-magnitude and unit direction), and differences of t are formed from
// log-ratios rather than by subtracting huge numbers.

#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nonhyp/interp.hpp"
#include "nonhyp/linalg.hpp"
#include "nonhyp/map_system.hpp"

namespace nonhyp {

/// Error raised by quasitransverse_pipeline; names the failing stage.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("stage " + stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// exp(log_scale) * direction with |direction| = 1; log_scale = -inf encodes 0.
struct ScaledVector {
    double log_scale = -std::numeric_limits<double>::infinity();
    Vector direction;

    static ScaledVector from(const Vector& v);
    bool is_zero() const { return log_scale == -std::numeric_limits<double>::infinity(); }
    /// Plain vector; sets *underflow when a nonzero value rounds to zero or subnormal.
    Vector value(bool* underflow = nullptr) const;
};

class FlatteningFunction {
public:
    /// delta0(xi) = M(xi) exp(-1/xi) where M is a monotone cubic through
    /// delta(xi_{j+1}) at xi_j = rho 2^-j, j = 0..levels. On [xi_{j+1}, xi_j]
    /// M never exceeds delta(xi_{j+1}) <= delta(xi), so delta0 <= delta.
    FlatteningFunction(std::function<double(double)> delta, double rho, int levels = 60);

    double rho() const { return rho_; }
    /// log delta0(xi); -inf at xi = 0. Throws DomainError outside [0, rho].
    double log_value(double xi) const;
    /// delta0(xi); underflows to 0 below about xi = 1/745.
    double value(double xi) const;
    double envelope(double xi) const;
    double envelope_slope(double xi) const;
    /// M(b) - M(a) given b - a, without cancellation when a and b share a cubic piece.
    double envelope_difference(double a, double b, double b_minus_a) const;
    double delta(double xi) const { return delta_(xi); }

    const std::vector<double>& nodes() const { return envelope_.nodes(); }

private:
    std::function<double(double)> delta_;
    double rho_;
    Pchip envelope_;
    double smallest_node_;
};

/// delta may also be given as increasing samples (xi, delta), read by linear interpolation.
FlatteningFunction build_delta0(std::function<double(double)> delta, double rho);
FlatteningFunction build_delta0(const std::vector<std::pair<double, double>>& samples, double rho);

struct FlatteningCheck {
    std::size_t points = 0;
    bool positive = true;       // delta0 > 0 (in log space)
    bool monotone = true;
    bool minorant = true;       // delta0 <= delta
    double worst_minorant_log_gap = 0.0;  // max log(delta0 / delta), <= 0 when minorant
    bool flat = true;           // log(delta0 / xi^k) -> -inf, k = 1..6, on a decreasing sequence
    double flatness_drop_6 = 0.0;  // log10 of (delta0/xi^6 at 1e-2) / (delta0/xi^6 at 1e-3)
    bool pass() const { return positive && monotone && minorant && flat; }
};

/// Checks the minorant, monotone and flatness invariants on `points` log-spaced xi in (0, rho).
FlatteningCheck verify_flattening(const FlatteningFunction& f, std::size_t points = 10000);

class TimeReparam {
public:
    explicit TimeReparam(FlatteningFunction f);

    const FlatteningFunction& flattening() const { return f_; }
    /// log t(xi) = 1/xi + log1p(1/M(xi)). Throws DomainError unless 0 < xi < rho.
    double log_t(double xi) const;
    /// t(xi); throws DomainError below xi_min() where it overflows.
    double t(double xi) const;
    /// log(-t'(xi)); t' < 0 everywhere.
    double log_neg_derivative(double xi) const;
    double derivative(double xi) const;
    /// log t(b) - log t(a) given b - a exactly (accurate when b is near a).
    double log_ratio(double a, double b, double b_minus_a) const;
    /// Smallest xi with t(xi) representable as a double.
    double xi_min() const { return xi_min_; }

private:
    FlatteningFunction f_;
    double xi_min_ = 0.0;
};

TimeReparam build_time_reparam(const FlatteningFunction& f);

struct CenterGenerator {
    Matrix C;                // as supplied
    int power = 1;           // exp(P) = C^power
    Matrix P;
    Matrix C_power;          // exp(P)
    double K = 1.0;          // |exp(-P s)| <= K exp(-chi s) on s in [0, 50]
    double chi = 0.0;        // 0.9 * min Re spec(P)
    double transversality = 0.0;  // min over unit z of z.Pz
    double exp_check = 0.0;  // relative |exp(P) - C^power|

    Eigen::VectorXcd eigenvalues;
    Eigen::MatrixXcd eigenvectors, inverse_eigenvectors;

    int dim() const { return static_cast<int>(P.rows()); }
    /// exp(s P) z for any real s, with the magnitude carried in log space.
    ScaledVector exp_action(double s, const ScaledVector& z) const;
    /// (exp(s P) - I) z, accurate for small s.
    Vector expm1_action(double s, const Vector& z) const;
};

/// P with exp(P) = C^power, C squared while it has an eigenvalue on the
/// negative real axis. Throws DomainError when the spectrum meets the closed
/// unit disk, PreconditionError when P is not diagonalizable to working
/// accuracy or the unit sphere is not transverse to z' = P z.
CenterGenerator real_matrix_log(const Matrix& C);

/// h(z) = exp(-t(|z|^2) P) z; zero input gives zero. Throws DomainError when |z| > working_radius.
ScaledVector apply_h(const CenterGenerator& gen, const TimeReparam& t, const Vector& zhat, double working_radius = 0.9);

struct HInverse {
    Vector zhat;
    double s = 0.0;          // zhat = exp(s P) z with s = t(|zhat|^2)
    /// Relative width of the final bracket on |zhat|. log|h| is of size t, so
    /// an image-space residual is not representable once t exceeds about 1e15;
    /// the bracket is the backward error that stays meaningful.
    double residual = 0.0;
    int iterations = 0;
};

/// Solves for r = |zhat| in log r = log|z| + log|exp(t(r^2) P) z/|z||, which is
/// monotone in r, by bisection. Throws DomainError when the preimage would
/// leave the domain of t or lies below the radius where t overflows.
/// The direction is exact for real spectra; for rotating C it is only
/// meaningful while t(r^2) * |Im spec P| stays well below 1/eps.
HInverse invert_h(const CenterGenerator& gen, const TimeReparam& t, const ScaledVector& z);

struct TauValue {
    double tau = 0.0;
    bool underflow = false;   // the root lies below the smallest normal double; tau reported as 0
};

/// Root of 1 - tau = t(|z|^2) - t(|exp(tau P) z|^2) in (0, 1).
TauValue tau(const CenterGenerator& gen, const TimeReparam& t, const Vector& zhat);

struct CenterMapValue {
    Vector value;          // exp(tau P) zhat
    Vector displacement;   // (exp(tau P) - I) zhat
    TauValue tau;
};

CenterMapValue conjugated_center_map(const CenterGenerator& gen, const TimeReparam& t, const Vector& zhat);

/// The same map through h^-1(C^power h(zhat)); usable while h is resolvable.
Vector conjugated_center_map_direct(const CenterGenerator& gen, const TimeReparam& t, const Vector& zhat);

/// Unstable curve eta = g(zeta) near the tangency point, zeta in R^u.
struct TangencyData {
    int dim = 1;
    std::function<double(const Vector&)> g;
    std::string source;   // expression text when parsed
};

/// Parses g over the variable `zeta` (u = 1) or zeta1..zetau.
TangencyData parse_tangency(const std::string& source, int dim = 1);

/// delta(eps) = largest sampled radius r with |g| <= eps on |zeta| <= r
/// (u = 1; radii log-spaced down to 1e-300).
std::function<double(double)> tangency_modulus(const TangencyData& data, double max_radius = 1.0);

struct RadiusFlatness {
    double radius = 0.0;
    double identity_distance = 0.0;   // max ||D F2hat - I|| over the sampled sphere
    double tau_min = 0.0, tau_max = 0.0;
    double h_log_norm = 0.0;          // max log |h| over the sphere
    bool h_underflow = false;
    std::optional<double> g_ratio;    // max |g(h(z))| / |z|^2
    std::optional<double> angle;      // min atan2(1, |D ghat|)
};

struct FlatnessReport {
    std::vector<RadiusFlatness> radii;   // in the order supplied
    bool identity_decreasing = true;     // along decreasing radii
    bool tau_in_unit_interval = true;
    bool h_norm_monotone = true;
    std::optional<double> r0;            // largest radius below which every sampled ratio is <= 1
};

FlatnessReport flatness_report(const CenterGenerator& gen, const TimeReparam& t, const std::optional<TangencyData>& g,
                               const std::vector<double>& radii, int directions = 16);

struct PipelineOptions {
    double working_radius = 0.9;
    std::vector<double> radii = {0.5, 0.4, 0.3, 0.2, 0.1};
    /// Explicit tangency modulus; derived from g when absent.
    std::function<double(double)> delta;
    double disk_half = 0.2;    // ghat is checked as an admissible graph over [-disk_half, disk_half]
    double disk_eps_y = 0.05;
};

struct PipelineResult {
    double rho = 0.0;
    Matrix B, C;
    CenterGenerator generator;
    std::optional<TimeReparam> time;
    FlatteningCheck flattening;
    FlatnessReport flatness;
    MapSystem transformed;          // (y, zhat) -> (B y, F2hat(zhat))
    bool disk_admissible = false;   // ghat as a graph in the homoclinic chart
    double disk_max_height = 0.0, disk_max_slope = 0.0;
    double angle = 0.0;             // min transversality angle over radii up to r0
    double ghat_slope_small = 0.0;  // |D ghat| at the smallest sampled radius
};

/// sys must be linear block-diagonal near 0 with stable block B (|B| < 1) and
/// center-unstable block C (|C^-1| < 1). Failures are rethrown as StageError.
PipelineResult quasitransverse_pipeline(const MapSystem& sys, const TangencyData& tangency,
                                        const PipelineOptions& options = {});

}  // namespace nonhyp
