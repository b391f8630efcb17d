#include "nonhyp/horseshoe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "nonhyp/expr.hpp"
#include "nonhyp/interp.hpp"

namespace nonhyp {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// exp(-1/t) for t > 0, else 0, with its derivative.
double flat_ramp(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
double flat_ramp_slope(double t) { return t > 0.0 ? std::exp(-1.0 / t) / (t * t) : 0.0; }

// C-infinity step from 0 (s <= lo) to 1 (s >= hi).
void smooth_step(double s, double lo, double hi, double& value, double& slope) {
    const double w = hi - lo;
    const double t = (s - lo) / w;
    const double a = flat_ramp(t), b = flat_ramp(1.0 - t);
    if (a == 0.0 || b == 0.0) {
        value = a == 0.0 ? 0.0 : 1.0;
        slope = 0.0;
        return;
    }
    const double da = flat_ramp_slope(t), db = -flat_ramp_slope(1.0 - t);
    value = a / (a + b);
    slope = (da * b - a * db) / ((a + b) * (a + b)) / w;
}

double reduce_angle(double z) { return std::remainder(z, kTwoPi); }

// The 2*pi-periodic part q of the circle map f(z) = 2z - q(z): z - z^3 near
// 0 (so f = z + z^3) and sin z - (5/6) sin^3 z away from it (q' = cos z (1 -
// 2.5 sin^2 z) <= 1 with equality only at 0, and q(pi) = 0).
void circle_correction(double z, double& q, double& dq) {
    const double r = reduce_angle(z);
    double chi, dchi;
    smooth_step(std::abs(r), 0.3, 0.6, chi, dchi);
    const double poly = r - r * r * r, dpoly = 1.0 - 3.0 * r * r;
    if (chi == 0.0) {
        q = poly;
        dq = dpoly;
        return;
    }
    const double sn = std::sin(r), cs = std::cos(r);
    const double trig = sn - (5.0 / 6.0) * sn * sn * sn, dtrig = cs * (1.0 - 2.5 * sn * sn);
    q = (1.0 - chi) * poly + chi * trig;
    dq = (1.0 - chi) * dpoly + chi * dtrig + (r < 0.0 ? -dchi : dchi) * (trig - poly);
}

// 1 within 0.5 of pi (mod 2*pi), 0 beyond distance 1.
void excursion_bump(double z, double& value, double& slope) {
    const double r = std::remainder(z - kPi, kTwoPi);
    double chi, dchi;
    smooth_step(std::abs(r), 0.5, 1.0, chi, dchi);
    value = 1.0 - chi;
    slope = r < 0.0 ? dchi : -dchi;
}

Point make_point(double y, double z) {
    Point p(2);
    p << y, z;
    return p;
}

}  // namespace

double homoclinic_circle_map(double z) {
    double q, dq;
    circle_correction(z, q, dq);
    return 2.0 * z - q;
}

double homoclinic_circle_map_derivative(double z) {
    double q, dq;
    circle_correction(z, q, dq);
    return 2.0 - dq;
}

double default_homoclinic_stable() { return std::pow(0.49, 1.0 / 32.0); }

Point ChartedSystem::apply(const Point& p, int steps) const {
    if (kernel) {
        double x[2] = {p[0], p[1]}, next[2];
        for (int s = 0; s < steps; ++s) {
            kernel(x, next, nullptr);
            if (!std::isfinite(next[0]) || !std::isfinite(next[1]))
                throw DomainError("non-finite iterate at step " + std::to_string(s + 1));
            x[0] = next[0];
            x[1] = next[1];
        }
        return make_point(x[0], x[1]);
    }
    Point x = p;
    for (int s = 0; s < steps; ++s) {
        x = step->forward(x);
        if (!x.allFinite()) throw DomainError("non-finite iterate at step " + std::to_string(s + 1));
    }
    return x;
}

Point ChartedSystem::apply(const Point& p, int steps, Matrix& jacobian) const {
    if (kernel) {
        double x[2] = {p[0], p[1]}, next[2], j[4];
        double acc[4] = {1.0, 0.0, 0.0, 1.0};
        for (int s = 0; s < steps; ++s) {
            kernel(x, next, j);
            if (!std::isfinite(next[0]) || !std::isfinite(next[1]))
                throw DomainError("non-finite iterate at step " + std::to_string(s + 1));
            const double a00 = j[0] * acc[0] + j[1] * acc[2], a01 = j[0] * acc[1] + j[1] * acc[3];
            const double a10 = j[2] * acc[0] + j[3] * acc[2], a11 = j[2] * acc[1] + j[3] * acc[3];
            acc[0] = a00;
            acc[1] = a01;
            acc[2] = a10;
            acc[3] = a11;
            x[0] = next[0];
            x[1] = next[1];
        }
        jacobian.resize(2, 2);
        jacobian << acc[0], acc[1], acc[2], acc[3];
        return make_point(x[0], x[1]);
    }
    Point x = p;
    jacobian = Matrix::Identity(2, 2);
    for (int s = 0; s < steps; ++s) {
        Matrix j;
        if (step->jacobian) {
            j = step->jacobian(x);
        } else {
            j.resize(2, 2);
            for (int c = 0; c < 2; ++c) {
                const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, std::abs(x[c]));
                Point up = x, dn = x;
                up[c] += h;
                dn[c] -= h;
                j.col(c) = (step->forward(up) - step->forward(dn)) / (2.0 * h);
            }
        }
        jacobian = j * jacobian;
        x = step->forward(x);
        if (!x.allFinite()) throw DomainError("non-finite iterate at step " + std::to_string(s + 1));
    }
    return x;
}

MapSystem ChartedSystem::as_map_system() const { return from_native(2, 1, *step, name); }

ChartedSystem builtin_homoclinic_system(const HomoclinicParams& params) {
    const double B = params.stable == 0.0 ? default_homoclinic_stable() : params.stable;
    auto bad = [](const std::string& why) { throw ConfigError("invalid homoclinic parameters: " + why); };
    if (!(B > 0.0 && B < 1.0)) bad("stable multiplier must lie in (0, 1)");
    if (!(params.gamma >= 0.0 && params.gamma < 1.0)) bad("gamma must lie in [0, 1)");
    if (!(params.eps_y0 > 0 && params.eps_z0 > 0 && params.eps_y1 > 0 && params.eps_z1 > 0))
        bad("chart half-widths must be positive");
    if (params.eps_z0 >= 0.3 || params.eps_z1 >= 0.3) bad("chart z half-widths must stay below 0.3");
    if (!(params.y_p - params.eps_y1 > params.eps_y0)) bad("charts overlap (need y_p - eps_y1 > eps_y0)");
    if (params.k < 1) bad("k must be at least 1");
    if (!(params.perturb_scale >= 0.0)) bad("perturbation scale must be non-negative");

    const auto symbols = expr::Symbols::coordinates(2);
    std::optional<expr::Expr> py, pz;
    if (params.perturb_scale > 0.0) {
        if (!params.perturb_y.empty()) py = expr::parse(params.perturb_y, symbols);
        if (!params.perturb_z.empty()) pz = expr::parse(params.perturb_z, symbols);
    }
    const double gamma = params.gamma, y_p = params.y_p, scale = params.perturb_scale;
    std::optional<expr::Expr> py_y, py_z, pz_y, pz_z;
    if (py) {
        py_y = py->derivative(0, symbols);
        py_z = py->derivative(1, symbols);
    }
    if (pz) {
        pz_y = pz->derivative(0, symbols);
        pz_z = pz->derivative(1, symbols);
    }

    auto kernel = [=](const double* in, double* out, double* jac) {
        double b, db, q, dq;
        excursion_bump(in[1], b, db);
        circle_correction(in[1], q, dq);
        out[0] = B * (1.0 - gamma * b) * in[0] + y_p * b;
        out[1] = 2.0 * in[1] - q;
        if (jac) {
            jac[0] = B * (1.0 - gamma * b);
            jac[1] = (y_p - B * gamma * in[0]) * db;
            jac[2] = 0.0;
            jac[3] = 2.0 - dq;
        }
        if (py || pz) {
            const double vars[2] = {in[0], reduce_angle(in[1])};
            if (py) out[0] += scale * py->eval(vars);
            if (pz) out[1] += scale * pz->eval(vars);
            if (jac && py) {
                jac[0] += scale * py_y->eval(vars);
                jac[1] += scale * py_z->eval(vars);
            }
            if (jac && pz) {
                jac[2] += scale * pz_y->eval(vars);
                jac[3] += scale * pz_z->eval(vars);
            }
        }
    };

    NativeMap native;
    native.forward = [=](const Vector& x) {
        double out[2];
        const double in[2] = {x[0], x[1]};
        kernel(in, out, nullptr);
        return Vector(make_point(out[0], out[1]));
    };
    native.jacobian = [=](const Vector& x) {
        double out[2], j[4];
        const double in[2] = {x[0], x[1]};
        kernel(in, out, j);
        Matrix m(2, 2);
        m << j[0], j[1], j[2], j[3];
        return m;
    };
    if (!py && !pz) {
        native.inverse = [=](const Vector& x) {
            // f is increasing with f' >= 1, so the lifted preimage is bracketed
            // within distance |x - f(x)| <= 1 of x / 2.
            double lo = 0.5 * x[1] - 1.0, hi = 0.5 * x[1] + 1.0;
            for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
                const double mid = 0.5 * (lo + hi);
                (homoclinic_circle_map(mid) < x[1] ? lo : hi) = mid;
            }
            double z = 0.5 * (lo + hi);
            for (int it = 0; it < 3; ++it) z -= (homoclinic_circle_map(z) - x[1]) / homoclinic_circle_map_derivative(z);
            double b, db;
            excursion_bump(z, b, db);
            return Vector(make_point((x[0] - y_p * b) / (B * (1.0 - gamma * b)), z));
        };
    }

    ChartedSystem sys;
    sys.charts[0] = Chart{0.0, params.eps_y0, params.eps_z0, 0.0};
    sys.charts[1] = Chart{y_p, params.eps_y1, params.eps_z1, kTwoPi};
    sys.k = params.k;
    sys.a0 = B;
    sys.b0 = 1.0;
    sys.y_p = y_p;
    sys.step = std::make_shared<const NativeMap>(std::move(native));
    sys.kernel = kernel;
    sys.name = "homoclinic";
    return sys;
}

// ---------------------------------------------------------------- disks

std::vector<double> AdmissibleDisk::slopes() const { return grid_slopes(eta, spacing()); }

double AdmissibleDisk::max_slope() const {
    double m = 0.0;
    for (double s : slopes()) m = std::max(m, std::abs(s));
    return m;
}

AdmissibleDisk flat_disk(const ChartedSystem& sys, int chart, double value, int intervals) {
    if (chart != 0 && chart != 1) throw PreconditionError("chart must be 0 or 1");
    if (intervals < 4) throw PreconditionError("a disk needs at least 4 grid intervals");
    AdmissibleDisk d;
    d.chart = chart;
    d.z_half = sys.charts[chart].z_half;
    d.eta.assign(static_cast<std::size_t>(intervals) + 1, value);
    return d;
}

AdmissibleDisk flat_disk(const ChartedSystem& sys, int chart, int intervals) {
    if (chart != 0 && chart != 1) throw PreconditionError("chart must be 0 or 1");
    return flat_disk(sys, chart, sys.charts[chart].y_center, intervals);
}

std::optional<std::string> admissibility_violation(const ChartedSystem& sys, const AdmissibleDisk& disk) {
    const Chart& c = sys.charts[disk.chart];
    double gap = 0.0;
    for (double e : disk.eta) {
        if (!std::isfinite(e)) return std::string("non-finite disk sample");
        gap = std::max(gap, std::abs(e - c.y_center));
    }
    std::ostringstream os;
    os.precision(6);
    if (gap > c.y_half) {
        os << "max|eta - y_center| = " << gap << " exceeds eps_y = " << c.y_half << " in chart " << disk.chart;
        return os.str();
    }
    const double slope = disk.max_slope();
    if (slope > 1.0) {
        os << "max|D eta| = " << slope << " exceeds 1 in chart " << disk.chart;
        return os.str();
    }
    return std::nullopt;
}

double dist1(const AdmissibleDisk& a, const AdmissibleDisk& b) {
    if (a.chart != b.chart) throw PreconditionError("dist1 needs disks in the same chart");
    if (a.size() != b.size() || a.z_half != b.z_half) throw PreconditionError("dist1 needs disks on the same grid");
    const auto sa = a.slopes(), sb = b.slopes();
    double c0 = 0.0, c1 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        c0 = std::max(c0, std::abs(a.eta[i] - b.eta[i]));
        c1 = std::max(c1, std::abs(sa[i] - sb[i]));
    }
    return c0 + c1;
}

// ---------------------------------------------------------------- graph transforms

namespace {

struct ZImage {
    double value;   // lifted z-coordinate after the iterates, minus the target lift
    double slope;   // d value / d source z along the disk
    double y;       // stable coordinate of the image
};

// Image of the source point (y(z), z) after `steps` iterates. `y_of` returns
// the disk height and its slope at z.
template <class YOf>
ZImage image_of(const ChartedSystem& sys, int steps, double lift, const YOf& y_of, double z, bool need_slope) {
    double y, dy;
    y_of(z, y, dy);
    if (!need_slope) {
        const Point out = sys.apply(make_point(y, z), steps);
        return {out[1] - lift, 0.0, out[0]};
    }
    Matrix jac;
    const Point out = sys.apply(make_point(y, z), steps, jac);
    return {out[1] - lift, jac(1, 0) * dy + jac(1, 1), out[0]};
}

struct BranchPoint {
    double z;   // source coordinate
    double y;   // stable coordinate of its image
};

// Solves image(z) = target for z in [lo, hi], where image is monotone and
// brackets the target at the ends. Newton steps that leave the bracket are
// replaced by bisection.
template <class YOf>
BranchPoint solve_branch_z(const ChartedSystem& sys, int steps, double lift, const YOf& y_of, double lo, double hi,
                           double image_lo, double image_hi, double target) {
    const bool increasing = image_hi > image_lo;
    if (image_lo == target) return {lo, image_of(sys, steps, lift, y_of, lo, false).y};
    if (image_hi == target) return {hi, image_of(sys, steps, lift, y_of, hi, false).y};
    double z = lo + (hi - lo) * (target - image_lo) / (image_hi - image_lo);
    if (!(z > lo && z < hi)) z = 0.5 * (lo + hi);
    const double eps = std::numeric_limits<double>::epsilon();
    ZImage im{};
    for (int it = 0; it < 300; ++it) {
        im = image_of(sys, steps, lift, y_of, z, true);
        const double g = im.value - target;
        if (g == 0.0) break;
        if ((g < 0.0) == increasing) lo = z;
        else hi = z;
        double next = z - g / im.slope;
        if (!std::isfinite(next) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
        // The last correction is below rounding; the image at z stands for it.
        if (std::abs(next - z) <= 2.0 * eps * std::max(std::abs(z), 1e-300) ||
            hi - lo <= 2.0 * eps * std::max(std::abs(lo), std::abs(hi)))
            break;
        z = next;
    }
    return {z, im.y};
}

void check_chart(int chart) {
    if (chart != 0 && chart != 1) throw PreconditionError("chart must be 0 or 1");
}

std::string branch_name(int from, int to) { return "branch " + std::to_string(from) + "->" + std::to_string(to); }

}  // namespace

AdmissibleDisk graph_transform(const ChartedSystem& sys, const AdmissibleDisk& disk, int target_chart, int steps,
                               double target_z_half, bool check_admissible) {
    check_chart(disk.chart);
    check_chart(target_chart);
    if (steps < 0) throw PreconditionError("iterate count must be non-negative");
    const std::size_t n = disk.size();
    if (n < 5) throw PreconditionError("disk grid too small");
    const double lift = sys.charts[target_chart].z_lift;

    std::vector<double> zs(n);
    for (std::size_t i = 0; i < n; ++i) zs[i] = disk.z(i);
    const Pchip height(zs, disk.eta);
    auto y_of = [&](double z, double& y, double& dy) { height.evaluate(z, y, dy); };

    std::vector<double> image(n);
    for (std::size_t i = 0; i < n; ++i) image[i] = image_of(sys, steps, lift, y_of, zs[i], false).value;
    const bool increasing = image.back() > image.front();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (increasing ? !(image[i + 1] > image[i]) : !(image[i + 1] < image[i])) {
            std::ostringstream os;
            os << "not a graph: the z-image of the disk folds between z = " << zs[i] << " and z = " << zs[i + 1] << " ("
               << branch_name(disk.chart, target_chart) << ")";
            throw DomainError(os.str());
        }
    }
    const double image_min = std::min(image.front(), image.back());
    const double image_max = std::max(image.front(), image.back());

    AdmissibleDisk out;
    out.chart = target_chart;
    out.z_half = target_z_half;
    out.eta.assign(n, 0.0);
    std::size_t covered = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const double zt = out.z(j);
        if (zt >= image_min && zt <= image_max) ++covered;
    }
    if (covered < n) {
        std::ostringstream os;
        os << "branch too thin: " << branch_name(disk.chart, target_chart) << " reaches " << covered << " of " << n
           << " target samples (z-image [" << image_min << ", " << image_max << "])";
        throw DomainError(os.str());
    }

    std::size_t cell = 0;
    for (std::size_t jj = 0; jj < n; ++jj) {
        const std::size_t j = increasing ? jj : n - 1 - jj;
        const double zt = out.z(j);
        // Cells are visited in source order, so the search resumes where it stopped.
        while (cell + 2 < n && (increasing ? image[cell + 1] < zt : image[cell + 1] > zt)) ++cell;
        out.eta[j] = solve_branch_z(sys, steps, lift, y_of, zs[cell], zs[cell + 1], image[cell], image[cell + 1], zt).y;
    }
    if (check_admissible) {
        if (auto why = admissibility_violation(sys, out))
            throw DomainError("admissibility violated after " + branch_name(disk.chart, target_chart) + ": " + *why);
    }
    return out;
}

AdmissibleDisk graph_transform(const ChartedSystem& sys, const AdmissibleDisk& disk, int target_chart) {
    check_chart(target_chart);
    return graph_transform(sys, disk, target_chart, sys.k, sys.charts[target_chart].z_half, true);
}

bool branch_realizable(const ChartedSystem& sys, int from, int to) {
    try {
        graph_transform(sys, flat_disk(sys, from), to);
        return true;
    } catch (const DomainError&) {
        return false;
    }
}

AdmissibleDisk random_disk(const ChartedSystem& sys, int chart, Rng& rng) {
    check_chart(chart);
    const Chart& c = sys.charts[chart];
    const double offset = uniform(rng, -0.3, 0.3) * c.y_half;
    const double tilt = uniform(rng, -1.0, 1.0) * std::min(0.3, 0.3 * c.y_half / c.z_half);
    const double amplitude = uniform(rng, 0.0, 0.3) * c.y_half;
    const double frequency = uniform(rng, 0.0, std::min(40.0, 0.5 / std::max(amplitude, 1e-12)));
    const double phase = uniform(rng, 0.0, kTwoPi);
    AdmissibleDisk d = flat_disk(sys, chart);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double z = d.z(i);
        d.eta[i] = c.y_center + offset + tilt * z + amplitude * std::sin(frequency * z + phase);
    }
    return d;
}

std::optional<double> contraction_ratio(const ChartedSystem& sys, const AdmissibleDisk& d1, const AdmissibleDisk& d2,
                                        int target_chart) {
    const double before = dist1(d1, d2);
    if (before == 0.0) return std::nullopt;
    return dist1(graph_transform(sys, d1, target_chart), graph_transform(sys, d2, target_chart)) / before;
}

ContractionReport verify_contraction(const ChartedSystem& sys, std::size_t trials, std::uint64_t seed,
                                     std::vector<std::array<int, 2>> chart_pairs) {
    if (trials < 1) throw PreconditionError("verify_contraction needs at least one trial");
    if (chart_pairs.empty()) chart_pairs = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    ContractionReport report;
    report.pass = true;
    for (std::size_t b = 0; b < chart_pairs.size(); ++b) {
        const auto [from, to] = chart_pairs[b];
        BranchContraction br;
        br.from = from;
        br.to = to;
        br.realizable = branch_realizable(sys, from, to);
        if (br.realizable) {
            std::vector<double> ratios(trials, -1.0);
            parallel_for(trials, [&](std::size_t t) {
                Rng rng = make_stream(seed, "contraction." + std::to_string(from) + std::to_string(to), t);
                const AdmissibleDisk d1 = random_disk(sys, from, rng);
                const AdmissibleDisk d2 = random_disk(sys, from, rng);
                if (const auto r = contraction_ratio(sys, d1, d2, to)) ratios[t] = *r;
            });
            for (double r : ratios) {
                if (r < 0.0) {
                    ++br.skipped;
                    continue;
                }
                ++br.pairs;
                br.max_ratio = std::max(br.max_ratio, r);
            }
            report.max_ratio = std::max(report.max_ratio, br.max_ratio);
            if (br.max_ratio > 0.5) report.pass = false;
        }
        report.branches.push_back(br);
    }
    return report;
}

AutoKResult auto_tune_k(const ChartedSystem& sys, std::size_t probe_trials, std::uint64_t seed, int max_k) {
    AutoKResult result;
    ChartedSystem trial = sys;
    for (int k = 1; k <= max_k; k *= 2) {
        trial.k = k;
        result.tried.push_back(k);
        bool all = true;
        for (int from = 0; from < 2 && all; ++from)
            for (int to = 0; to < 2 && all; ++to) all = branch_realizable(trial, from, to);
        if (!all) continue;
        result.report = verify_contraction(trial, probe_trials, seed);
        if (result.report.pass) {
            result.k = k;
            return result;
        }
    }
    throw ConvergenceError("no k up to " + std::to_string(max_k) + " gives four contracting branches");
}

// ---------------------------------------------------------------- symbols

SymbolWord::SymbolWord(std::string letters, bool periodic) : letters_(std::move(letters)), periodic_(periodic) {
    if (letters_.empty()) throw PreconditionError("a symbol word must be nonempty");
    for (std::size_t i = 0; i < letters_.size(); ++i)
        if (letters_[i] != '0' && letters_[i] != '1') throw ParseError("symbol words use the letters 0 and 1", i);
    if (!periodic_) return;
    const std::size_t n = letters_.size();
    for (std::size_t p = 1; p < n; ++p) {
        if (n % p != 0) continue;
        bool repeats = true;
        for (std::size_t i = p; i < n && repeats; ++i) repeats = letters_[i] == letters_[i - p];
        if (repeats) {
            letters_.resize(p);
            return;
        }
    }
}

SymbolWord SymbolWord::rotated(std::size_t i) const {
    const std::size_t n = letters_.size();
    i %= n;
    return SymbolWord(letters_.substr(i) + letters_.substr(0, i), periodic_);
}

double symbol_metric(const SymbolWord& a, const SymbolWord& b) {
    const std::size_t period = std::lcm(a.length(), b.length());
    if (period <= 62) {
        // sum_{k<P} c_k 2^-k / (1 - 2^-P) = 2 N / (2^P - 1) with N = sum c_k 2^(P-1-k).
        std::uint64_t numerator = 0;
        for (std::size_t k = 0; k < period; ++k)
            if (a.at(k) != b.at(k)) numerator |= std::uint64_t{1} << (period - 1 - k);
        const long double value = 2.0L * static_cast<long double>(numerator) /
                                  (static_cast<long double>(std::uint64_t{1} << period) - 1.0L);
        return static_cast<double>(value);
    }
    // Longer joint periods: the terms beyond 64 are below double resolution.
    long double sum = 0.0L, weight = 1.0L;
    for (std::size_t k = 0; k < 64; ++k, weight *= 0.5L)
        if (a.at(k) != b.at(k)) sum += weight;
    return static_cast<double>(sum);
}

std::vector<SymbolWord> primitive_words(std::size_t length) {
    if (length < 1 || length > 20) throw PreconditionError("word length must lie in 1..20");
    std::vector<SymbolWord> out;
    for (std::uint32_t bits = 0; bits < (1u << length); ++bits) {
        std::string w(length, '0');
        for (std::size_t i = 0; i < length; ++i)
            if (bits & (1u << (length - 1 - i))) w[i] = '1';
        SymbolWord word(w);
        if (word.length() == length) out.push_back(word);
    }
    return out;
}

SymbolWord dense_word(std::size_t max_length) {
    if (max_length < 1 || max_length > 20) throw PreconditionError("dense word length must lie in 1..20");
    std::string all;
    for (std::size_t len = 1; len <= max_length; ++len) {
        for (std::uint32_t bits = 0; bits < (1u << len); ++bits)
            for (std::size_t i = 0; i < len; ++i) all.push_back((bits & (1u << (len - 1 - i))) ? '1' : '0');
    }
    return SymbolWord(all, false);
}

// ---------------------------------------------------------------- periodic disks

namespace {
AdmissibleDisk apply_word_once(const ChartedSystem& sys, const SymbolWord& word, AdmissibleDisk disk) {
    for (std::size_t i = word.length(); i-- > 0;) disk = graph_transform(sys, disk, word.at(i));
    return disk;
}
}  // namespace

PeriodicDiskResult periodic_disk(const ChartedSystem& sys, const SymbolWord& word, double tolerance, int max_iterations) {
    if (!word.periodic()) throw PreconditionError("periodic_disk needs a periodic word");
    PeriodicDiskResult result;
    AdmissibleDisk current = flat_disk(sys, word.at(0));
    for (int it = 1; it <= max_iterations; ++it) {
        AdmissibleDisk next = apply_word_once(sys, word, current);
        const double step = dist1(next, current);
        result.history.push_back(step);
        result.iterations = it;
        current = std::move(next);
        if (step < tolerance) {
            result.disk = std::move(current);
            return result;
        }
        const std::size_t h = result.history.size();
        if (h >= 2 && step > result.history[h - 2] && step > 1e-12) {
            std::ostringstream os;
            os << "word " << word.letters() << ": composite transform is not contracting (step " << result.history[h - 2]
               << " -> " << step << " at iteration " << it << ")";
            throw ConvergenceError(os.str());
        }
    }
    throw ConvergenceError("word " + word.letters() + ": periodic disk did not converge in " +
                           std::to_string(max_iterations) + " iterations");
}

AdmissibleDisk sequence_disk(const ChartedSystem& sys, const std::string& letters, const AdmissibleDisk& seed) {
    AdmissibleDisk disk = seed;
    for (std::size_t i = letters.size(); i-- > 0;) {
        const char c = letters[i];
        if (c != '0' && c != '1') throw ParseError("symbol words use the letters 0 and 1", i);
        disk = graph_transform(sys, disk, c - '0');
    }
    return disk;
}

ConjugacyReport verify_conjugacy(const ChartedSystem& sys, const SymbolWord& word, int letter, double tolerance) {
    check_chart(letter);
    ConjugacyReport report;
    report.word = word.letters();
    report.letter = letter;
    const AdmissibleDisk lhs_side = graph_transform(sys, periodic_disk(sys, word).disk, letter);
    // Directly: the letter followed by enough repetitions of the word that
    // the flat seed is forgotten (each letter contracts by at least 1/2).
    std::string letters(1, static_cast<char>('0' + letter));
    const std::size_t reps = (44 + word.length() - 1) / word.length();
    for (std::size_t r = 0; r < reps; ++r) letters += word.letters();
    const AdmissibleDisk direct = sequence_disk(sys, letters, flat_disk(sys, word.at(0)));
    report.distance = dist1(direct, lhs_side);
    report.pass = report.distance <= tolerance;
    return report;
}

CodingFit coding_fit(const ChartedSystem& sys, int max_prefix) {
    if (max_prefix < 2) throw PreconditionError("coding fit needs at least two prefix lengths");
    CodingFit fit;
    const AdmissibleDisk base = periodic_disk(sys, SymbolWord("0")).disk;
    fit.prefix_lengths.resize(static_cast<std::size_t>(max_prefix));
    fit.distances.resize(static_cast<std::size_t>(max_prefix));
    parallel_for(static_cast<std::size_t>(max_prefix), [&](std::size_t i) {
        const int k = static_cast<int>(i) + 1;
        const SymbolWord word(std::string(static_cast<std::size_t>(k), '0') + "1");
        fit.prefix_lengths[i] = k;
        fit.distances[i] = dist1(periodic_disk(sys, word).disk, base);
    });
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(max_prefix);
    for (std::size_t i = 0; i < fit.distances.size(); ++i) {
        const double x = fit.prefix_lengths[i], y = std::log2(fit.distances[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.constant = fit.distances[0] * 2.0;
    fit.bound_holds = true;
    for (std::size_t i = 0; i < fit.distances.size(); ++i)
        if (fit.distances[i] > fit.constant * std::ldexp(1.0, -fit.prefix_lengths[i]) * (1.0 + 1e-12)) fit.bound_holds = false;
    return fit;
}

// ---------------------------------------------------------------- periodic points

PeriodicPoint find_periodic_point(const ChartedSystem& sys, const SymbolWord& word,
                                  const std::optional<AdmissibleDisk>& disk, double tolerance) {
    if (!word.periodic()) throw PreconditionError("find_periodic_point needs a periodic word");
    const std::size_t L = word.length();
    std::vector<int> chart(L);
    for (std::size_t j = 0; j < L; ++j) chart[j] = word.at((L - j) % L);
    if (disk && disk->chart != chart[0]) throw PreconditionError("seed disk lies in the wrong chart");
    const int k = sys.k;
    auto next_of = [L](std::size_t j) { return (j + 1) % L; };
    auto lift_of = [&](std::size_t j) { return sys.charts[chart[next_of(j)]].z_lift; };

    std::vector<double> y(L), z(L, 0.0);
    for (std::size_t j = 0; j < L; ++j) y[j] = sys.charts[chart[j]].y_center;
    std::optional<Pchip> seed_height;
    if (disk) {
        std::vector<double> zs(disk->size());
        for (std::size_t i = 0; i < zs.size(); ++i) zs[i] = disk->z(i);
        seed_height.emplace(zs, disk->eta);
        y[0] = (*seed_height)(0.0);
    }

    // Seed: z is expanded forward, so it is found through inverse branches;
    // y is contracted forward, so it is pushed by forward images.
    for (int sweep = 0; sweep < 8; ++sweep) {
        for (std::size_t jj = L; jj-- > 0;) {
            const std::size_t j = jj;
            const double zh = sys.charts[chart[j]].z_half;
            auto y_of = [&](double, double& yy, double& dy) {
                yy = y[j];
                dy = 0.0;
            };
            const double lo = image_of(sys, k, lift_of(j), y_of, -zh, false).value;
            const double hi = image_of(sys, k, lift_of(j), y_of, zh, false).value;
            const double target = z[next_of(j)];
            if (!(target >= std::min(lo, hi) && target <= std::max(lo, hi))) {
                std::ostringstream os;
                os << "word " << word.letters() << ": " << branch_name(chart[j], chart[next_of(j)])
                   << " does not reach z = " << target;
                throw DomainError(os.str());
            }
            z[j] = solve_branch_z(sys, k, lift_of(j), y_of, -zh, zh, lo, hi, target).z;
        }
        for (std::size_t j = 0; j < L; ++j) y[next_of(j)] = sys.apply(make_point(y[j], z[j]), k)[0];
    }

    const Eigen::Index n = static_cast<Eigen::Index>(2 * L);
    auto evaluate = [&](const std::vector<double>& ys, const std::vector<double>& zs, Vector& defect, Matrix* jac) {
        defect.resize(n);
        if (jac) jac->setZero(n, n);
        double worst = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
            const std::size_t nj = next_of(j);
            Matrix dj;
            Point out = jac ? sys.apply(make_point(ys[j], zs[j]), k, dj) : sys.apply(make_point(ys[j], zs[j]), k);
            out[1] -= lift_of(j);
            const Eigen::Index r = static_cast<Eigen::Index>(2 * j), c = static_cast<Eigen::Index>(2 * nj);
            defect[r] = out[0] - ys[nj];
            defect[r + 1] = out[1] - zs[nj];
            worst = std::max(worst, std::hypot(defect[r], defect[r + 1]));
            if (jac) {
                jac->block(r, r, 2, 2) += dj;
                (*jac)(r, c) -= 1.0;
                (*jac)(r + 1, c + 1) -= 1.0;
            }
        }
        return worst;
    };

    PeriodicPoint result;
    Vector defect;
    Matrix jac;
    double residual = evaluate(y, z, defect, &jac);
    for (int it = 0; it < 40 && residual > 0.0; ++it) {
        const Vector delta = jac.partialPivLu().solve(-defect);
        bool improved = false;
        for (double t = 1.0; t >= 1.0 / 1024.0; t *= 0.5) {
            std::vector<double> ty = y, tz = z;
            for (std::size_t j = 0; j < L; ++j) {
                ty[j] += t * delta[static_cast<Eigen::Index>(2 * j)];
                tz[j] += t * delta[static_cast<Eigen::Index>(2 * j + 1)];
            }
            Vector td;
            double tr;
            try {
                tr = evaluate(ty, tz, td, nullptr);
            } catch (const DomainError&) {
                continue;
            }
            if (tr < residual) {
                y = std::move(ty);
                z = std::move(tz);
                improved = true;
                break;
            }
        }
        result.iterations = it + 1;
        if (!improved) break;
        residual = evaluate(y, z, defect, &jac);
    }
    result.residual = residual;
    if (!(residual <= tolerance)) {
        std::ostringstream os;
        os << "word " << word.letters() << ": Newton stalled at residual " << residual;
        throw ConvergenceError(os.str());
    }

    for (std::size_t j = 0; j < L; ++j) {
        const Chart& c = sys.charts[chart[j]];
        if (std::abs(y[j] - c.y_center) > c.y_half + 1e-12 || std::abs(z[j]) > c.z_half + 1e-12) {
            std::ostringstream os;
            os << "word " << word.letters() << ": orbit leaves the chart sequence at iterate " << j * static_cast<std::size_t>(k)
               << " (expected chart " << chart[j] << ")";
            throw DomainError(os.str());
        }
        result.orbit.push_back(make_point(y[j], z[j]));
        result.itinerary.push_back(chart[j]);
    }
    result.point = result.orbit.front();

    Point x = result.point;
    for (std::size_t j = 0; j < L; ++j) {
        x = sys.apply(x, k);
        x[1] -= lift_of(j);
    }
    result.composite_residual = (x - result.point).norm();
    if (seed_height) result.disk_gap = std::abs(result.point[0] - (*seed_height)(result.point[1]));
    return result;
}

// ---------------------------------------------------------------- inclination

InclinationConstants measure_inclination_constants(const MapSystem& sys, const Point& r, int steps) {
    if (sys.dimension != 2 || sys.stable_split != 1)
        throw PreconditionError("inclination tracking needs a planar map with stable split 1");
    InclinationConstants c;
    c.a0 = 0.0;
    c.b0 = std::numeric_limits<double>::infinity();
    c.kappa = 0.0;
    Point x = r;
    for (int s = 0; s < std::max(steps, 1); ++s) {
        const Matrix j = eval_jacobian(sys, x);
        c.a0 = std::max(c.a0, std::abs(j(0, 0)));
        c.b0 = std::min(c.b0, std::abs(j(1, 1)));
        c.kappa = std::max({c.kappa, std::abs(j(0, 1)), std::abs(j(1, 0))});
        x = eval_forward(sys, x);
    }
    return c;
}

InclinationReport track_inclination(const MapSystem& sys, const Point& r, const Point& v, int steps,
                                    const std::optional<InclinationConstants>& constants, double kappa_floor) {
    if (steps < 0) throw PreconditionError("step count must be non-negative");
    if (v.size() != 2) throw PreconditionError("tangent vector must be planar");
    if (v[1] == 0.0) throw DomainError("inclination infinite at step 0 (v^z = 0)");
    InclinationReport report;
    InclinationConstants c = constants ? *constants : measure_inclination_constants(sys, r, steps);
    if (!constants) c.kappa = std::max(c.kappa, kappa_floor);
    if (!(c.b0 > c.a0)) throw PreconditionError("inclination estimate needs b0 > a0");
    if (!(c.kappa < (c.b0 - c.a0) * (c.b0 - c.a0) / 8.0))
        throw PreconditionError("kappa must stay below (b0 - a0)^2 / 8");
    report.constants = c;
    const double ratio = c.a() / c.b();
    const double offset = c.kappa / (c.b() - c.a());

    Point x = r;
    Vector w = v;
    const double lambda0 = std::abs(w[0]) / std::abs(w[1]);
    report.max_excess = -std::numeric_limits<double>::infinity();
    report.pass = true;
    for (int m = 0; m <= steps; ++m) {
        if (m > 0) {
            w = eval_jacobian(sys, x) * w;
            x = eval_forward(sys, x);
            if (w[1] == 0.0) throw DomainError("inclination infinite at step " + std::to_string(m) + " (v^z = 0)");
            w /= w.norm();
        }
        const double lambda = std::abs(w[0]) / std::abs(w[1]);
        const double bound = std::pow(ratio, m) * lambda0 + offset;
        report.lambda.push_back(lambda);
        report.bound.push_back(bound);
        report.max_excess = std::max(report.max_excess, lambda - bound);
        report.max_relative_gap =
            std::max(report.max_relative_gap, std::abs(bound - lambda) / std::max(bound, std::numeric_limits<double>::min()));
        if (lambda > bound * (1.0 + 1e-12)) report.pass = false;
    }
    return report;
}

// ---------------------------------------------------------------- covering

CoverReport cover_check(const ChartedSystem& sys, const AdmissibleDisk& disk, int steps, double target_half, double epsilon) {
    if (disk.chart != 0) throw PreconditionError("cover_check needs a disk in chart 0");
    if (!(target_half > 0.0 && target_half <= sys.charts[0].z_half))
        throw PreconditionError("target interval must lie inside chart 0");
    if (steps < 0) throw PreconditionError("step count must be non-negative");
    CoverReport report;
    report.steps = steps;
    report.target_half = target_half;
    report.epsilon = epsilon;
    const Point lo = sys.apply(make_point(disk.eta.front(), -disk.z_half), steps);
    const Point hi = sys.apply(make_point(disk.eta.back(), disk.z_half), steps);
    report.covered_lo = std::min(lo[1], hi[1]);
    report.covered_hi = std::max(lo[1], hi[1]);
    report.covers = report.covered_lo <= -target_half && report.covered_hi >= target_half;
    if (!report.covers) return report;
    const AdmissibleDisk pushed = graph_transform(sys, disk, 0, steps, target_half, false);
    for (double e : pushed.eta) report.beta_max = std::max(report.beta_max, std::abs(e - sys.charts[0].y_center));
    report.dbeta_max = pushed.max_slope();
    report.pass = report.beta_max < epsilon && report.dbeta_max < epsilon;
    return report;
}

CoverReport cover_until(const ChartedSystem& sys, const AdmissibleDisk& disk, int max_steps, double target_half,
                        double epsilon) {
    AdmissibleDisk current = disk;
    CoverReport last;
    for (int m = 0; m <= max_steps; ++m) {
        if (m > 0) current = graph_transform(sys, current, 0, 1, sys.charts[0].z_half, false);
        const CoverReport probe = cover_check(sys, current, 0, target_half, epsilon);
        if (probe.pass) {
            last = cover_check(sys, disk, m, target_half, epsilon);
            if (last.pass) return last;
        }
        last = probe;
        last.steps = m;
    }
    last.pass = false;
    return last;
}

}  // namespace nonhyp
