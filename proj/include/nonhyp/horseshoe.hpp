#pragma once

// Admissible disks near a nonhyperbolic fixed point with a transverse
// homoclinic point, the graph transforms between two charts, and the symbolic
// coding they induce.
//
// Coordinates are (y, z): y stable, z center-unstable (one-dimensional). The
// dynamics is given in a lifted form so that a circle angle can be followed
// through several turns; a branch from chart i to chart j is the part of
// chart i whose k-th iterate lands in chart j after the lifted z-coordinate is
// shifted back by the target chart's z_lift.
//
// Words follow the disk convention: D_a for a = a0 a1 a2 ... lies in chart a0
// and is the image under G^k of a disk in chart a1. Reading a word left to
// right therefore walks backwards in time.

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nonhyp/linalg.hpp"
#include "nonhyp/map_system.hpp"
#include "nonhyp/parallel.hpp"

namespace nonhyp {

struct Chart {
    double y_center = 0.0;
    double y_half = 0.2;   // admissible disks satisfy |eta - y_center| <= y_half
    double z_half = 0.2;   // disks are graphs over [-z_half, z_half]
    double z_lift = 0.0;   // lifted z-offset at which a branch enters this chart
};

struct ChartedSystem {
    std::array<Chart, 2> charts;
    int k = 1;                                // iterates per graph transform
    double a0 = 0.0;                          // stable contraction |B|
    double b0 = 1.0;                          // center-unstable expansion 1/|C^-1|
    double y_p = 0.0;                         // homoclinic anchor (y_p, 0)
    std::shared_ptr<const NativeMap> step;    // one application of G on lifted (y, z)
    /// Optional allocation-free version of `step`: writes G(in) to out and,
    /// when jac is non-null, DG(in) row-major to jac. Used by the hot loops.
    std::function<void(const double* in, double* out, double* jac)> kernel;
    std::string name;

    Point apply(const Point& p, int steps) const;
    /// Iterates `steps` times and accumulates the Jacobian of the composition.
    Point apply(const Point& p, int steps, Matrix& jacobian) const;
    /// The single-step map as a MapSystem (stable split 1).
    MapSystem as_map_system() const;
};

struct HomoclinicParams {
    double stable = 0.0;               // B; 0 selects default_homoclinic_stable()
    double gamma = 0.8;                // extra contraction applied on the homoclinic excursion
    double y_p = 0.3;
    double eps_y0 = 0.2, eps_z0 = 0.2;
    double eps_y1 = 0.05, eps_z1 = 0.2;
    int k = 32;
    /// Optional C^1-small perturbation added to (y', z'). Expressions over
    /// x1 = y and x2 = z reduced to [-pi, pi]; they should be 2*pi-periodic
    /// in x2 to keep the map continuous on the cylinder.
    std::string perturb_y, perturb_z;
    double perturb_scale = 0.0;
};

/// Default stable multiplier: B with B^32 = 0.49.
double default_homoclinic_stable();

/// A cylinder map G(y, z) = (B(1 - gamma*bump(z)) y + y_p*bump(z), f(z)) with
/// f a degree-two circle map equal to z + z^3 near 0 (so DF(0) = diag(B, 1))
/// and f(pi) = 2*pi. bump is 1 near pi and 0 away from it, hence
/// G(0, pi) = (y_p, 0): the point (y_p, 0) lies on W^s_loc = {z = 0} and its
/// preimage (0, pi) on the lifted continuation of W^cu_loc = {y = 0}.
/// Chart 0 is centered at the fixed point, chart 1 at (y_p, 0) one turn later.
ChartedSystem builtin_homoclinic_system(const HomoclinicParams& params = {});

/// Circle map of the built-in system and its derivative, exposed for tests.
double homoclinic_circle_map(double z);
double homoclinic_circle_map_derivative(double z);

struct AdmissibleDisk {
    int chart = 0;
    double z_half = 0.2;
    std::vector<double> eta;   // samples at z_i = -z_half + i * spacing()

    std::size_t size() const { return eta.size(); }
    double spacing() const { return 2.0 * z_half / static_cast<double>(eta.size() - 1); }
    double z(std::size_t i) const { return -z_half + static_cast<double>(i) * spacing(); }
    std::vector<double> slopes() const;
    double max_slope() const;
};

inline constexpr int kDiskIntervals = 256;

AdmissibleDisk flat_disk(const ChartedSystem& sys, int chart, double value, int intervals = kDiskIntervals);
AdmissibleDisk flat_disk(const ChartedSystem& sys, int chart, int intervals = kDiskIntervals);

/// Error text describing the first admissibility bound the disk violates.
std::optional<std::string> admissibility_violation(const ChartedSystem& sys, const AdmissibleDisk& disk);

/// Max gap of eta plus max gap of the grid slopes. Throws on chart or grid mismatch.
double dist1(const AdmissibleDisk& a, const AdmissibleDisk& b);

/// True when some point of chart `from` reaches chart `to` in sys.k iterates
/// with its z-image spanning the whole target chart.
bool branch_realizable(const ChartedSystem& sys, int from, int to);

/// S_j(D) = G^k(D) restricted to the target chart, as a graph over the
/// target grid. For each target sample the source z is found by a
/// safeguarded Newton solve on the monotone z-image; eta is read between
/// source samples by monotone cubic interpolation.
/// Throws DomainError with "branch too thin", "not a graph" or the failing
/// admissibility bound.
AdmissibleDisk graph_transform(const ChartedSystem& sys, const AdmissibleDisk& disk, int target_chart);

/// Same with an explicit iterate count and target half-width.
AdmissibleDisk graph_transform(const ChartedSystem& sys, const AdmissibleDisk& disk, int target_chart, int steps,
                               double target_z_half, bool check_admissible = true);

struct BranchContraction {
    int from = 0, to = 0;
    bool realizable = false;
    double max_ratio = 0.0;
    std::size_t pairs = 0;
    std::size_t skipped = 0;   // identical pairs (0/0)
};

struct ContractionReport {
    std::vector<BranchContraction> branches;
    double max_ratio = 0.0;
    bool pass = false;   // every realizable branch at or below 1/2
};

/// Random admissible disk in a chart: offset, tilt and a sinusoid with
/// slope bounded by 0.9.
AdmissibleDisk random_disk(const ChartedSystem& sys, int chart, Rng& rng);

/// dist1(S_j(d1), S_j(d2)) / dist1(d1, d2); empty for identical disks.
std::optional<double> contraction_ratio(const ChartedSystem& sys, const AdmissibleDisk& d1, const AdmissibleDisk& d2,
                                        int target_chart);

/// Pairs default to all four branches; unrealizable ones are reported and skipped.
ContractionReport verify_contraction(const ChartedSystem& sys, std::size_t trials, std::uint64_t seed,
                                     std::vector<std::array<int, 2>> chart_pairs = {});

struct AutoKResult {
    int k = 0;
    std::vector<int> tried;
    ContractionReport report;
};

/// Doubles k from 1 until all four branches exist and contract by 1/2.
AutoKResult auto_tune_k(const ChartedSystem& sys, std::size_t probe_trials = 8, std::uint64_t seed = 0, int max_k = 1024);

class SymbolWord {
public:
    /// Periodic words are reduced to their primitive root ("0101" -> "01").
    SymbolWord(std::string letters, bool periodic = true);
    static SymbolWord parse(const std::string& text) { return SymbolWord(text, true); }

    const std::string& letters() const { return letters_; }
    bool periodic() const { return periodic_; }
    std::size_t length() const { return letters_.size(); }
    int at(std::size_t i) const { return letters_[i % letters_.size()] - '0'; }
    /// Rotation starting at index i.
    SymbolWord rotated(std::size_t i) const;

    bool operator==(const SymbolWord& o) const { return letters_ == o.letters_ && periodic_ == o.periodic_; }

private:
    std::string letters_;
    bool periodic_ = true;
};

/// Sum over k >= 0 of 2^-k |a_k - b_k| over the periodic extensions,
/// evaluated as an exact rational when the joint period is at most 62.
double symbol_metric(const SymbolWord& a, const SymbolWord& b);

/// All primitive periodic words of the given length. Rotations are kept:
/// they code distinct points of the same orbit.
std::vector<SymbolWord> primitive_words(std::size_t length);

/// Concatenation of all binary words of length 1..max_length; its shift
/// orbit is dense in the sequence space.
SymbolWord dense_word(std::size_t max_length);

struct PeriodicDiskResult {
    AdmissibleDisk disk;
    std::vector<double> history;   // dist1 between successive iterates
    int iterations = 0;
};

/// Fixed disk of S_{w0} o S_{w1} o ... o S_{w(L-1)} started from the flat
/// disk through the center of chart w0; stops when a step moves less than
/// `tolerance` in dist1.
PeriodicDiskResult periodic_disk(const ChartedSystem& sys, const SymbolWord& word, double tolerance = 1e-10,
                                 int max_iterations = 400);

/// Disk of a finite letter sequence l0 l1 ... l(n-1) applied to `seed`
/// (a disk in the chart that precedes l(n-1)).
AdmissibleDisk sequence_disk(const ChartedSystem& sys, const std::string& letters, const AdmissibleDisk& seed);

struct PeriodicPoint {
    Point point;                    // chart coordinates (y, z) in chart word[0]
    std::vector<Point> orbit;       // x_j = G^{jk}(x) in chart coordinates, j = 0..L-1
    std::vector<int> itinerary;     // chart of x_j
    double residual = 0.0;          // max segment defect of the multiple-shooting system
    double composite_residual = 0.0;// |G^{kL}(x) - x| evaluated in one pass
    double disk_gap = 0.0;          // |y - eta(z)| for the supplied disk (0 when none)
    int iterations = 0;
};

/// Solves x = G^{kL}(x) for a word of length L by Newton on the multiple
/// shooting system x_{j+1} = G^k(x_j). Forward iterates visit the word's
/// charts in reverse cyclic order (x_j lies in chart word[-j mod L]), the
/// same convention as the disks. Seeds come from alternating sweeps: z by
/// inverse branches, y by forward images. When `disk` is given the seed is
/// taken on it and disk_gap is reported.
PeriodicPoint find_periodic_point(const ChartedSystem& sys, const SymbolWord& word,
                                  const std::optional<AdmissibleDisk>& disk = std::nullopt, double tolerance = 1e-8);

struct ConjugacyReport {
    std::string word;
    int letter = 0;
    double distance = 0.0;   // dist1(D_{ia}, S_i(D_a))
    bool pass = false;
};

ConjugacyReport verify_conjugacy(const ChartedSystem& sys, const SymbolWord& word, int letter, double tolerance = 1e-8);

struct CodingFit {
    std::vector<int> prefix_lengths;
    std::vector<double> distances;   // dist1(D_{0^k 1}, D_0)
    double slope = 0.0;              // least-squares slope of log2 distance vs k
    double constant = 0.0;           // C fitted at the first k: d_1 = C 2^-1
    bool bound_holds = false;        // d_k <= C 2^-k for every k
};

CodingFit coding_fit(const ChartedSystem& sys, int max_prefix = 8);

struct InclinationConstants {
    double a0 = 0.0, b0 = 1.0, kappa = 0.0;
    double a() const { return a0 + kappa; }
    double b() const { return b0 - kappa; }
};

struct InclinationReport {
    std::vector<double> lambda;    // lambda_0 .. lambda_m
    std::vector<double> bound;     // (a/b)^m lambda_0 + kappa/(b-a)
    InclinationConstants constants;
    double max_excess = 0.0;       // max (lambda_m - bound_m); <= 0 when the bound holds
    double max_relative_gap = 0.0; // max |bound_m - lambda_m| / max(bound_m, tiny)
    bool pass = false;
};

/// Measured a0 = max |DF_yy|, b0 = min |DF_zz|, kappa = max off-diagonal over
/// the orbit of r. A two-dimensional map with stable split 1 is required.
InclinationConstants measure_inclination_constants(const MapSystem& sys, const Point& r, int steps);

/// Tracks lambda_j = |v^y_j| / |v^z_j| with v_j = DF^j(r) v. Constants are
/// measured when not supplied; `kappa_floor` raises a measured kappa (a
/// positive kappa is what the estimate assumes). Throws DomainError when a
/// v^z_j vanishes and PreconditionError when kappa >= (b0 - a0)^2 / 8.
InclinationReport track_inclination(const MapSystem& sys, const Point& r, const Point& v, int steps,
                                    const std::optional<InclinationConstants>& constants = std::nullopt,
                                    double kappa_floor = 0.0);

struct CoverReport {
    int steps = 0;
    double covered_lo = 0.0, covered_hi = 0.0;  // z-image of the disk's interval
    double target_half = 0.1;
    bool covers = false;
    double beta_max = 0.0, dbeta_max = 0.0;     // graph over the target interval, off W^cu = {y = 0}
    double epsilon = 1e-3;
    bool pass = false;
};

/// Pushes a chart-0 disk through `steps` single iterates and measures how
/// close the part over [-target_half, target_half] is to W^cu_loc.
CoverReport cover_check(const ChartedSystem& sys, const AdmissibleDisk& disk, int steps, double target_half = 0.1,
                        double epsilon = 1e-3);

/// Smallest m <= max_steps at which cover_check passes (reported with pass = false otherwise).
CoverReport cover_until(const ChartedSystem& sys, const AdmissibleDisk& disk, int max_steps, double target_half = 0.1,
                        double epsilon = 1e-3);

}  // namespace nonhyp
