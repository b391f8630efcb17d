#include "doctest.h"

#include <cmath>
#include <set>

#include "nonhyp/horseshoe.hpp"

using namespace nonhyp;

namespace {
constexpr double kPi = 3.14159265358979323846;

Point pt(double a, double b) {
    Point p(2);
    p << a, b;
    return p;
}

// Chart system driven by a plain function of (y, z), for hand-computable cases.
template <class F>
ChartedSystem toy_system(F f) {
    NativeMap native;
    native.forward = [f](const Vector& x) {
        double out[2];
        f(x[0], x[1], out);
        return Vector(pt(out[0], out[1]));
    };
    ChartedSystem sys;
    sys.charts[0] = Chart{0.0, 0.2, 0.2, 0.0};
    sys.charts[1] = Chart{10.0, 0.2, 0.2, 0.0};
    sys.k = 1;
    sys.a0 = 0.25;
    sys.b0 = 2.0;
    sys.step = std::make_shared<const NativeMap>(native);
    sys.name = "toy";
    return sys;
}

ChartedSystem linear_toy() {
    return toy_system([](double y, double z, double* out) {
        out[0] = 0.25 * y;
        out[1] = 2.0 * z;
    });
}

const ChartedSystem& builtin() {
    static const ChartedSystem sys = builtin_homoclinic_system();
    return sys;
}
}  // namespace

TEST_CASE("built-in homoclinic system") {
    const auto& sys = builtin();
    const MapSystem map = sys.as_map_system();
    const Matrix j0 = eval_jacobian(map, pt(0, 0));
    CHECK(j0(0, 0) == doctest::Approx(default_homoclinic_stable()).epsilon(1e-15));
    CHECK(j0(1, 1) == 1.0);
    CHECK(j0(0, 1) == 0.0);
    CHECK(std::pow(default_homoclinic_stable(), 32) == doctest::Approx(0.49).epsilon(1e-14));

    // V(y, z) = |z| grows along orbits in chart 0.
    const Point image = eval_forward(map, pt(0.0, 0.1));
    CHECK(image[1] == doctest::Approx(0.101).epsilon(1e-15));

    // The homoclinic excursion: (0, pi) lands on (y_p, 0) one turn later.
    const Point anchor = eval_forward(map, pt(0.0, kPi));
    CHECK(anchor[0] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(anchor[1] == doctest::Approx(2 * kPi).epsilon(1e-15));

    // W^s_loc = {z = 0} and W^cu_loc = {y = 0} are invariant in chart 0.
    CHECK(eval_forward(map, pt(0.15, 0.0))[1] == 0.0);
    CHECK(eval_forward(map, pt(0.0, 0.15))[0] == 0.0);

    double min_slope = 10.0;
    for (int i = 0; i <= 20000; ++i) {
        const double z = -kPi + 2 * kPi * i / 20000.0;
        const double d = homoclinic_circle_map_derivative(z);
        if (std::abs(z) > 1e-3) CHECK(d > 1.0);
        min_slope = std::min(min_slope, d);
        const double h = 1e-6;
        CHECK(d == doctest::Approx((homoclinic_circle_map(z + h) - homoclinic_circle_map(z - h)) / (2 * h)).epsilon(1e-6));
    }
    CHECK(min_slope == doctest::Approx(1.0));
    CHECK(homoclinic_circle_map(0.2) == doctest::Approx(0.2 + 0.008).epsilon(1e-15));
    CHECK(homoclinic_circle_map(0.3 + 2 * kPi) == doctest::Approx(homoclinic_circle_map(0.3) + 4 * kPi));

    // Native inverse round trip.
    for (double z : {-2.0, -0.1, 0.05, 1.0, 3.0}) {
        const Point p = pt(0.05, z);
        CHECK((eval_inverse(map, eval_forward(map, p)) - p).norm() <= 1e-12);
    }

    HomoclinicParams bad;
    bad.y_p = 0.2;
    CHECK_THROWS_AS(builtin_homoclinic_system(bad), ConfigError);
    bad = HomoclinicParams{};
    bad.stable = 1.5;
    CHECK_THROWS_AS(builtin_homoclinic_system(bad), ConfigError);
}

TEST_CASE("dist1 examples") {
    const auto& sys = builtin();
    const AdmissibleDisk zero = flat_disk(sys, 0, 0.0);
    CHECK(dist1(zero, zero) == 0.0);
    CHECK(dist1(zero, flat_disk(sys, 0, 0.01)) == doctest::Approx(0.01).epsilon(1e-14));

    AdmissibleDisk a;
    a.z_half = 1.0;
    a.eta.assign(257, 0.0);
    AdmissibleDisk b = a;
    for (std::size_t i = 0; i < b.size(); ++i) b.eta[i] = 0.01 * b.z(i);
    CHECK(dist1(a, b) == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(dist1(a, b) == dist1(b, a));

    CHECK_THROWS_AS(dist1(zero, flat_disk(sys, 1)), PreconditionError);
    CHECK_THROWS_AS(dist1(zero, flat_disk(sys, 0, 0.0, 128)), PreconditionError);
}

TEST_CASE("graph transform") {
    const auto& sys = builtin();
    const AdmissibleDisk segment = flat_disk(sys, 1, 0.3);
    const AdmissibleDisk image = graph_transform(sys, segment, 0);
    CHECK(image.chart == 0);
    for (double e : image.eta) CHECK(std::abs(e) <= sys.charts[0].y_half);
    // On this branch G^k is (B^k y, f^k(z)), so the flat segment stays flat.
    CHECK(image.eta[128] == doctest::Approx(0.3 * 0.49).epsilon(1e-12));
    CHECK_FALSE(admissibility_violation(sys, image).has_value());

    const auto toy = linear_toy();
    AdmissibleDisk c = flat_disk(toy, 0, 0.1);
    const AdmissibleDisk tc = graph_transform(toy, c, 0);
    for (double e : tc.eta) CHECK(e == 0.025);

    const auto shifted = toy_system([](double y, double z, double* out) {
        out[0] = 0.25 * y;
        out[1] = 2.0 * z + 5.0;
    });
    CHECK_THROWS_WITH_AS(graph_transform(shifted, flat_disk(shifted, 0, 0.0), 0), doctest::Contains("branch too thin"),
                         DomainError);

    const auto folded = toy_system([](double y, double z, double* out) {
        out[0] = 0.25 * y;
        out[1] = 20.0 * z * z - 0.3;
    });
    CHECK_THROWS_WITH_AS(graph_transform(folded, flat_disk(folded, 0, 0.0), 0), doctest::Contains("not a graph"),
                         DomainError);

    const auto steep = toy_system([](double y, double z, double* out) {
        out[0] = 0.25 * y + 3.0 * z;
        out[1] = 2.0 * z;
    });
    CHECK_THROWS_WITH_AS(graph_transform(steep, flat_disk(steep, 0, 0.0), 0), doctest::Contains("admissibility violated"),
                         DomainError);

    // Before the excursion branch opens there is no way from chart 0 to chart 1.
    ChartedSystem short_k = sys;
    short_k.k = 4;
    CHECK_FALSE(branch_realizable(short_k, 0, 1));
    CHECK(branch_realizable(short_k, 0, 0));
}

TEST_CASE("contraction of the graph transforms") {
    const auto toy = linear_toy();
    Rng rng = make_stream(2, "toy");
    for (int t = 0; t < 20; ++t) {
        // Linear disks: eta gap shrinks by 1/4, slope gap by 1/8.
        AdmissibleDisk d1 = flat_disk(toy, 0, 0.0), d2 = d1;
        const double c1 = uniform(rng, -0.05, 0.05), s1 = uniform(rng, -0.5, 0.5);
        const double c2 = uniform(rng, -0.05, 0.05), s2 = uniform(rng, -0.5, 0.5);
        for (std::size_t i = 0; i < d1.size(); ++i) {
            d1.eta[i] = c1 + s1 * d1.z(i);
            d2.eta[i] = c2 + s2 * d2.z(i);
        }
        const auto ratio = contraction_ratio(toy, d1, d2, 0);
        REQUIRE(ratio.has_value());
        CHECK(*ratio <= 0.25 + 1e-12);
    }
    CHECK_FALSE(contraction_ratio(toy, flat_disk(toy, 0, 0.1), flat_disk(toy, 0, 0.1), 0).has_value());

    const auto report = verify_contraction(builtin(), 10, 3);
    REQUIRE(report.branches.size() == 4);
    for (const auto& b : report.branches) {
        CHECK(b.realizable);
        CHECK(b.pairs == 10);
        CHECK(b.max_ratio <= 0.5);
    }
    CHECK(report.pass);

    const auto tuned = auto_tune_k(builtin_homoclinic_system(), 4, 1);
    CHECK(tuned.k == 32);
    CHECK(tuned.tried == std::vector<int>{1, 2, 4, 8, 16, 32});
}

TEST_CASE("symbol words and their metric") {
    CHECK(SymbolWord("0101").letters() == "01");
    CHECK(SymbolWord("000").letters() == "0");
    CHECK(SymbolWord("010").letters() == "010");
    CHECK(SymbolWord("0101", false).letters() == "0101");
    CHECK_THROWS_AS(SymbolWord(""), PreconditionError);
    CHECK_THROWS_AS(SymbolWord("012"), ParseError);
    CHECK(SymbolWord("011").rotated(1).letters() == "110");

    const SymbolWord zero("0"), one_zero("10"), zero_one("01");
    CHECK(symbol_metric(zero, zero) == 0.0);
    // "10" repeating differs from all zeros at every even index: 1 + 1/4 + ... = 4/3.
    CHECK(symbol_metric(zero, one_zero) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(symbol_metric(zero_one, zero) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    // A single leading mismatch: "1" followed by zeros, as a finite word extended periodically by
    // a period long enough that the next 1 is below double resolution.
    CHECK(symbol_metric(SymbolWord(std::string("1") + std::string(70, '0')), zero) == 1.0);

    std::vector<SymbolWord> sample;
    for (std::size_t len = 1; len <= 4; ++len)
        for (const auto& w : primitive_words(len)) sample.push_back(w);
    for (const auto& a : sample)
        for (const auto& b : sample) {
            CHECK(symbol_metric(a, b) == symbol_metric(b, a));
            CHECK((symbol_metric(a, b) == 0.0) == (a == b));
            for (const auto& c : sample) CHECK(symbol_metric(a, c) <= symbol_metric(a, b) + symbol_metric(b, c) + 1e-15);
        }

    const std::vector<std::size_t> counts = {2, 2, 6, 12, 30};
    for (std::size_t len = 1; len <= 5; ++len) CHECK(primitive_words(len).size() == counts[len - 1]);

    const SymbolWord dense = dense_word(3);
    CHECK(dense.letters() == "01" "00011011" "000001010011100101110111");
    CHECK_FALSE(dense.periodic());
}

TEST_CASE("periodic disks") {
    const auto& sys = builtin();
    const auto zero = periodic_disk(sys, SymbolWord("0"));
    for (double e : zero.disk.eta) CHECK(e == 0.0);

    const auto zo = periodic_disk(sys, SymbolWord("01"));
    CHECK(zo.disk.chart == 0);
    CHECK(dist1(zo.disk, zero.disk) > 0.1);
    const auto one = periodic_disk(sys, SymbolWord("1"));
    const auto oz = periodic_disk(sys, SymbolWord("10"));
    CHECK(dist1(oz.disk, one.disk) > 1e-3);
    // The step history decays geometrically.
    for (std::size_t i = 1; i < zo.history.size(); ++i)
        if (zo.history[i - 1] > 1e-12) CHECK(zo.history[i] <= 0.5 * zo.history[i - 1]);
    CHECK(zo.history.back() < 1e-10);

    // Words agreeing in their first two letters.
    const CodingFit fit = coding_fit(sys, 8);
    const auto a = periodic_disk(sys, SymbolWord("0011"));
    CHECK(dist1(a.disk, zo.disk) <= fit.constant * 0.25);
    CHECK(fit.bound_holds);
    CHECK(fit.slope >= -1.2);
    CHECK(fit.slope <= -0.8);
}

TEST_CASE("conjugacy with the shift") {
    const auto& sys = builtin();
    CHECK(verify_conjugacy(sys, SymbolWord("0"), 0).distance == 0.0);
    const auto r = verify_conjugacy(sys, SymbolWord("01"), 1);
    CHECK(r.pass);
    CHECK(r.distance <= 1e-8);
    ChartedSystem short_k = sys;
    short_k.k = 4;
    CHECK_THROWS_WITH_AS(verify_conjugacy(short_k, SymbolWord("0"), 1), doctest::Contains("branch too thin"), DomainError);
}

TEST_CASE("periodic points") {
    const auto& sys = builtin();
    const auto origin = find_periodic_point(sys, SymbolWord("0"));
    CHECK(origin.point.norm() == 0.0);
    CHECK(origin.residual == 0.0);

    const auto disk = periodic_disk(sys, SymbolWord("01")).disk;
    const auto p01 = find_periodic_point(sys, SymbolWord("01"), disk);
    CHECK(p01.residual <= 1e-8);
    CHECK(p01.composite_residual <= 1e-8);
    CHECK(p01.itinerary == std::vector<int>{0, 1});
    CHECK(p01.disk_gap <= 1e-8);

    const auto p001 = find_periodic_point(sys, SymbolWord("001"));
    CHECK(p001.itinerary == std::vector<int>{0, 1, 0});
    CHECK((p001.point - p01.point).norm() > 1e-6);

    // A rotation codes the next point of the same orbit.
    const auto p10 = find_periodic_point(sys, SymbolWord("10"));
    CHECK((p10.point - p01.orbit[1]).norm() <= 1e-10);

    ChartedSystem short_k = sys;
    short_k.k = 4;
    CHECK_THROWS_AS(find_periodic_point(short_k, SymbolWord("01")), DomainError);
}

TEST_CASE("inclination estimates") {
    const MapSystem lin = linear_diagonal({0.5, 2.0}, 1);
    const auto exact = track_inclination(lin, pt(0.1, 0.0), pt(1.0, 1.0), 30);
    CHECK(exact.pass);
    CHECK(exact.constants.kappa == 0.0);
    CHECK(exact.max_relative_gap <= 1e-12);
    CHECK(exact.lambda[3] == doctest::Approx(1.0 / 64.0).epsilon(1e-14));

    const auto flat = track_inclination(lin, pt(0.1, 0.0), pt(0.0, 1.0), 10);
    for (double l : flat.lambda) CHECK(l == 0.0);

    CHECK_THROWS_WITH_AS(track_inclination(lin, pt(0.1, 0.0), pt(1.0, 0.0), 5), doctest::Contains("step 0"), DomainError);

    const auto& sys = builtin();
    const MapSystem map = sys.as_map_system();
    const double gap = sys.b0 - sys.a0;
    const auto rep = track_inclination(map, pt(0.05, 0.0), pt(1.0, 1.0), 30, std::nullopt, gap * gap / 16.0);
    CHECK(rep.pass);
    CHECK(rep.max_excess <= 0.0);
    CHECK(rep.constants.a0 == doctest::Approx(sys.a0).epsilon(1e-15));

    InclinationConstants too_big{0.5, 1.0, 0.1};
    CHECK_THROWS_AS(track_inclination(map, pt(0.05, 0.0), pt(1.0, 1.0), 3, too_big), PreconditionError);
}

TEST_CASE("covering the central disk") {
    const auto& sys = builtin();
    const auto invariant = cover_check(sys, flat_disk(sys, 0, 0.0), 25);
    CHECK(invariant.covers);
    CHECK(invariant.beta_max == 0.0);
    CHECK(invariant.pass);

    const auto offset = flat_disk(sys, 0, 0.1);
    const auto none = cover_check(sys, offset, 0);
    CHECK(none.covers);
    CHECK_FALSE(none.pass);

    const auto reached = cover_until(sys, offset, 400);
    CHECK(reached.pass);
    CHECK(reached.steps > 20);
    CHECK(reached.beta_max < 1e-3);
    CHECK(reached.dbeta_max < 1e-3);
    const auto earlier = cover_check(sys, offset, reached.steps - 1);
    CHECK_FALSE(earlier.pass);
}
