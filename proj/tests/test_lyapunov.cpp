#include "doctest.h"

#include <cmath>
#include <random>

#include "nonhyp/lyapunov.hpp"
#include "nonhyp/parallel.hpp"

using namespace nonhyp;

namespace {
Point pt(double a, double b) {
    Point p(2);
    p << a, b;
    return p;
}

RegionSpec model_region(double delta) {
    RegionSpec r;
    r.delta = delta;
    r.K = 2.0;
    r.neighborhood = Box::symmetric(2, 0.2);
    return r;
}
}  // namespace

TEST_CASE("coordinate pair values and set predicates") {
    const auto pair = LyapunovPair::coordinate_split(2, 1);
    const Point p = pt(0, 0);
    CHECK(pair.W(pt(0.05, -0.07), p) == 0.05);
    CHECK(pair.V(pt(0.05, -0.07), p) == 0.07);
    CHECK(in_P(pair, 0.1, p, pt(0.05, 0.05)));
    CHECK(in_Q(pair, 0.1, p, pt(0.05, 0.1)));
    CHECK_FALSE(in_Q(pair, 0.1, p, pt(0.05, 0.09)));
    CHECK(in_T(pair, 0.1, p, pt(0.05, 0.0)));
    CHECK_FALSE(in_R(pair, 0.2, 0.1, p, pt(0.05, 0.0)));
    CHECK(in_R(pair, 0.2, 0.1, p, pt(0.15, 0.05)));
}

TEST_CASE("set inclusions hold on random samples") {
    const auto pair = LyapunovPair::coordinate_split(3, 2);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int k = 0; k < 2000; ++k) {
        Point p(3), q(3);
        p << u(rng), u(rng), u(rng);
        q << u(rng), u(rng), u(rng);
        const double a = 0.1;
        if (in_T(pair, a, p, q)) CHECK(in_P(pair, a, p, q));
        if (in_Q(pair, a, p, q)) CHECK(in_P(pair, a, p, q));
        if (in_P(pair, a, p, q)) CHECK(in_P(pair, 2 * a, p, q));
        CHECK(in_P(pair, a, p, q) == (std::max(pair.W(q, p), pair.V(q, p)) <= a));
    }
}

TEST_CASE("user-defined pair evaluates expressions over q and p") {
    const auto pair = LyapunovPair::user_defined(2, "abs(q1 - p1)", "(q2 - p2)^2");
    CHECK(pair.W(pt(0.3, 0.5), pt(0.1, 0.2)) == doctest::Approx(0.2));
    CHECK(pair.V(pt(0.3, 0.5), pt(0.1, 0.2)) == doctest::Approx(0.09));
    CHECK(pair.W(pt(0.3, 0.5), pt(0.3, 0.5)) == 0.0);
}

TEST_CASE("C1 recovers the corner distance") {
    const auto pair = LyapunovPair::coordinate_split(2, 1);
    const auto rec = check_C1(pair, model_region(0.01), 0.1);
    CHECK(rec.pass);
    CHECK(rec.values.at("delta0") >= 0.070);
    CHECK(rec.values.at("delta0") <= 0.0708);
    CHECK(rec.values.at("delta0") == doctest::Approx(0.1 / std::sqrt(2.0)).epsilon(1e-14));

    const auto empty = check_C1(pair, model_region(0.01), 0.0);
    CHECK(empty.values.at("delta0") == 0.0);

    // delta0 is monotone in epsilon.
    CHECK(check_C1(pair, model_region(0.01), 0.05).values.at("delta0") <= rec.values.at("delta0"));
}

TEST_CASE("structural certification") {
    const auto region = model_region(0.01);
    const auto rep = certify_C3_C4_C9(LyapunovPair::coordinate_split(2, 1), region);
    CHECK(rep.all_pass());
    CHECK(rep.at("C9").values.at("alpha") == 1.0);
    CHECK(rep.at("C3").status == "certified");

    RegionSpec r3 = region;
    r3.neighborhood = Box::symmetric(3, 0.2);
    CHECK(certify_C3_C4_C9(LyapunovPair::coordinate_split(3, 2), r3).all_pass());

    const auto user = certify_C3_C4_C9(LyapunovPair::user_defined(2, "abs(q1-p1)", "abs(q2-p2)"), region);
    CHECK_FALSE(user.all_pass());
    CHECK(user.at("C4").status == "not-certifiable");
    CHECK(certify_C3_C4_C9(LyapunovPair::coordinate_split(3, 1), r3).at("C3").status == "not-certifiable");
}

TEST_CASE("model map passes C5 to C8 with positive margins") {
    const auto sys = model_map(3, 3);
    const auto pair = LyapunovPair::coordinate_split(2, 1);
    for (double delta : {1e-3, 1e-2}) {
        const auto rep = check_C5_C6_C7_C8(sys, pair, model_region(delta), 2000, 17);
        for (const char* name : {"C5", "C6", "C7", "C8.1", "C8.2"}) {
            INFO(name << " delta=" << delta << " margin=" << rep.at(name).margin);
            CHECK(rep.at(name).pass);
            CHECK(rep.at(name).margin > 0.0);
            CHECK(rep.at(name).values.count("failed_evaluations") == 0);
        }
        CHECK(rep.at("C7.half_delta").values.at("max_V") <= 0.5 * delta + 1e-12);
    }
}

TEST_CASE("identity map fails C8.1 with zero margin") {
    const auto sys = linear_diagonal({1.0, 1.0}, 1);
    const auto rep = check_C5_C6_C7_C8(sys, LyapunovPair::coordinate_split(2, 1), model_region(0.01), 200, 1);
    CHECK_FALSE(rep.at("C8.1").pass);
    CHECK(rep.at("C8.1").margin == 0.0);
}

TEST_CASE("reports are deterministic under any worker count") {
    const auto sys = model_map(3, 3);
    const auto pair = LyapunovPair::coordinate_split(2, 1);
    set_worker_count(1);
    const auto one = check_C5_C6_C7_C8(sys, pair, model_region(0.01), 500, 99).to_json();
    set_worker_count(4);
    const auto four = check_C5_C6_C7_C8(sys, pair, model_region(0.01), 500, 99).to_json();
    set_worker_count(0);
    CHECK(one == four);
    CHECK(check_C5_C6_C7_C8(sys, pair, model_region(0.01), 500, 100).to_json() != one);
}

TEST_CASE("condition G on the model map") {
    const auto sys = model_map(3, 3);
    const auto pair = LyapunovPair::coordinate_split(2, 1);
    const double delta = 0.01;
    const Point p = pt(0.05, -0.03);
    const auto ok = check_condition_G(sys, pair, delta, p, eval_forward(sys, p), 2000);
    CHECK(ok.at("G.image_boundary").pass);
    CHECK(ok.at("G.Q_disjoint").pass);
    CHECK(ok.at("G.retraction").status == "certified");

    // Shifting p' by delta along the unstable axis drops one face of F(Q) into P'.
    const Point shifted = eval_forward(sys, p) + pt(0.0, delta);
    const auto bad = check_condition_G(sys, pair, delta, p, shifted, 2000);
    CHECK_FALSE(bad.at("G.Q_disjoint").pass);
    CHECK(bad.at("G.Q_disjoint").margin < 0.0);

    CHECK_THROWS_AS(check_condition_G(sys, pair, 0.0, p, p, 10), PreconditionError);
}

TEST_CASE("z_form identities") {
    CHECK(z_form(1, 1.0, 0.0) == 3.0);
    CHECK(z_form(1, 1.0, -1.0) == 1.0);
    CHECK(z_form(0, 0.7, 0.3) == 1.0);
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int k = 1; k <= 3; ++k) {
        double worst = 0.0;
        for (int i = 0; i < 10000; ++i) {
            const double z = u(rng);
            const double v = u(rng);
            long double lhs = static_cast<long double>(v) * z_form(k, z, v);
            long double a = 1, b = 1;
            for (int e = 0; e < 2 * k + 1; ++e) {
                a *= static_cast<long double>(z) + v;
                b *= z;
            }
            const long double rhs = a - b;
            if (rhs != 0) worst = std::max(worst, static_cast<double>(std::abs((lhs - rhs) / rhs)));
        }
        CHECK(worst <= 1e-12);
        const auto summary = z_form_summary(k, 100000);
        CHECK(summary.circle_min > 0.0);
        CHECK(summary.bound_worst_margin < 0.0);  // the pointwise lower bound fails for zv < 0
    }
    CHECK(z_form_summary(1, 1000000).circle_min == doctest::Approx((4.0 - std::sqrt(13.0)) / 2.0).epsilon(1e-9));
}

TEST_CASE("smallness of remainders") {
    SmallnessInputs zero;
    zero.X = scalar_field("0");
    zero.Y = scalar_field("0");
    zero.neighborhood = Box::symmetric(2, 0.2);
    const auto rep = check_smallness(zero, 2000, 3);
    CHECK(rep.all_pass());

    SmallnessInputs quartic = zero;
    quartic.X = scalar_field("x1^4");
    const auto q = check_smallness(quartic, 4000, 3);
    CHECK_FALSE(q.at("stable_weighted.X").pass);
    // The weighted bound degenerates near the unstable axis p_s = 0.
    CHECK(std::abs(q.at("stable_weighted.X").witness[0][0]) < quartic.K * quartic.delta1);
    CHECK(q.at("stable_origin.X").pass);
    CHECK(q.at("order.X").values.at("observed_order") == doctest::Approx(4.0).epsilon(1e-9));

    SmallnessInputs forced = quartic;
    forced.epsilon = 0.0;
    const auto f = check_smallness(forced, 500, 3);
    CHECK_FALSE(f.at("lipschitz.X").pass);
    CHECK(f.at("lipschitz.X").margin < 0.0);
}
