#include "doctest.h"

#include <random>

#include "nonhyp/map_system.hpp"

using namespace nonhyp;

namespace {
Point pt(double a, double b) {
    Point p(2);
    p << a, b;
    return p;
}
}  // namespace

TEST_CASE("parse_map examples") {
    const auto model = parse_map("x1 - x1^3, x2 + x2^3");
    CHECK(model.dimension == 2);
    CHECK(model.stable_split == 1);

    const auto id = parse_map("x1");
    Point x(1);
    x << 0.37;
    CHECK(eval_forward(id, x)[0] == 0.37);

    CHECK_THROWS_WITH_AS(parse_map("x1 - x1^m"), doctest::Contains("unknown identifier m"), ParseError);
    CHECK_THROWS_AS(parse_map("x1, x2, x3, x4, x1"), PreconditionError);
    CHECK_THROWS_AS(parse_map("x1 + x3, x2"), ParseError);
}

TEST_CASE("eval_forward examples") {
    const auto model = model_map(3, 3);
    const Point a = eval_forward(model, pt(0.1, 0.1));
    CHECK(a[0] == doctest::Approx(0.099).epsilon(1e-15));
    CHECK(a[1] == doctest::Approx(0.101).epsilon(1e-15));
    CHECK(eval_forward(model, pt(0, 0)).norm() == 0.0);
    const auto lin = linear_diagonal({0.5, 2.0}, 1);
    CHECK((eval_forward(lin, pt(1, 1)) - pt(0.5, 2)).norm() == 0.0);

    const auto blowup = parse_map("1/x1, x2");
    CHECK_THROWS_AS(eval_forward(blowup, pt(0, 1)), DomainError);
}

TEST_CASE("eval_jacobian examples") {
    const auto model = model_map(3, 3);
    CHECK((eval_jacobian(model, pt(0, 0)) - Matrix::Identity(2, 2)).norm() == 0.0);
    Matrix expected = Matrix::Zero(2, 2);
    expected(0, 0) = 0.97;
    expected(1, 1) = 1.0;
    CHECK((eval_jacobian(model, pt(0.1, 0)) - expected).norm() < 1e-15);

    const auto f = parse_map("x1 - x1^3 + 0.01*x2^2, x2 + x2^3");
    const Point p = pt(0.05, 0.07);
    const double gap = (eval_jacobian(f, p) - eval_jacobian_fd(f, p)).cwiseAbs().maxCoeff();
    CHECK(gap <= 1e-8);
}

TEST_CASE("finite differences converge at second order") {
    const auto f = parse_map("sin(x1)*x2^3, exp(x1 - x2)");
    const Point p = pt(0.3, 0.4);
    const Matrix exact = eval_jacobian(f, p);
    CHECK((exact - eval_jacobian_fd(f, p)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("eval_inverse examples") {
    const auto id = linear_diagonal({1.0, 1.0}, 1);
    CHECK((eval_inverse(id, pt(0.3, -0.2)) - pt(0.3, -0.2)).norm() == 0.0);
    const auto lin = linear_diagonal({0.5, 2.0}, 1);
    CHECK((eval_inverse(lin, pt(0.5, 2)) - pt(1, 1)).norm() == 0.0);

    const auto model = model_map(3, 3);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    double worst = 0.0;
    double worst_back = 0.0;
    for (int k = 0; k < 100; ++k) {
        const Point p = pt(u(rng), u(rng));
        const Point q = eval_inverse(model, p);
        worst = std::max(worst, (eval_forward(model, q) - p).norm());
        worst_back = std::max(worst_back, (eval_inverse(model, eval_forward(model, p)) - p).norm());
    }
    CHECK(worst <= 1e-11);
    CHECK(worst_back <= 1e-11);
}

TEST_CASE("Newton inversion reports non-convergence") {
    // x1^2 + 1 never reaches 0.
    const auto f = parse_map("x1^2 + 1");
    Point target(1);
    target << 0.0;
    Point guess(1);
    guess << 0.5;
    CHECK_THROWS_AS(eval_inverse(f, target, guess), Error);
}

TEST_CASE("c1_distance examples and pseudometric properties") {
    const auto model = model_map(3, 3);
    const Box box = Box::symmetric(2, 0.2);
    CHECK(c1_distance(model, model, box, 9) == 0.0);

    const auto shifted = model_map(3, 3, "0.001", "");
    CHECK(c1_distance(model, shifted, box, 9) == doctest::Approx(0.001).epsilon(1e-12));

    const auto f = parse_map("x1");
    const auto g = parse_map("x1 + 0.01*x1^2");
    Box unit(Vector::Constant(1, -1.0), Vector::Constant(1, 1.0));
    CHECK(c1_distance(f, g, unit, 11) == doctest::Approx(0.03).epsilon(1e-14));

    const auto h = parse_map("x1 - 0.02*x1^3");
    const double fg = c1_distance(f, g, unit, 21);
    const double gf = c1_distance(g, f, unit, 21);
    const double gh = c1_distance(g, h, unit, 21);
    const double fh = c1_distance(f, h, unit, 21);
    CHECK(fg == gf);
    CHECK(fh <= fg + gh + 1e-15);
    CHECK(fg <= fh + gh + 1e-15);

    CHECK_THROWS_AS(c1_distance(f, model, box, 5), PreconditionError);
    CHECK_THROWS_AS(c1_distance(model, model, box, 1), PreconditionError);
}

TEST_CASE("map files round trip") {
    const std::string text =
        "# model example\n"
        "dimension: 2\n"
        "forward: x1 - x1^m, x2 + x2^n\n"
        "params: m=3, n=3\n"
        "stable_split: 1\n"
        "domain: [-0.2,0.2] x [-0.2,0.2]\n";
    const auto sys = parse_map_file(text);
    CHECK(sys.dimension == 2);
    CHECK(sys.stable_split == 1);
    REQUIRE(sys.domain);
    CHECK(sys.domain->upper[1] == 0.2);
    const auto again = parse_map_file(format_map_file(sys));
    CHECK(again.forward_source() == sys.forward_source());
    CHECK((eval_forward(again, pt(0.1, 0.1)) - eval_forward(sys, pt(0.1, 0.1))).norm() == 0.0);

    const auto builtin = parse_map_file("forward: builtin model\nparams: m=5\n");
    CHECK(eval_forward(builtin, pt(0.5, 0))[0] == doctest::Approx(0.5 - 0.03125));

    CHECK_THROWS_AS(parse_map_file("forward: x1\ncolour: red\n"), ParseError);
    CHECK_THROWS_AS(parse_map_file("dimension: 3\nforward: x1, x2\n"), ParseError);
    CHECK_THROWS_AS(parse_map_file("params: m=3\n"), ParseError);
    CHECK_THROWS_AS(parse_box("[0,1] x [2"), ParseError);
    CHECK_THROWS_AS(parse_box("[1,0]"), PreconditionError);
}
