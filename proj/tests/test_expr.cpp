#include "doctest.h"

#include <cmath>
#include <random>

#include "nonhyp/error.hpp"
#include "nonhyp/expr.hpp"

using namespace nonhyp;
using namespace nonhyp::expr;

namespace {
double eval_at(const Expr& e, std::initializer_list<double> vars) {
    std::vector<double> v(vars);
    return e.eval(v);
}
}  // namespace

TEST_CASE("literals, precedence and associativity") {
    const auto syms = Symbols::coordinates(2);
    CHECK(eval_at(parse("1 + 2*3", syms), {}) == 7.0);
    CHECK(eval_at(parse("2^3^2", syms), {}) == 512.0);
    CHECK(eval_at(parse("-2^2", syms), {}) == -4.0);
    CHECK(eval_at(parse("2^-1", syms), {}) == 0.5);
    CHECK(eval_at(parse("8/4/2", syms), {}) == 1.0);
    CHECK(eval_at(parse("1.5e2 + .5", syms), {}) == 150.5);
    CHECK(eval_at(parse("pow(x1, 2) + abs(x2)", syms), {3.0, -1.0}) == 10.0);
}

TEST_CASE("parameters bind at parse time") {
    const auto syms = Symbols::coordinates(1, {{"m", 3.0}});
    const auto e = parse("x1 - x1^m", syms);
    CHECK(eval_at(e, {0.1}) == doctest::Approx(0.099).epsilon(1e-15));
    CHECK(e.to_string().find('m') != std::string::npos);
}

TEST_CASE("errors carry a position") {
    const auto syms = Symbols::coordinates(1);
    try {
        parse("x1 - x1^m", syms);
        FAIL("expected an error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("unknown identifier m") != std::string::npos);
        CHECK(e.position() == 8);
    }
    CHECK_THROWS_AS(parse("pow(x1)", syms), ParseError);
    CHECK_THROWS_WITH_AS(parse("pow(x1)", syms), doctest::Contains("expects 2 arguments, got 1"), ParseError);
    CHECK_THROWS_AS(parse("sin(x1, x1)", syms), ParseError);
    CHECK_THROWS_AS(parse("1 +", syms), ParseError);
    CHECK_THROWS_AS(parse("(1 + 2", syms), ParseError);
    CHECK_THROWS_AS(parse("1 $ 2", syms), ParseError);
    CHECK_THROWS_AS(parse("foo(1)", syms), ParseError);
    CHECK_THROWS_AS(parse("x2", syms), ParseError);
}

TEST_CASE("print then parse is a fixpoint") {
    const auto syms = Symbols::coordinates(2, {{"a", 0.25}});
    const char* sources[] = {
        "x1 - x1^3 + 0.01*x2^2",
        "-(x1 - x2)^2 / (1 + x1*x1)",
        "a*sin(x1)*cos(x2) - exp(-x1^2)",
        "x1 - (x2 - 1) - -3",
        "(x1^2)^3 + 2^-x2",
        "1/(x1*x2) + sqrt(abs(x1)) + cbrt(x2)",
        "-x1^2 - (-x2)^2",
    };
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    for (const char* src : sources) {
        const auto first = parse(src, syms);
        const auto text = first.to_string();
        const auto second = parse(text, syms);
        CHECK(second.to_string() == text);
        for (int k = 0; k < 50; ++k) {
            const double x1 = u(rng);
            const double x2 = u(rng);
            CHECK(eval_at(first, {x1, x2}) == eval_at(second, {x1, x2}));
        }
    }
}

TEST_CASE("parsed polynomial matches hand-coded arithmetic bit for bit") {
    const auto syms = Symbols::coordinates(2);
    const auto e = parse("x1 - x1^3 + 0.01*x2^2", syms);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int k = 0; k < 1000; ++k) {
        const double x = u(rng);
        const double y = u(rng);
        const double expected = x - x * x * x + 0.01 * (y * y);
        CHECK(eval_at(e, {x, y}) == doctest::Approx(expected).epsilon(1e-15));
    }
}

TEST_CASE("symbolic derivatives agree with central differences") {
    const auto syms = Symbols::coordinates(2);
    const char* sources[] = {"x1 - x1^3 + 0.01*x2^2", "sin(x1*x2) + exp(x2)/x1", "pow(x1, x2) + log(x1)", "sqrt(x1 + x2^2)",
                             "cbrt(x1 + 2) * cos(x2)"};
    const double h = 1e-6;
    for (const char* src : sources) {
        const auto e = parse(src, syms);
        for (int var = 0; var < 2; ++var) {
            const auto d = e.derivative(var, syms);
            double at[2] = {0.7, 0.4};
            double plus[2] = {0.7, 0.4};
            double minus[2] = {0.7, 0.4};
            plus[var] += h;
            minus[var] -= h;
            const double fd = (e.eval(plus) - e.eval(minus)) / (2 * h);
            CHECK(d.eval(at) == doctest::Approx(fd).epsilon(1e-7));
        }
    }
}

TEST_CASE("abs is flagged as non-smooth and differentiates via sign") {
    const auto syms = Symbols::coordinates(1);
    const auto e = parse("abs(x1)", syms);
    CHECK_FALSE(e.is_smooth());
    CHECK(parse("x1^2", syms).is_smooth());
    const auto d = e.derivative(0, syms);
    CHECK(eval_at(d, {-2.0}) == -1.0);
    CHECK(eval_at(d, {3.0}) == 1.0);
}

TEST_CASE("deep expressions fall back to a heap stack") {
    const auto syms = Symbols::coordinates(1);
    std::string src = "x1";
    for (int i = 0; i < 100; ++i) src = "(1 + " + src + ")";
    // Right-nested sums keep every left operand on the stack.
    std::string nested = "x1";
    for (int i = 0; i < 100; ++i) nested = "x1 + (" + nested + ")";
    CHECK(eval_at(parse(src, syms), {0.5}) == 100.5);
    CHECK(eval_at(parse(nested, syms), {1.0}) == 101.0);
}
