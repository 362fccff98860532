#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "mfc/expr.hpp"
#include "mfc/rng.hpp"

using namespace mfc;

namespace {

MeasureFeatures features(std::vector<double> m1, double m2) {
    MeasureFeatures f;
    f.m1 = std::move(m1);
    f.m2 = m2;
    return f;
}

double eval(const std::string& src, std::vector<double> x = {0.5, -1.0},
            const MeasureFeatures& f = features({0.25, 2.0}, 3.0)) {
    return CoefficientExpr::parse(src).eval(x, f);
}

// Builds a random expression string with a matching direct evaluation.
struct RandomExpr {
    std::string text;
    double value;
};

RandomExpr random_expr(CounterStream& rng, int depth, const std::vector<double>& x, const MeasureFeatures& f) {
    if (depth == 0 || rng.uniform() < 0.25) {
        switch (rng.index(4)) {
        case 0: {
            const double v = std::round(rng.uniform(0.1, 5.0) * 100.0) / 100.0;
            return {std::to_string(v), std::stod(std::to_string(v))};
        }
        case 1: return {"x[1]", x[1]};
        case 2: return {"m1[0]", f.m1[0]};
        default: return {"m2", f.m2};
        }
    }
    const auto a = random_expr(rng, depth - 1, x, f);
    const auto b = random_expr(rng, depth - 1, x, f);
    switch (rng.index(5)) {
    case 0: return {"(" + a.text + ")+(" + b.text + ")", a.value + b.value};
    case 1: return {"(" + a.text + ")-(" + b.text + ")", a.value - b.value};
    case 2: return {"(" + a.text + ")*(" + b.text + ")", a.value * b.value};
    case 3: return {"tanh(" + a.text + ")", std::tanh(a.value)};
    default: return {"-(" + a.text + ")", -a.value};
    }
}

} // namespace

TEST_CASE("arithmetic and precedence") {
    CHECK(eval("1 + 2 * 3") == 7.0);
    CHECK(eval("(1 + 2) * 3") == 9.0);
    CHECK(eval("2 ^ 3 ^ 2") == 512.0);
    CHECK(eval("-2 ^ 2") == -4.0);
    CHECK(eval("8 / 4 / 2") == 1.0);
    CHECK(eval("10 - 4 - 3") == 3.0);
    CHECK(eval("1.5e1") == 15.0);
}

TEST_CASE("variables and functions") {
    CHECK(eval("x[0] + x[1]") == -0.5);
    CHECK(eval("m1[1] * m2") == 6.0);
    CHECK(eval("exp(0) + log(1) + abs(-2) + sqrt(4)") == 5.0);
    CHECK(eval("sin(0) + cos(0)") == 1.0);
    CHECK(eval("tanh(m1[0])") == doctest::Approx(std::tanh(0.25)));
}

TEST_CASE("measure features of atoms") {
    const auto f = MeasureFeatures::of(VectorTuple::from_points({{1.0, 0.0}, {3.0, 2.0}}));
    CHECK(f.m1 == std::vector<double>{2.0, 1.0});
    CHECK(f.m2 == doctest::Approx((1.0 + 9.0 + 4.0) / 2.0));
}

TEST_CASE("parse errors report offset and expected tokens") {
    try {
        CoefficientExpr::parse("1 + * 2");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 4);
        CHECK_FALSE(e.expected().empty());
    }
    CHECK_THROWS_AS(CoefficientExpr::parse("x[0"), ParseError);
    CHECK_THROWS_AS(CoefficientExpr::parse("foo(1)"), ParseError);
    CHECK_THROWS_AS(CoefficientExpr::parse("1 2"), ParseError);
    CHECK_THROWS_AS(CoefficientExpr::parse(""), ParseError);
    CHECK_THROWS_AS(CoefficientExpr::parse("m1"), ParseError);
}

TEST_CASE("evaluation errors") {
    CHECK_THROWS_AS(eval("x[5]"), EvalError);
    CHECK_THROWS_AS(eval("m1[7]"), EvalError);
    CHECK_THROWS_AS(eval("log(0 - 1)"), EvalError);
    CHECK_THROWS_AS(eval("1 / 0"), EvalError);
}

TEST_CASE("arity and constants") {
    const auto e = CoefficientExpr::parse("x[2] + m1[1] * 3");
    CHECK(e.state_arity() == 3);
    CHECK(e.mean_arity() == 2);
    CHECK_FALSE(e.is_constant());
    CHECK(CoefficientExpr::parse("2 * 3").is_constant());
    CHECK(CoefficientExpr::constant(4.5).eval({}, {}) == 4.5);
    CHECK(CoefficientExpr().eval({}, {}) == 0.0);
}

TEST_CASE("rendering round-trips on random trees") {
    CounterStream rng(11, 0);
    const std::vector<double> x{0.3, -0.7};
    const auto f = features({0.4}, 1.3);
    for (int trial = 0; trial < 300; ++trial) {
        const auto r = random_expr(rng, 5, x, f);
        const auto e = CoefficientExpr::parse(r.text);
        CHECK(e.eval(x, f) == doctest::Approx(r.value).epsilon(1e-12));
        const auto again = CoefficientExpr::parse(e.to_string());
        CHECK(again == e);
        CHECK(again.to_string() == e.to_string());
    }
}

TEST_CASE("rendering uses minimal parentheses") {
    CHECK(CoefficientExpr::parse("((1 + x[0]))").to_string() == "1+x[0]");
    CHECK(CoefficientExpr::parse("(1 - x[0]) - 2").to_string() == "1-x[0]-2");
    CHECK(CoefficientExpr::parse("1 - (x[0] - 2)").to_string() == "1-(x[0]-2)");
    CHECK(CoefficientExpr::parse("(2 ^ 3) ^ 2").to_string() == "(2^3)^2");
}
