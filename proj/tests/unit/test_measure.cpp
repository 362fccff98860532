#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mfc/measure.hpp"
#include "mfc/rng.hpp"

using namespace mfc;

namespace {

VectorTuple random_tuple(CounterStream& rng, std::size_t n, std::size_t d, double scale = 2.0) {
    VectorTuple x(n, d);
    for (double& v : x.flat()) v = rng.uniform(-scale, scale);
    return x;
}

// Cost of one explicit coupling, independent of the library's solvers.
double coupling_cost(const VectorTuple& x, const VectorTuple& y, const std::vector<std::size_t>& perm, double r) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.n(); ++i) {
        double q = 0.0;
        for (std::size_t c = 0; c < x.d(); ++c) q += std::pow(x[i][c] - y[perm[i]][c], 2);
        s += std::pow(std::sqrt(q), r);
    }
    return std::pow(s / static_cast<double>(x.n()), 1.0 / r);
}

} // namespace

TEST_CASE("tuples and measures validate their input") {
    CHECK_THROWS_AS(VectorTuple(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(VectorTuple::from_points({{1.0, 2.0}, {3.0}}), ShapeError);
    CHECK_THROWS_AS(EmpiricalMeasure{VectorTuple{}}, ShapeError);
    CHECK_THROWS_AS(EmpiricalMeasure::from_points({{std::nan("")}}), DomainError);
    const auto x = VectorTuple::from_points({{1.0, 2.0}, {3.0, 4.0}});
    CHECK(x.n() == 2);
    CHECK(x[1][0] == 3.0);
    CHECK(x.to_points() == std::vector<std::vector<double>>{{1.0, 2.0}, {3.0, 4.0}});
}

TEST_CASE("measure equality ignores atom order") {
    const auto a = EmpiricalMeasure::from_points({{1.0}, {2.0}, {3.0}});
    const auto b = EmpiricalMeasure::from_points({{3.0}, {1.0}, {2.0}});
    const auto c = EmpiricalMeasure::from_points({{3.0}, {1.0}, {1.0}});
    CHECK(a == b);
    CHECK_FALSE(a == c);
}

TEST_CASE("r-norm closed forms") {
    const auto x = VectorTuple::from_points({{3.0, 4.0}, {0.0, 0.0}});
    CHECK(rnorm(x, 1.0) == doctest::Approx(2.5));
    CHECK(rnorm(x, 2.0) == doctest::Approx(std::sqrt(12.5)));
    CHECK(moment_r(EmpiricalMeasure(x), 2.0) == doctest::Approx(12.5));
    CHECK_THROWS_AS(rnorm(x, 0.5), DomainError);
    CHECK(rdistance(x, x, 1.5) == 0.0);
}

TEST_CASE("assignment solver on a known matrix") {
    // Optimal: 0->1, 1->0, 2->2 with cost 1 + 2 + 2 = 5.
    const std::vector<double> cost{4, 1, 3, 2, 0, 5, 3, 2, 2};
    const auto a = solve_assignment(cost, 3);
    double total = 0;
    for (std::size_t i = 0; i < 3; ++i) total += cost[i * 3 + a[i]];
    CHECK(total == 5.0);
}

TEST_CASE("assignment-based d_r equals the brute force minimum") {
    CounterStream rng(42, 1);
    const double rs[] = {1.0, 1.5, 2.0};
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 1 + rng.index(6), d = 1 + rng.index(3);
        const double r = rs[trial % 3];
        const auto x = random_tuple(rng, n, d), y = random_tuple(rng, n, d);
        const double fast = wasserstein_r(EmpiricalMeasure(x), EmpiricalMeasure(y), r);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        double best = INFINITY;
        do best = std::min(best, coupling_cost(x, y, perm, r));
        while (std::next_permutation(perm.begin(), perm.end()));
        CHECK(std::abs(fast - best) <= 1e-12);
        CHECK(std::abs(brute_force_wasserstein(EmpiricalMeasure(x), EmpiricalMeasure(y), r) - best) <= 1e-12);
    }
}

TEST_CASE("distance to a Dirac at the origin is the r-th moment root") {
    CounterStream rng(7, 2);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 1 + rng.index(7), d = 1 + rng.index(3);
        const double r = 1.0 + rng.uniform();
        const EmpiricalMeasure mu(random_tuple(rng, n, d));
        const std::vector<double> zero(d, 0.0);
        const double dist = wasserstein_r(mu, EmpiricalMeasure::dirac(zero, n), r);
        CHECK(std::abs(dist - std::pow(moment_r(mu, r), 1.0 / r)) <= 1e-12);
    }
}

TEST_CASE("one-dimensional unequal counts match a refined brute force") {
    const auto a = EmpiricalMeasure::from_points({{0.0}, {3.0}});
    const auto b = EmpiricalMeasure::from_points({{1.0}, {-1.0}, {2.5}});
    for (double r : {1.0, 2.0}) {
        const double direct = wasserstein_r(a, b, r);
        const double refined = brute_force_wasserstein(EmpiricalMeasure(duplicate_atoms(a.atoms(), 3)),
                                                       EmpiricalMeasure(duplicate_atoms(b.atoms(), 2)), r);
        CHECK(direct == doctest::Approx(refined).epsilon(1e-12));
    }
    const auto a2 = EmpiricalMeasure::from_points({{0.0, 0.0}});
    const auto b2 = EmpiricalMeasure::from_points({{1.0, 0.0}, {0.0, 1.0}});
    CHECK_THROWS_AS(wasserstein_r(a2, b2, 1.0), ShapeError);
}

TEST_CASE("brute force refuses large problems") {
    const EmpiricalMeasure big(VectorTuple(9, 1, 0.0));
    CHECK_THROWS_AS(brute_force_wasserstein(big, big, 1.0), ShapeError);
}

TEST_CASE("metric properties on random measures") {
    CounterStream rng(3, 3);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 1 + rng.index(5), d = 1 + rng.index(2);
        const double r = 1.0 + rng.uniform();
        const EmpiricalMeasure a(random_tuple(rng, n, d)), b(random_tuple(rng, n, d)), c(random_tuple(rng, n, d));
        const double ab = wasserstein_r(a, b, r), bc = wasserstein_r(b, c, r), ac = wasserstein_r(a, c, r);
        CHECK(ab == doctest::Approx(wasserstein_r(b, a, r)).epsilon(1e-12));
        CHECK(ac <= ab + bc + 1e-12);
        CHECK(wasserstein_r(a, a, r) == doctest::Approx(0.0).epsilon(1e-12));
        // Atom order is irrelevant.
        VectorTuple rev(n, d);
        for (std::size_t i = 0; i < n; ++i) std::copy(a.atom(n - 1 - i).begin(), a.atom(n - 1 - i).end(), rev[i].begin());
        CHECK(wasserstein_r(EmpiricalMeasure(rev), b, r) == doctest::Approx(ab).epsilon(1e-12));
        // The assignment realizes the distance.
        const auto perm = optimal_assignment(a, b, r);
        CHECK(coupling_cost(a.atoms(), b.atoms(), perm, r) == doctest::Approx(ab).epsilon(1e-12));
    }
}

TEST_CASE("duplication preserves the empirical measure") {
    const auto x = VectorTuple::from_points({{1.0}, {2.0}});
    const auto y = duplicate_atoms(x, 3);
    CHECK(y.n() == 6);
    CHECK(y[0][0] == 1.0);
    CHECK(y[2][0] == 1.0);
    CHECK(y[3][0] == 2.0);
    CHECK(wasserstein_r(EmpiricalMeasure(y), EmpiricalMeasure(x), 2.0) == 0.0);
    CHECK(moment_r(EmpiricalMeasure(y), 2.0) == moment_r(EmpiricalMeasure(x), 2.0));
    CHECK_THROWS_AS(duplicate_atoms(x, 0), DomainError);
}
