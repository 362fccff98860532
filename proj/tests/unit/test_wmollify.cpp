#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mfc/wmollify.hpp"

using namespace mfc;

namespace {

double bump(double rho) { return rho < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - rho * rho)) : 0.0; }

// Composite Simpson on [0, 1].
template <class F>
double simpson(F f, int panels = 20000) {
    const double h = 1.0 / panels;
    double s = f(0.0) + f(1.0);
    for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
    return s * h / 3.0;
}

// Acceptance probability of the rejection sampler: E bump(|U|) for U uniform in the unit ball.
double acceptance_rate(std::size_t d) {
    const double dd = static_cast<double>(d);
    return simpson([&](double r) { return dd * std::pow(r, dd - 1.0) * bump(r); });
}

// E |Y|^2 / eps^2 under the normalized bump.
double second_moment(std::size_t d) {
    const double dd = static_cast<double>(d);
    const double num = simpson([&](double r) { return std::pow(r, dd + 1.0) * bump(r); });
    const double den = simpson([&](double r) { return std::pow(r, dd - 1.0) * bump(r); });
    return num / den;
}

} // namespace

TEST_CASE("functional registry") {
    const auto names = functional_names();
    CHECK(std::ranges::is_sorted(names));
    CHECK(names.size() >= 3);
    for (const auto& name : names) {
        const auto f = registry_functional(name);
        CHECK(functional_from_json(f.to_json()).to_json() == f.to_json());
        CHECK(functional_from_json(nlohmann::json(name)).id == name);
    }
    CHECK_THROWS_AS(functional_from_json(nlohmann::json("nope"), "/f"), ConfigError);
    CHECK_THROWS_AS(functional_from_json({{"expr", "x[1]"}, {"d", 1}}, "/f"), ConfigError);
    CHECK_THROWS_AS(functional_from_json({{"expr", "x[0] +"}}, "/f"), ConfigError);
    CHECK_THROWS_AS(functional_from_json({{"expr", "x[0]"}, {"bogus", 1}}, "/f"), ConfigError);
    SmoothedFunctional sf{registry_functional("mean"), 0};
    CHECK_THROWS(sf.validate());
}

TEST_CASE("bump sampler: support, acceptance rate and second moment") {
    for (std::size_t d : {1, 2, 3}) {
        CounterStream rng(17, d);
        const double eps = 0.25;
        const std::size_t draws = 20000;
        std::size_t proposals = 0;
        double m2 = 0.0, m2sq = 0.0;
        for (std::size_t j = 0; j < draws; ++j) {
            const auto b = sample_bump(eps, d, rng);
            CHECK(b.proposals >= 1);
            proposals += b.proposals;
            double q = 0.0;
            for (double v : b.offset) q += v * v;
            REQUIRE(q < eps * eps);
            q /= eps * eps;
            m2 += q;
            m2sq += q * q;
        }
        const double p = acceptance_rate(d);
        const double rate = static_cast<double>(draws) / static_cast<double>(proposals);
        CHECK(std::abs(rate - p) <= 4.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(proposals)));
        m2 /= draws;
        const double se = std::sqrt((m2sq / draws - m2 * m2) / draws);
        CHECK(std::abs(m2 - second_moment(d)) <= 4.0 * se);
    }
    CounterStream rng(1, 1);
    CHECK_THROWS(sample_bump(0.0, 1, rng));
}

TEST_CASE("smoothed constants are exact and linear functionals are unbiased") {
    const auto mu = EmpiricalMeasure::from_points({{-1.0}, {0.5}, {2.0}});
    const std::vector<double> x{0.3};
    const auto c = smooth_eval({registry_functional("const"), 4, 200, 1}, x, mu);
    CHECK(c.mean == 7.0);
    CHECK(c.std_error == 0.0);
    const auto m = smooth_eval({registry_functional("mean"), 4, 4000, 1}, x, mu);
    CHECK(std::abs(m.mean - 0.5) <= 4.0 * m.std_error);
    const auto s = smooth_eval({registry_functional("state"), 16, 4000, 1}, x, mu);
    CHECK(std::abs(s.mean - 0.3) <= 4.0 * s.std_error);
}

TEST_CASE("mean-squared bias has the closed form") {
    // E[(mean of N draws - offsets)^2] = m1^2 + Var(mu) / N + E|y|^2 / N.
    const auto mu = EmpiricalMeasure::from_points({{-1.0}, {0.5}, {2.0}});
    const std::size_t N = 4;
    const double eps = 0.25;
    const double var = (1.0 + 0.25 + 4.0) / 3.0 - 0.25;
    const double expect = 0.25 + var / N + eps * eps * second_moment(1) / N;
    const std::vector<double> x{0.0};
    const auto est = smooth_eval_raw(registry_functional("mean-squared"), N, eps, 20000, 3, x, mu);
    CHECK(std::abs(est.mean - expect) <= 4.0 * est.std_error);
}

TEST_CASE("replicates are deterministic and independent of workers") {
    const auto base = registry_functional("tanh-mix");
    const auto mu = EmpiricalMeasure::from_points({{-1.0}, {0.5}});
    const std::vector<double> x{0.1};
    const auto a = smooth_replicates(base, 8, 0.125, 300, 5, x, mu, 1);
    const auto b = smooth_replicates(base, 8, 0.125, 300, 5, x, mu, 3);
    const auto c = smooth_replicates(base, 8, 0.125, 300, 6, x, mu, 1);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("evaluations with one seed share offsets") {
    const auto base = registry_functional("mean");
    const std::vector<double> x{0.0};
    std::vector<std::vector<double>> first, second;
    smooth_eval_raw(base, 3, 0.5, 10, 2, x, EmpiricalMeasure::from_points({{1.0}}), 1,
                    [&](std::span<const double> y) { first.emplace_back(y.begin(), y.end()); });
    smooth_eval_raw(base, 3, 0.5, 10, 2, x, EmpiricalMeasure::from_points({{-4.0}, {2.0}}), 1,
                    [&](std::span<const double> y) { second.emplace_back(y.begin(), y.end()); });
    CHECK(first.size() == 10 * 4);
    CHECK(first == second);
}

TEST_CASE("Lipschitz and convexity probes on small inputs") {
    const SmoothedFunctional sf{registry_functional("tanh-mix"), 4, 200, 1};
    const auto pairs = sample_functional_pairs(1, 10, 2.0, 3, 4);
    const auto lip = lipschitz_preservation_probe(sf, pairs);
    CHECK(lip.pass);
    CHECK(lip.threshold == 1.0);

    const auto cases = sample_convexity_cases(1, 10, 2.0, 3, 5);
    const auto lin = convexity_preservation_probe({registry_functional("mean"), 4, 200, 1}, cases);
    CHECK(lin.pass);
    CHECK(lin.extras.at("max_abs_replicate").get<double>() <= 1e-12);
    const auto cvx = convexity_preservation_probe({registry_functional("second-moment"), 4, 200, 1}, cases);
    CHECK(cvx.pass);
    CHECK(cvx.extras.at("min_replicate").get<double>() >= -1e-12);
}

TEST_CASE("uniform convergence for the mean-squared functional") {
    ConvergenceProbeInput in;
    in.base = registry_functional("mean-squared");
    in.test_set = bounded_test_family(1, 5, 2.0, 3, 7);
    in.mc_reps = 500;
    const auto rep = uniform_convergence_probe(in);
    CHECK(rep.pass);
    const auto sups = rep.extras.at("sup_error");
    REQUIRE(sups.size() == 3);
    CHECK(sups[2].get<double>() < sups[0].get<double>());
}
