#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mfc/hjb_grid.hpp"

using namespace mfc;

namespace {

double lq_closed_form(double t, double x) {
    const double tau = 1.0 - t;
    return x * x / (2.0 * (1.0 + tau)) + 0.5 * std::log(1.0 + tau);
}

} // namespace

TEST_CASE("grid spec validation and JSON") {
    auto g = GridSpec::uniform(2, -2.0, 2.0, 41);
    CHECK_NOTHROW(g.validate(2));
    CHECK_THROWS(g.validate(1));
    const auto back = GridSpec::from_json(g.to_json(), 2);
    CHECK(back.to_json() == g.to_json());
    g.axes[0].points = 3;
    CHECK_THROWS(g.validate(2));
    CHECK_THROWS_AS(GridSpec::from_json({{"points", 41}, {"margin", 0.7}}, 1, "/grid"), ConfigError);
    CHECK_THROWS_AS(GridSpec::from_json({{"pointz", 41}}, 1, "/grid"), ConfigError);
}

TEST_CASE("Riccati integration matches the closed form") {
    for (double t : {0.0, 0.3, 0.9}) {
        const auto x = VectorTuple::from_points({{1.0}, {-0.5}});
        const double expect = 0.5 * (lq_closed_form(t, 1.0) + lq_closed_form(t, -0.5));
        CHECK(std::abs(riccati_lq_value(1.0, 1.0, 1.0, t, x) - expect) <= 1e-8);
    }
    const auto sol = riccati_lq_solve(1.0, 1.0, 1.0, 0.0, 100);
    CHECK(sol.times.back() == 1.0);
    CHECK(sol.P.back() == 1.0);
    CHECK(sol.P.front() == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("one-particle LQ solve matches the closed form on the core") {
    const auto model = registry_model("LQ-decoupled");
    const auto grid = GridSpec::uniform(1, -3.0, 3.0, 121);
    const auto u = solve_hjb(model, 1, grid);
    CHECK(u.times.back() == 1.0);
    CHECK(u.times.front() == 0.0);
    double err = 0.0;
    for (std::size_t node : u.core_nodes()) {
        const double x = u.coordinates(node)[0];
        err = std::max(err, std::abs(u.values.front()[node] - lq_closed_form(0.0, x)));
    }
    CHECK(err <= 2e-3);
    const std::vector<double> x{0.7};
    CHECK(u.value(1.0, x) == doctest::Approx(0.245).epsilon(1e-12));
}

TEST_CASE("linear terminal cost is solved exactly") {
    // u = m1 - (T - t) / (2 kappa): all second differences vanish.
    const auto model = registry_model("linear-terminal");
    const auto grid = GridSpec::uniform(2, -2.0, 2.0, 41);
    const auto u = solve_hjb(model, 2, grid);
    for (std::size_t node = 0; node < u.node_count(); ++node) {
        const auto x = u.coordinates(node);
        CHECK(u.values.front()[node] == doctest::Approx(0.5 * (x[0] + x[1]) - 0.5).epsilon(1e-10));
    }
    const auto grad = grid_gradient(u, 0);
    CHECK(grad.size() == 2);
    for (const auto& axis : grad) {
        for (double g : axis) CHECK(g == doctest::Approx(0.5).epsilon(1e-10));
    }
    const auto fb = synthesize_feedback(u);
    const auto a = fb.fn(0.2, VectorTuple::from_points({{0.3}, {-0.4}}));
    CHECK(a[0][0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(a[1][0] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("solutions are symmetric under particle exchange") {
    const auto model = registry_model("LQ-mean-reverting");
    const auto u = solve_hjb(model, 2, GridSpec::uniform(2, -2.0, 2.0, 31));
    for (std::size_t node = 0; node < u.node_count(); ++node) {
        auto idx = u.multi_index(node);
        std::swap(idx[0], idx[1]);
        CHECK(std::abs(u.values.front()[node] - u.values.front()[u.flat_index(idx)]) <= 1e-12);
    }
}

TEST_CASE("CFL and shape guards") {
    const auto model = registry_model("LQ-decoupled");
    auto grid = GridSpec::uniform(1, -3.0, 3.0, 121);
    const double dt = cfl_time_step(model, 1, grid);
    CHECK(dt > 0.0);
    grid.time_steps = static_cast<std::size_t>(0.5 / dt);
    CHECK_THROWS_AS(solve_hjb(model, 1, grid), CflError);
    CHECK_THROWS_AS(solve_hjb(model, 4, GridSpec::uniform(4, -1.0, 1.0, 9)), ShapeError);
}

TEST_CASE("stored slices respect the memory cap") {
    const auto model = registry_model("LQ-decoupled");
    auto grid = GridSpec::uniform(1, -3.0, 3.0, 61);
    grid.max_stored_values = 61 * 10;
    const auto u = solve_hjb(model, 1, grid);
    CHECK(u.slice_count() <= 12);
    CHECK(u.times.back() == 1.0);
    CHECK(u.save_every > 1);
}

TEST_CASE("interpolation is exact at nodes and clamps outside") {
    const auto model = registry_model("LQ-decoupled");
    const auto u = solve_hjb(model, 1, GridSpec::uniform(1, -3.0, 3.0, 61));
    const std::size_t last = u.slice_count() - 1;
    for (std::size_t node = 0; node < u.node_count(); node += 7) {
        const auto x = u.coordinates(node);
        CHECK(u.interpolate(last, x) == u.values[last][node]);
    }
    const std::vector<double> far{10.0}, edge{3.0};
    CHECK(u.interpolate(last, far) == u.interpolate(last, edge));
}

TEST_CASE("value CSV and sidecar") {
    const auto model = registry_model("LQ-decoupled");
    const auto u = solve_hjb(model, 1, GridSpec::uniform(1, -3.0, 3.0, 21));
    std::ostringstream os;
    write_value_csv(u, os, 1000000);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "slice,node,value");
    std::size_t rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows % 21 == 0);
    CHECK(rows >= 21);
    const auto side = value_function_sidecar(u);
    CHECK(side.contains("grid"));
}
