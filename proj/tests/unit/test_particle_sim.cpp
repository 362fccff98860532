#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "mfc/particle_sim.hpp"

using namespace mfc;

namespace {

ModelSpec custom(const std::string& b, const std::string& sigma) {
    return model_from_json({{"b", {b}}, {"sigma", {{sigma}}}, {"kappa", 1.0}, {"UT", "m2/2"}});
}

} // namespace

TEST_CASE("config validation") {
    SimConfig cfg;
    cfg.steps = 0;
    CHECK_THROWS(cfg.validate());
    cfg = SimConfig{};
    cfg.T = cfg.t0;
    CHECK_THROWS(cfg.validate());
    cfg = SimConfig{};
    cfg.n_paths = 0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("Wiener increments are keyed and Gaussian") {
    CHECK(wiener_increment(1, 2, 3, 0, 0.01) == wiener_increment(1, 2, 3, 0, 0.01));
    CHECK(wiener_increment(1, 2, 3, 0, 0.01) != wiener_increment(1, 2, 4, 0, 0.01));
    SimConfig cfg;
    cfg.steps = 50;
    cfg.n_paths = 400;
    cfg.T = 0.5;
    const auto w = wiener_increments(cfg, 1);
    const auto est = mean_and_error(w);
    CHECK(std::abs(est.mean) <= 4.0 * est.std_error);
    double var = 0.0;
    for (double v : w) var += v * v;
    var /= static_cast<double>(w.size());
    // Var of the sample second moment is 2 dt^2 / N.
    CHECK(std::abs(var - cfg.dt()) <= 4.0 * cfg.dt() * std::sqrt(2.0 / static_cast<double>(w.size())));
}

TEST_CASE("particles share the common Wiener increment") {
    const auto model = registry_model("tanh-interaction");
    SimConfig cfg;
    cfg.steps = 10;
    cfg.n_paths = 3;
    std::set<std::tuple<std::size_t, std::size_t, double>> seen;
    std::size_t calls = 0;
    SimHooks hooks;
    hooks.on_increment = [&](std::size_t path, std::size_t step, std::size_t, std::span<const double> dw) {
        ++calls;
        seen.insert({path, step, dw[0]});
    };
    const auto x0 = VectorTuple::from_points({{0.1}, {0.2}, {0.3}, {0.4}});
    simulate_particles(model, cfg, x0, ZeroControl{}, hooks);
    CHECK(calls == 3 * 10 * 4);
    CHECK(seen.size() == 3 * 10);
}

TEST_CASE("deterministic drift reproduces the ODE at first order") {
    // dX = -X ds, zero noise; Euler error at T = 1 is O(dt).
    const auto model = custom("-x[0]", "0");
    const auto x0 = VectorTuple::from_points({{1.0}});
    double prev_err = 0.0;
    for (std::size_t steps : {50, 100, 200, 400}) {
        SimConfig cfg;
        cfg.steps = steps;
        const auto b = simulate_particles(model, cfg, x0, ZeroControl{});
        const double err = std::abs(b.state(0, steps)[0] - std::exp(-1.0));
        CHECK(b.state(0, steps)[0] == doctest::Approx(std::pow(1.0 - cfg.dt(), static_cast<double>(steps))));
        if (prev_err > 0.0) CHECK(prev_err / err == doctest::Approx(2.0).epsilon(0.02));
        prev_err = err;
    }
}

TEST_CASE("controls enter with a minus sign") {
    const auto model = custom("0", "0");
    SimConfig cfg;
    cfg.steps = 4;
    OpenLoopSchedule sched;
    for (std::size_t k = 0; k < 4; ++k) sched.controls.push_back(VectorTuple(2, 1, 0.5));
    const auto b = simulate_particles(model, cfg, VectorTuple(2, 1, 0.0), sched);
    CHECK(b.state(0, 4)[0] == doctest::Approx(-0.5));
    CHECK(b.control(0, 0)[1] == 0.5);
    CHECK(policy_id(sched) == "open-loop");
    CHECK(policy_id(ZeroControl{}) == "zero");
    OpenLoopSchedule short_sched;
    short_sched.controls.push_back(VectorTuple(2, 1, 0.0));
    CHECK_THROWS(simulate_particles(model, cfg, VectorTuple(2, 1, 0.0), short_sched));
}

TEST_CASE("lifted integration equals the particle system") {
    const auto model = registry_model("tanh-interaction");
    SimConfig cfg;
    cfg.steps = 30;
    cfg.n_paths = 5;
    cfg.seed = 9;
    const auto x0 = VectorTuple::from_points({{0.5}, {-1.0}, {2.0}});
    MarkovFeedback fb;
    fb.fn = [](double s, const VectorTuple& x) {
        VectorTuple a = x;
        for (double& v : a.flat()) v = 0.3 * v * s;
        return a;
    };
    const auto p = simulate_particles(model, cfg, x0, fb);
    const auto l = simulate_lifted_atoms(model, cfg, x0, lift_policy(fb));
    CHECK(p.states == l.states);
    CHECK(p.controls == l.controls);
}

TEST_CASE("results do not depend on the number of workers") {
    const auto model = registry_model("LQ-mean-reverting");
    SimConfig cfg;
    cfg.steps = 20;
    cfg.n_paths = 37;
    const auto x0 = VectorTuple::from_points({{0.5}, {-1.0}});
    const auto one = simulate_particles(model, cfg, x0, ZeroControl{});
    cfg.jobs = 4;
    const auto four = simulate_particles(model, cfg, x0, ZeroControl{});
    CHECK(one.states == four.states);
}

TEST_CASE("blow-up marks the path dead with a diagnostic") {
    const auto model = custom("x[0]^3", "0");
    SimConfig cfg;
    cfg.steps = 200;
    cfg.n_paths = 2;
    const auto b = simulate_particles(model, cfg, VectorTuple::from_points({{10.0}}), ZeroControl{});
    CHECK_FALSE(b.all_alive());
    CHECK(b.alive_count() == 0);
    CHECK_FALSE(b.diagnostics[0].empty());
}

TEST_CASE("path statistics: martingale increments") {
    const auto model = registry_model("LQ-decoupled");
    SimConfig cfg;
    cfg.steps = 50;
    cfg.n_paths = 2000;
    const auto b = simulate_particles(model, cfg, VectorTuple::from_points({{0.0}, {1.0}}), ZeroControl{});
    const auto st = path_statistics(b, 2.0);
    CHECK(st.paths_used == 2000);
    CHECK(std::abs(st.increment_mean.mean) <= 4.0 * st.increment_mean.std_error);
    CHECK(std::abs(st.increment_var_ratio.mean - 1.0) <= 4.0 * st.increment_var_ratio.std_error);
    // E M_2 grows like M_2(x0) + s under pure common noise.
    CHECK(st.moment_trajectory.front() == doctest::Approx(0.5));
    CHECK(st.moment_trajectory.back() == doctest::Approx(1.5).epsilon(0.1));
    const auto w = sup_deviation_window(b, 2.0, 0);
    CHECK(w.mean == 0.0);
    CHECK(paired_sup_difference(b, b, 2.0).mean == 0.0);
}

TEST_CASE("trajectory CSV") {
    const auto model = registry_model("LQ-decoupled");
    SimConfig cfg;
    cfg.steps = 2;
    const auto b = simulate_particles(model, cfg, VectorTuple(2, 1, 0.0), ZeroControl{});
    std::ostringstream os;
    write_trajectory_csv(b, os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "path,step,particle,coord,value");
    std::size_t rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 3 * 2);
}
