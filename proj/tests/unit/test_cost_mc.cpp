#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mfc/cost_mc.hpp"

using namespace mfc;

TEST_CASE("zero control on the decoupled LQ model") {
    // J = E |x0 + W_T|^2 / 2 = (x0^2 + T) / 2.
    const auto model = registry_model("LQ-decoupled");
    SimConfig cfg;
    cfg.steps = 20;
    cfg.n_paths = 20000;
    const auto est = cost_finite(model, cfg, VectorTuple::from_points({{1.0}}), ZeroControl{});
    CHECK(est.valid);
    CHECK(est.n_paths == 20000);
    CHECK(std::abs(est.mean - 1.0) <= 4.0 * est.std_error);
    CHECK(est.running_l1 == 0.0);
    CHECK(est.running_l2 == 0.0);
    CHECK(est.terminal == est.mean);
}

TEST_CASE("constant control without noise matches the hand computation") {
    // dX = -a ds from x0 = 1 with a = 0.5 and l1 = x: left sums are exact to rounding.
    const auto model = model_from_json({{"b", {"0"}}, {"sigma", {{"0"}}}, {"l1", "x[0]"}, {"kappa", 2.0}, {"UT", "m2/2"}});
    SimConfig cfg;
    cfg.steps = 10;
    OpenLoopSchedule sched;
    for (int k = 0; k < 10; ++k) sched.controls.push_back(VectorTuple(1, 1, 0.5));
    const auto est = cost_finite(model, cfg, VectorTuple::from_points({{1.0}}), sched);
    double l1 = 0.0;
    for (int k = 0; k < 10; ++k) l1 += (1.0 - 0.05 * k) * 0.1;
    CHECK(est.running_l1 == doctest::Approx(l1).epsilon(1e-14));
    CHECK(est.running_l2 == doctest::Approx(0.25).epsilon(1e-14));  // kappa a^2 / 2 * T
    CHECK(est.terminal == doctest::Approx(0.125).epsilon(1e-14));   // (1 - 0.5)^2 / 2
    CHECK(est.mean == doctest::Approx(l1 + 0.375).epsilon(1e-14));
    CHECK(est.std_error == 0.0);
}

TEST_CASE("lifted cost equals the particle cost") {
    const auto model = registry_model("tanh-interaction");
    SimConfig cfg;
    cfg.steps = 25;
    cfg.n_paths = 16;
    cfg.seed = 4;
    const auto x0 = VectorTuple::from_points({{0.3}, {-0.8}, {1.1}});
    OpenLoopSchedule sched;
    for (std::size_t k = 0; k < 25; ++k) {
        VectorTuple a(3, 1);
        for (std::size_t i = 0; i < 3; ++i) a[i][0] = std::sin(static_cast<double>(k + i));
        sched.controls.push_back(a);
    }
    const auto fin = cost_finite(model, cfg, x0, sched);
    const auto lift = cost_lifted(model, cfg, x0, lift_policy(sched));
    CHECK(fin.mean == lift.mean);
    CHECK(fin.per_path == lift.per_path);
}

TEST_CASE("policy comparison uses common noise") {
    const auto model = registry_model("LQ-decoupled");
    SimConfig cfg;
    cfg.steps = 20;
    cfg.n_paths = 4000;
    MarkovFeedback fb;
    fb.id = "half";
    fb.fn = [](double, const VectorTuple& x) {
        VectorTuple a = x;
        for (double& v : a.flat()) v *= 0.5;
        return a;
    };
    const auto cmp = policy_compare(model, cfg, VectorTuple::from_points({{1.0}}), {ZeroControl{}, fb});
    CHECK(cmp.ids == std::vector<std::string>{"zero", "half"});
    CHECK(cmp.ranking.front() == 1);
    const auto& d = cmp.differences[0][1];
    CHECK(d.mean > 5.0 * d.std_error);
    CHECK(cmp.differences[1][1].mean == 0.0);
    const auto direct = paired_difference(cmp.estimates[0], cmp.estimates[1]);
    CHECK(direct.mean == d.mean);
    CHECK_THROWS(policy_compare(model, cfg, VectorTuple(1, 1), {ZeroControl{}}));
}

TEST_CASE("blown-up paths invalidate the estimate") {
    const auto model = model_from_json({{"b", {"x[0]^3"}}, {"sigma", {{"0"}}}, {"kappa", 1.0}, {"UT", "m2/2"}});
    SimConfig cfg;
    cfg.steps = 200;
    const auto est = cost_finite(model, cfg, VectorTuple::from_points({{10.0}}), ZeroControl{});
    CHECK_FALSE(est.valid);
    CHECK_FALSE(est.diagnostics.empty());
}

TEST_CASE("CSV row and tuple hash") {
    const auto x = VectorTuple::from_points({{1.0}});
    CHECK(hash_tuple(x) == hash_tuple(VectorTuple::from_points({{1.0}})));
    CHECK(hash_tuple(x) != hash_tuple(VectorTuple::from_points({{1.5}})));
    const auto header = cost_csv_header();
    CostEstimate est;
    const auto row = cost_csv_row("LQ-decoupled", SimConfig{}, x, "zero", est);
    CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
}
