#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mfc/model.hpp"
#include "mfc/rng.hpp"

using namespace mfc;
using nlohmann::json;

TEST_CASE("registry is sorted and complete") {
    const auto names = registry_names();
    CHECK(std::ranges::is_sorted(names));
    for (const char* name : {"LQ-decoupled", "LQ-mean-reverting", "linear-terminal", "tanh-interaction"}) {
        CHECK(has_registry_model(name));
        CHECK_NOTHROW(registry_model(name).validate());
    }
    CHECK_THROWS_AS(registry_model("nope"), ConfigError);
}

TEST_CASE("model JSON round trip") {
    for (const auto& name : registry_names()) {
        const auto m = registry_model(name);
        const auto back = model_from_json(m.to_json());
        CHECK(back.to_json() == m.to_json());
    }
    const auto shortcut = model_from_json(json("LQ-decoupled"));
    CHECK(shortcut.id == "LQ-decoupled");
}

TEST_CASE("schema violations carry a pointer") {
    auto pointer_of = [](const json& doc) {
        try {
            model_from_json(doc, "/model");
        } catch (const ConfigError& e) {
            return e.pointer();
        }
        return std::string("no error");
    };
    CHECK(pointer_of({{"registry", "LQ-decoupled"}, {"bogus", 1}}) == "/model/bogus");
    CHECK(pointer_of({{"registry", "LQ-decoupled"}, {"kappa", -1.0}}).starts_with("/model"));
    CHECK(pointer_of({{"registry", "LQ-decoupled"}, {"b", {"x[0] +"}}}) == "/model/b/0");
    CHECK(pointer_of({{"b", {"0"}}, {"sigma", {{"1"}}}, {"kappa", 1.0}}) == "/model/UT");
    CHECK(pointer_of(json::parse(R"({"registry": "LQ-decoupled", "sigma": [["1", "2"]]})")) == "/model/sigma/0");
    CHECK(pointer_of(json(3)) == "/model");
}

TEST_CASE("quadratic cost family") {
    const std::vector<double> a{1.0, -2.0};
    CHECK(l2_cost(a, 2.0) == 5.0);
    CHECK(l2_gradient(a, 2.0) == std::vector<double>{2.0, -4.0});
    CHECK(l2_conjugate(a, 2.0) == 1.25);
    CHECK(feedback_map(a, 2.0) == std::vector<double>{0.5, -1.0});
    // Fenchel identity at the optimizer.
    const auto p = l2_gradient(a, 2.0);
    const double lhs = l2_cost(a, 2.0) + l2_conjugate(p, 2.0);
    CHECK(lhs == doctest::Approx(p[0] * a[0] + p[1] * a[1]));
}

TEST_CASE("Hamiltonian equals the brute force supremum") {
    const auto model = registry_model("tanh-interaction");
    CounterStream rng(5, 5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<double> x{rng.uniform(-2, 2)};
        const auto mu = EmpiricalMeasure::from_points({{rng.uniform(-2, 2)}, {rng.uniform(-2, 2)}});
        const std::vector<double> p{rng.uniform(-3, 3)};
        const auto f = MeasureFeatures::of(mu);
        std::vector<double> b(1);
        model.drift_at(x, f, b);
        // sup_a [ -(b - a) p - l1 - kappa a^2 / 2 ] on a fine grid of a.
        double best = -INFINITY;
        for (int i = -40000; i <= 40000; ++i) {
            const double a = i * 1e-4;
            best = std::max(best, -(b[0] - a) * p[0] - model.l1_at(x, f) - 0.5 * model.kappa * a * a);
        }
        CHECK(hamiltonian(x, mu, p, model) == doctest::Approx(best).epsilon(1e-7));
    }
}

TEST_CASE("lifted coefficients are atomwise") {
    const auto model = registry_model("LQ-mean-reverting");
    const auto atoms = VectorTuple::from_points({{1.0}, {3.0}});
    const auto lc = lifted_coefficients(model, atoms);
    CHECK(lc.drift[0][0] == 1.0);   // -1 + 2
    CHECK(lc.drift[1][0] == -1.0);  // -3 + 2
    CHECK(lc.terminal == 2.5);      // (1 + 9) / 4
    CHECK(lc.running_l1 == 0.0);
    CHECK(lc.diffusion == std::vector<double>{1.0, 1.0});
}

TEST_CASE("assumption probe flags growth") {
    const auto lq = assumption_probe(registry_model("LQ-mean-reverting"), 200, 1.0, 3);
    for (const auto& e : lq.entries) {
        if (e.coefficient == "UT") CHECK(e.non_lipschitz_global);
        else CHECK_FALSE(e.non_lipschitz_global);
    }
    const auto lin = assumption_probe(registry_model("linear-terminal"), 200, 1.0, 3);
    for (const auto& e : lin.entries) {
        CHECK_FALSE(e.non_lipschitz_global);
        if (e.coefficient == "UT") {
            for (double v : e.estimates) CHECK(v <= 1.0 + 1e-12);
        }
    }
    CHECK(lq.to_json().at("entries").size() == 4);
}
