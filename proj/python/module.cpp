#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "mfc/cost_mc.hpp"
#include "mfc/experiment.hpp"
#include "mfc/hjb_grid.hpp"
#include "mfc/wmollify.hpp"

namespace py = pybind11;
using namespace mfc;
using nlohmann::json;

namespace {

using Points = std::vector<std::vector<double>>;

SimConfig make_sim(double t0, double T, std::size_t steps, std::size_t n_paths, std::uint64_t seed,
                   std::size_t jobs) {
    SimConfig cfg;
    cfg.t0 = t0;
    cfg.T = T;
    cfg.steps = steps;
    cfg.n_paths = n_paths;
    cfg.seed = seed;
    cfg.jobs = jobs;
    cfg.validate();
    return cfg;
}

ModelSpec parse_model(const std::string& doc) { return model_from_json(json::parse(doc), "/model"); }

py::dict estimate_dict(const CostEstimate& e) {
    py::dict d;
    d["mean"] = e.mean;
    d["std_error"] = e.std_error;
    d["n_paths"] = e.n_paths;
    d["running_l1"] = e.running_l1;
    d["running_l2"] = e.running_l2;
    d["terminal"] = e.terminal;
    d["valid"] = e.valid;
    return d;
}

} // namespace

PYBIND11_MODULE(_mfclab, m) {
    m.doc() = "Finite-particle mean field control toolkit";
    m.attr("__version__") = kVersion;

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ParseError& e) {
            py::set_error(PyExc_ValueError, e.what());
        } catch (const EvalError& e) {
            py::set_error(PyExc_ValueError, e.what());
        } catch (const json::exception& e) {
            py::set_error(PyExc_ValueError, e.what());
        }
    });

    m.def("listing_json", [] { return registry_listing().dump(); });

    m.def("model_json", [](const std::string& doc) { return parse_model(doc).to_json().dump(); },
          py::arg("model"));

    m.def(
        "evaluate_expression",
        [](const std::string& src, const std::vector<double>& x, const Points& atoms) {
            const auto e = CoefficientExpr::parse(src);
            return e.eval(x, MeasureFeatures::of(VectorTuple::from_points(atoms)));
        },
        py::arg("expr"), py::arg("x"), py::arg("atoms"));
    m.def("render_expression", [](const std::string& src) { return CoefficientExpr::parse(src).to_string(); });

    m.def(
        "wasserstein",
        [](const Points& mu, const Points& nu, double r) {
            return wasserstein_r(EmpiricalMeasure::from_points(mu), EmpiricalMeasure::from_points(nu), r);
        },
        py::arg("mu"), py::arg("nu"), py::arg("r") = 1.0);
    m.def(
        "optimal_assignment",
        [](const Points& mu, const Points& nu, double r) {
            return optimal_assignment(EmpiricalMeasure::from_points(mu), EmpiricalMeasure::from_points(nu), r);
        },
        py::arg("mu"), py::arg("nu"), py::arg("r") = 1.0);
    m.def(
        "moment", [](const Points& mu, double r) { return moment_r(EmpiricalMeasure::from_points(mu), r); },
        py::arg("mu"), py::arg("r"));

    m.def(
        "riccati_lq_value",
        [](double sigma, double kappa, double T, double t, const Points& x) {
            return riccati_lq_value(sigma, kappa, T, t, VectorTuple::from_points(x));
        },
        py::arg("sigma"), py::arg("kappa"), py::arg("T"), py::arg("t"), py::arg("x"));

    py::class_<GridValueFunction>(m, "GridValue")
        .def_readonly("n", &GridValueFunction::n)
        .def_readonly("d", &GridValueFunction::d)
        .def_readonly("time_steps", &GridValueFunction::time_steps)
        .def_readonly("dt", &GridValueFunction::dt)
        .def_readonly("times", &GridValueFunction::times)
        .def_property_readonly("grid_json", [](const GridValueFunction& u) { return u.spec.to_json().dump(); })
        .def(
            "value",
            [](const GridValueFunction& u, double t, const Points& x) {
                const auto tuple = VectorTuple::from_points(x);
                if (tuple.n() != u.n || tuple.d() != u.d) throw ShapeError("point shape does not match the grid");
                return u.value(t, tuple.flat());
            },
            py::arg("t"), py::arg("x"))
        .def(
            "slice",
            [](const GridValueFunction& u, std::size_t k) {
                if (k >= u.slice_count()) throw py::index_error("slice out of range");
                std::vector<py::ssize_t> shape;
                for (const auto& a : u.spec.axes) shape.push_back(static_cast<py::ssize_t>(a.points));
                py::array_t<double> out(shape);
                std::copy(u.values[k].begin(), u.values[k].end(), out.mutable_data());
                return out;
            },
            py::arg("index"));

    m.def(
        "solve_hjb",
        [](const std::string& model, std::size_t n, const std::string& grid) {
            const ModelSpec spec = parse_model(model);
            const GridSpec g = GridSpec::from_json(json::parse(grid), n * spec.d, "/grid");
            py::gil_scoped_release release;
            return solve_hjb(spec, n, g);
        },
        py::arg("model"), py::arg("n"), py::arg("grid"));

    m.def(
        "simulate",
        [](const std::string& model, const Points& x0, double t0, double T, std::size_t steps, std::size_t n_paths,
           std::uint64_t seed, std::size_t jobs) {
            const ModelSpec spec = parse_model(model);
            const SimConfig cfg = make_sim(t0, T, steps, n_paths, seed, jobs);
            const auto x = VectorTuple::from_points(x0);
            PathBundle b;
            {
                py::gil_scoped_release release;
                b = simulate_particles(spec, cfg, x, ZeroControl{});
            }
            py::array_t<double> states({static_cast<py::ssize_t>(b.n_paths), static_cast<py::ssize_t>(b.steps + 1),
                                        static_cast<py::ssize_t>(b.n), static_cast<py::ssize_t>(b.d)});
            std::copy(b.states.begin(), b.states.end(), states.mutable_data());
            py::array_t<bool> alive(static_cast<py::ssize_t>(b.n_paths));
            for (std::size_t p = 0; p < b.n_paths; ++p) alive.mutable_data()[p] = b.alive[p] != 0;
            return py::make_tuple(states, alive);
        },
        py::arg("model"), py::arg("x0"), py::arg("t0") = 0.0, py::arg("T") = 1.0, py::arg("steps") = 100,
        py::arg("n_paths") = 1000, py::arg("seed") = 0, py::arg("jobs") = 1);

    m.def(
        "zero_control_cost",
        [](const std::string& model, const Points& x0, double t0, double T, std::size_t steps, std::size_t n_paths,
           std::uint64_t seed, std::size_t jobs) {
            const ModelSpec spec = parse_model(model);
            const SimConfig cfg = make_sim(t0, T, steps, n_paths, seed, jobs);
            CostEstimate e;
            {
                py::gil_scoped_release release;
                e = cost_finite(spec, cfg, VectorTuple::from_points(x0), ZeroControl{});
            }
            return estimate_dict(e);
        },
        py::arg("model"), py::arg("x0"), py::arg("t0") = 0.0, py::arg("T") = 1.0, py::arg("steps") = 100,
        py::arg("n_paths") = 1000, py::arg("seed") = 0, py::arg("jobs") = 1);

    m.def(
        "smooth_eval",
        [](const std::string& functional, std::size_t k, std::size_t mc_reps, std::uint64_t seed,
           const std::vector<double>& x, const Points& mu) {
            SmoothedFunctional sf{functional_from_json(json::parse(functional), "/functional"), k, mc_reps, seed};
            sf.validate();
            const auto est = smooth_eval(sf, x, EmpiricalMeasure::from_points(mu));
            return py::make_tuple(est.mean, est.std_error);
        },
        py::arg("functional"), py::arg("k"), py::arg("mc_reps"), py::arg("seed"), py::arg("x"), py::arg("mu"));

    m.def(
        "run",
        [](const std::string& config, std::optional<std::string> out, std::optional<std::uint64_t> seed,
           std::optional<std::size_t> jobs, const std::string& format) {
            RunOptions opt;
            opt.config = config;
            if (out) opt.out = *out;
            opt.seed = seed;
            opt.jobs = jobs;
            opt.format = format;
            std::ostringstream o, e;
            ExitCode code;
            {
                py::gil_scoped_release release;
                code = run_command(opt, o, e);
            }
            return py::make_tuple(static_cast<int>(code), o.str(), e.str());
        },
        py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none(), py::arg("jobs") = py::none(),
        py::arg("format") = "csv");
}
