#include "mfc/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <initializer_list>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "mfc/rng.hpp"
#include "mfc/wmollify.hpp"

namespace mfc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kKinds{"mollify", "simulate", "solve-hjb", "sweep", "verify"};
const std::vector<std::string> kVerifyProbes{
    "assumption",       "cost_identity",  "duplication_consistency", "feedback_optimality",
    "feedback_roundtrip", "martingale",   "permutation_invariance",  "semiconcavity",
    "stability",        "time_holder"};
const std::vector<std::string> kMollifyProbes{"convexity", "lipschitz", "uniform_convergence"};

/// Typed, pointer-aware access to one JSON object with a closed key set.
class Block {
public:
    Block(const json& doc, std::string pointer, std::initializer_list<const char*> allowed)
        : doc_(doc), pointer_(std::move(pointer)) {
        if (!doc.is_object()) throw ConfigError(pointer_, "expected an object");
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& [key, value] : doc.items()) {
            if (!ok.contains(key)) throw ConfigError(at(key), "unknown key");
        }
    }

    std::string at(const std::string& key) const { return pointer_ + "/" + key; }
    const std::string& pointer() const { return pointer_; }
    bool has(const std::string& key) const { return doc_.contains(key); }
    const json& raw(const std::string& key) const {
        if (!has(key)) throw ConfigError(at(key), "required key missing");
        return doc_.at(key);
    }

    double number(const std::string& key, std::optional<double> fallback = std::nullopt) const {
        if (!has(key)) return fallback ? *fallback : missing<double>(key);
        const json& v = doc_.at(key);
        if (!v.is_number()) throw ConfigError(at(key), "expected a number");
        return v.get<double>();
    }
    std::size_t count(const std::string& key, std::optional<std::size_t> fallback = std::nullopt) const {
        if (!has(key)) return fallback ? *fallback : missing<std::size_t>(key);
        const json& v = doc_.at(key);
        if (!is_json_count(v)) throw ConfigError(at(key), "expected a non-negative integer");
        return v.get<std::size_t>();
    }
    std::uint64_t u64(const std::string& key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        const json& v = doc_.at(key);
        if (!is_json_count(v)) throw ConfigError(at(key), "expected a non-negative integer");
        return v.get<std::uint64_t>();
    }
    std::string text(const std::string& key, std::optional<std::string> fallback = std::nullopt) const {
        if (!has(key)) return fallback ? *fallback : missing<std::string>(key);
        const json& v = doc_.at(key);
        if (!v.is_string()) throw ConfigError(at(key), "expected a string");
        return v.get<std::string>();
    }
    bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const json& v = doc_.at(key);
        if (!v.is_boolean()) throw ConfigError(at(key), "expected true or false");
        return v.get<bool>();
    }
    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
        if (!has(key)) return fallback;
        const json& v = doc_.at(key);
        if (!v.is_array()) throw ConfigError(at(key), "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (!v[j].is_number()) throw ConfigError(at(key) + "/" + std::to_string(j), "expected a number");
            out.push_back(v[j].get<double>());
        }
        return out;
    }
    std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> fallback) const {
        if (!has(key)) return fallback;
        const json& v = doc_.at(key);
        if (!v.is_array()) throw ConfigError(at(key), "expected an array of integers");
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (!is_json_count(v[j])) {
                throw ConfigError(at(key) + "/" + std::to_string(j), "expected a non-negative integer");
            }
            out.push_back(v[j].get<std::size_t>());
        }
        return out;
    }

private:
    template <class T>
    [[noreturn]] T missing(const std::string& key) const {
        throw ConfigError(at(key), "required key missing");
    }

    const json& doc_;
    std::string pointer_;
};

/// [[x_1], [x_2], ...] or, for d = 1, a flat list [x_1, x_2, ...].
VectorTuple parse_tuple(const json& v, std::size_t d, const std::string& pointer) {
    if (!v.is_array() || v.empty()) throw ConfigError(pointer, "expected a non-empty array of points");
    std::vector<double> flat;
    std::size_t n = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string p = pointer + "/" + std::to_string(i);
        if (v[i].is_number()) {
            if (d != 1) throw ConfigError(p, "expected a point (array of " + std::to_string(d) + " numbers)");
            flat.push_back(v[i].get<double>());
        } else if (v[i].is_array()) {
            if (v[i].size() != d) throw ConfigError(p, "expected " + std::to_string(d) + " coordinates");
            for (std::size_t c = 0; c < d; ++c) {
                if (!v[i][c].is_number()) throw ConfigError(p + "/" + std::to_string(c), "expected a number");
                flat.push_back(v[i][c].get<double>());
            }
        } else {
            throw ConfigError(p, "expected a number or a point");
        }
        ++n;
    }
    return VectorTuple(n, d, std::move(flat));
}

std::vector<double> parse_point(const json& v, std::size_t d, const std::string& pointer) {
    if (!v.is_array() || v.size() != d) throw ConfigError(pointer, "expected " + std::to_string(d) + " coordinates");
    std::vector<double> x;
    for (std::size_t c = 0; c < d; ++c) {
        if (!v[c].is_number()) throw ConfigError(pointer + "/" + std::to_string(c), "expected a number");
        x.push_back(v[c].get<double>());
    }
    return x;
}

std::string csv_number(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

json safe_number(double v) {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

// ---------------------------------------------------------------------------
// Execution context and plan

struct Context {
    const ExperimentConfig* cfg = nullptr;
    std::vector<ProbeReport> probes;
    std::vector<std::string> rows;
    json summary = json::object();
    std::vector<ArtifactFile> files;
    std::map<std::string, std::shared_ptr<const GridValueFunction>> grids;

    std::shared_ptr<const GridValueFunction> grid(const ModelSpec& m, std::size_t n, const GridSpec& spec) {
        const std::string key = m.to_json().dump() + "|" + std::to_string(n) + "|" + spec.to_json().dump();
        auto it = grids.find(key);
        if (it == grids.end()) it = grids.emplace(key, std::make_shared<GridValueFunction>(solve_hjb(m, n, spec))).first;
        return it->second;
    }
    void add(ProbeReport r) { probes.push_back(std::move(r)); }
};

using Task = std::function<void(Context&)>;

struct Plan {
    std::string header;
    std::vector<Task> tasks;
};

std::uint64_t derive_seed(std::uint64_t master, std::size_t index) {
    return mix64(master ^ mix64(static_cast<std::uint64_t>(index) + 0x9e3779b97f4a7c15ULL));
}

const ModelSpec& need_model(const ExperimentConfig& cfg, const std::string& pointer) {
    if (!cfg.model) throw ConfigError(pointer, "this experiment needs a model");
    return *cfg.model;
}

GridSpec grid_from(const Block& b, const std::string& key, std::size_t dims) {
    if (!b.has(key)) return GridSpec::uniform(dims, -3.0, 3.0, default_grid_points(dims));
    return GridSpec::from_json(b.raw(key), dims, b.at(key));
}

SimConfig sim_from(const Block& b, std::uint64_t seed, std::size_t jobs, std::size_t steps, std::size_t paths) {
    SimConfig c;
    c.t0 = b.number("t0", 0.0);
    c.T = b.number("T", 1.0);
    c.steps = b.count("steps", steps);
    c.n_paths = b.count("n_paths", paths);
    c.seed = b.u64("seed", seed);
    c.jobs = jobs;
    try {
        c.validate();
    } catch (const DomainError& e) {
        throw ConfigError(b.pointer(), e.what());
    }
    return c;
}

bool is_decoupled_lq(const ModelSpec& m) {
    if (m.d != 1 || m.d_prime != 1 || !m.diffusion[0].is_constant()) return false;
    return m.drift[0] == CoefficientExpr::constant(0.0) && m.running_l1 == CoefficientExpr::constant(0.0) &&
           m.terminal == CoefficientExpr::parse("m2/2");
}

// --- simulate --------------------------------------------------------------

Plan plan_simulate(const ExperimentConfig& cfg, const json& doc) {
    const std::string ptr = "/simulate";
    const Block b(doc, ptr, {"x0", "t0", "T", "steps", "n_paths", "seed", "policy", "lifted", "trajectories", "r"});
    const ModelSpec& model = need_model(cfg, "/model");
    const VectorTuple x0 = parse_tuple(b.raw("x0"), model.d, b.at("x0"));
    const SimConfig sim = sim_from(b, cfg.seed, cfg.jobs, 100, 1000);
    const bool lifted = b.flag("lifted", false);
    const bool dump = b.flag("trajectories", false);
    const double r = b.number("r", 2.0);
    try {
        check_r(r);
    } catch (const DomainError& e) {
        throw ConfigError(b.at("r"), e.what());
    }

    // Policy: "zero" | {"kind": "open-loop", "amplitude", "seed"} | {"kind": "grid-feedback", "grid"}
    std::function<ControlPolicy(Context&)> make_policy = [](Context&) { return ControlPolicy{ZeroControl{}}; };
    if (b.has("policy")) {
        const json& p = b.raw("policy");
        const std::string pp = b.at("policy");
        if (p.is_string()) {
            if (p.get<std::string>() != "zero") throw ConfigError(pp, "unknown policy '" + p.get<std::string>() + "'");
        } else {
            const Block pb(p, pp, {"kind", "amplitude", "seed", "grid"});
            const std::string kind = pb.text("kind");
            if (kind == "zero") {
            } else if (kind == "open-loop") {
                const double amp = pb.number("amplitude", 1.0);
                const std::uint64_t pseed = pb.u64("seed", derive_seed(cfg.seed, 1));
                make_policy = [=](Context&) {
                    return ControlPolicy{random_open_loop(sim.steps, x0.n(), x0.d(), amp, pseed)};
                };
            } else if (kind == "grid-feedback") {
                const GridSpec g = grid_from(pb, "grid", x0.n() * model.d);
                make_policy = [=](Context& ctx) {
                    return ControlPolicy{synthesize_feedback(*ctx.grid(model, x0.n(), g))};
                };
            } else {
                throw ConfigError(pb.at("kind"), "unknown policy kind '" + kind + "'");
            }
        }
    }

    Plan plan;
    plan.header = cost_csv_header();
    plan.tasks.push_back([=](Context& ctx) {
        const ControlPolicy policy = make_policy(ctx);
        const PathBundle bundle = simulate_particles(model, sim, x0, policy);
        const CostEstimate est = cost_of_bundle(model, bundle);
        ctx.rows.push_back(cost_csv_row(model.id, sim, x0, policy_id(policy), est));
        const PathStatistics st = path_statistics(bundle, r);
        json s = {{"policy", policy_id(policy)},
                  {"valid", est.valid},
                  {"mean", safe_number(est.mean)},
                  {"std_error", safe_number(est.std_error)},
                  {"running_l1", safe_number(est.running_l1)},
                  {"running_l2", safe_number(est.running_l2)},
                  {"terminal", safe_number(est.terminal)},
                  {"dead_paths", est.diagnostics},
                  {"sup_norm", st.sup_norm.mean},
                  {"sup_deviation", st.sup_deviation.mean},
                  {"increment_mean", st.increment_mean.mean},
                  {"increment_var_ratio", st.increment_var_ratio.mean}};
        if (lifted) {
            const CostEstimate le = cost_lifted(model, sim, x0, lift_policy(policy));
            ctx.rows.push_back(cost_csv_row(model.id, sim, x0, "lifted:" + policy_id(policy), le));
            s["lifted_mean"] = safe_number(le.mean);
        }
        ctx.summary["simulation"] = s;
        if (dump) {
            std::ostringstream os;
            write_trajectory_csv(bundle, os);
            ctx.files.push_back({"trajectories.csv", os.str()});
        }
    });
    return plan;
}

// --- solve-hjb -------------------------------------------------------------

Plan plan_solve(const ExperimentConfig& cfg, const json& doc) {
    const std::string ptr = "/solve-hjb";
    const Block b(doc, ptr, {"n", "grid", "evaluate", "oracle", "dump_values", "dump_every"});
    const ModelSpec& model = need_model(cfg, "/model");
    const std::size_t n = b.count("n", 1);
    if (n == 0 || n * model.d > 3) throw ConfigError(b.at("n"), "need 1 <= n*d <= 3");
    const GridSpec grid = grid_from(b, "grid", n * model.d);
    const bool dump = b.flag("dump_values", false);
    const std::size_t every = b.count("dump_every", 1);

    struct Eval {
        double t;
        VectorTuple x;
        std::optional<double> expect;
        double tolerance;
    };
    std::vector<Eval> evals;
    if (b.has("evaluate")) {
        const json& arr = b.raw("evaluate");
        if (!arr.is_array()) throw ConfigError(b.at("evaluate"), "expected an array");
        for (std::size_t j = 0; j < arr.size(); ++j) {
            const Block e(arr[j], b.at("evaluate") + "/" + std::to_string(j), {"t", "x", "expect", "tolerance"});
            Eval ev{e.number("t", grid.t0), parse_tuple(e.raw("x"), model.d, e.at("x")), std::nullopt,
                    e.number("tolerance", 1e-3)};
            if (ev.x.n() != n) throw ConfigError(e.at("x"), "expected " + std::to_string(n) + " particles");
            if (e.has("expect")) ev.expect = e.number("expect");
            evals.push_back(std::move(ev));
        }
    }
    std::optional<double> oracle_tol;
    std::size_t oracle_steps = 10000;
    if (b.has("oracle")) {
        const Block o(b.raw("oracle"), b.at("oracle"), {"kind", "tolerance", "steps"});
        if (o.text("kind", "riccati") != "riccati") throw ConfigError(o.at("kind"), "only 'riccati' is available");
        if (!is_decoupled_lq(model)) throw ConfigError(o.pointer(), "the Riccati oracle needs the decoupled LQ model");
        oracle_tol = o.number("tolerance", 1e-3);
        oracle_steps = o.count("steps", 10000);
    }

    Plan plan;
    plan.header = "t,x,value";
    plan.tasks.push_back([=](Context& ctx) {
        const auto u = ctx.grid(model, n, grid);
        json values = json::array();
        for (std::size_t j = 0; j < evals.size(); ++j) {
            const Eval& ev = evals[j];
            const double v = u->value(ev.t, ev.x.flat());
            std::string xs;
            for (std::size_t c = 0; c < ev.x.flat().size(); ++c) xs += (c ? ";" : "") + csv_number(ev.x.flat()[c]);
            ctx.rows.push_back(csv_number(ev.t) + "," + xs + "," + csv_number(v));
            values.push_back({{"t", ev.t}, {"x", ev.x.flat()}, {"value", v}});
            if (ev.expect) {
                ProbeReport rep;
                rep.name = "value_check_" + std::to_string(j);
                rep.samples = 1;
                rep.statistic = std::abs(v - *ev.expect);
                rep.threshold = ev.tolerance;
                rep.extras = {{"value", v}, {"expected", *ev.expect}};
                rep.finalize();
                ctx.add(rep);
            }
        }
        ctx.summary["values"] = values;
        ctx.summary["solver"] = value_function_sidecar(*u);
        if (oracle_tol) {
            const double sigma = model.diffusion[0].eval({}, MeasureFeatures{});
            const RiccatiSolution sol = riccati_lq_solve(sigma, model.kappa, grid.T, grid.t0, oracle_steps);
            double worst = 0.0;
            for (std::size_t q : u->core_nodes()) {
                const auto x = u->coordinates(q);
                double exact = 0.0;
                for (double xi : x) exact += sol.P.front() * xi * xi / 2.0 + sol.r.front();
                exact /= static_cast<double>(n);
                worst = std::max(worst, std::abs(u->values.front()[q] - exact));
            }
            ProbeReport rep;
            rep.name = "riccati_oracle";
            rep.samples = u->core_nodes().size();
            rep.statistic = worst;
            rep.threshold = *oracle_tol;
            rep.provenance = {{"model", model.id}, {"grid", grid.to_json()}};
            rep.finalize();
            ctx.add(rep);
        }
        if (dump) {
            std::ostringstream os;
            write_value_csv(*u, os, every);
            ctx.files.push_back({"values.csv", os.str()});
            ctx.files.push_back({"values.json", value_function_sidecar(*u).dump(2) + "\n"});
        }
    });
    return plan;
}

// --- verify ----------------------------------------------------------------

Task plan_verify_probe(const ExperimentConfig& cfg, const json& doc, const std::string& ptr, std::size_t index) {
    if (!doc.is_object() || !doc.contains("probe") || !doc.at("probe").is_string()) {
        throw ConfigError(ptr + "/probe", "expected a probe name");
    }
    const std::string name = doc.at("probe").get<std::string>();
    const std::uint64_t seed = derive_seed(cfg.seed, index);
    const std::size_t jobs = cfg.jobs;

    if (name == "cost_identity") {
        const Block b(doc, ptr, {"probe", "draws", "steps", "n_paths", "x0", "amplitude", "seed"});
        const std::uint64_t s = b.u64("seed", seed);
        const std::size_t steps = b.count("steps", 20), paths = b.count("n_paths", 8);
        if (b.has("x0")) {
            const ModelSpec& model = need_model(cfg, "/model");
            const VectorTuple x0 = parse_tuple(b.raw("x0"), model.d, b.at("x0"));
            const double amp = b.number("amplitude", 1.0);
            return [=](Context& ctx) {
                SimConfig sim;
                sim.steps = steps;
                sim.n_paths = paths;
                sim.seed = s;
                sim.jobs = jobs;
                ctx.add(cost_identity_check(model, sim, x0, random_open_loop(steps, x0.n(), x0.d(), amp, mix64(s))));
            };
        }
        const std::size_t draws = b.count("draws", 100);
        return [=](Context& ctx) { ctx.add(cost_identity_sweep(draws, s, steps, paths)); };
    }
    if (name == "assumption") {
        const Block b(doc, ptr, {"probe", "samples", "radius", "r", "seed"});
        const ModelSpec& model = need_model(cfg, "/model");
        const std::size_t samples = b.count("samples", 200);
        const double radius = b.number("radius", 1.0), r = b.number("r", 1.0);
        const std::uint64_t s = b.u64("seed", seed);
        return [=](Context& ctx) {
            const AssumptionReport a = assumption_probe(model, samples, radius, s, r);
            ProbeReport rep;
            rep.name = "assumption";
            rep.samples = samples;
            rep.comparator = Comparator::Report;
            rep.threshold = std::numeric_limits<double>::infinity();
            std::size_t flagged = 0;
            for (const auto& e : a.entries) flagged += e.non_lipschitz_global ? 1 : 0;
            rep.statistic = static_cast<double>(flagged);
            rep.extras = a.to_json();
            rep.provenance = {{"model", model.id}, {"seed", s}};
            rep.finalize();
            ctx.add(rep);
        };
    }

    const ModelSpec& model = need_model(cfg, "/model");
    const std::size_t d = model.d;
    if (name == "duplication_consistency") {
        const Block b(doc, ptr, {"probe", "base_n", "m", "base_grid", "dup_grid", "points", "times", "threshold"});
        DuplicationInput in;
        in.model = model;
        in.base_n = b.count("base_n", 1);
        in.m = b.count("m", 2);
        if (in.base_n == 0 || in.m == 0 || in.base_n * in.m * d > 3) throw ConfigError(ptr, "need 1 <= base_n*m*d <= 3");
        in.base_grid = grid_from(b, "base_grid", in.base_n * d);
        in.dup_grid = grid_from(b, "dup_grid", in.base_n * in.m * d);
        in.times = b.numbers("times", {});
        in.threshold = b.number("threshold", 2e-2);
        const json& pts = b.raw("points");
        if (!pts.is_array()) throw ConfigError(b.at("points"), "expected an array of tuples");
        for (std::size_t j = 0; j < pts.size(); ++j) {
            in.points.push_back(parse_tuple(pts[j], d, b.at("points") + "/" + std::to_string(j)));
            if (in.points.back().n() != in.base_n) throw ConfigError(b.at("points") + "/" + std::to_string(j), "wrong particle count");
        }
        return [=](Context& ctx) { ctx.add(duplication_consistency(in)); };
    }
    if (name == "semiconcavity") {
        const Block b(doc, ptr, {"probe", "n", "grid", "source", "t", "pairs", "radius", "min_distance", "lambdas",
                                 "expected", "tolerance", "seed"});
        const std::size_t n = b.count("n", 1);
        const std::string source = b.text("source", "grid");
        if (source != "grid" && source != "riccati") throw ConfigError(b.at("source"), "expected 'grid' or 'riccati'");
        if (source == "riccati" && !is_decoupled_lq(model)) throw ConfigError(b.at("source"), "the Riccati source needs the decoupled LQ model");
        if (source == "grid" && (n == 0 || n * d > 3)) throw ConfigError(b.at("n"), "need 1 <= n*d <= 3");
        const GridSpec grid = grid_from(b, "grid", n * d);
        const double t = b.number("t", grid.t0);
        const std::size_t count = b.count("pairs", 50);
        const double radius = b.number("radius", 1.5), min_dist = b.number("min_distance", 1.0);
        const auto lambdas = b.numbers("lambdas", {0.25, 0.5, 0.75});
        std::optional<double> expected;
        if (b.has("expected")) expected = b.number("expected");
        const double tol = b.number("tolerance", 1e-3);
        const std::uint64_t s = b.u64("seed", seed);
        return [=](Context& ctx) {
            const auto pairs = sample_tuple_pairs(n, d, count, radius, min_dist, s);
            ProbeReport rep;
            if (source == "grid") {
                const auto u = ctx.grid(model, n, grid);
                rep = semiconcavity_probe(grid_value_source(*u, t), pairs, lambdas, expected, tol);
            } else {
                const double sigma = model.diffusion[0].eval({}, MeasureFeatures{});
                rep = semiconcavity_probe(riccati_value_source(sigma, model.kappa, grid.T, t), pairs, lambdas, expected, tol);
            }
            rep.provenance = {{"model", model.id}, {"n", n}, {"source", source}, {"t", t}, {"seed", s}};
            ctx.add(rep);
        };
    }
    if (name == "permutation_invariance" || name == "time_holder") {
        const Block b(doc, ptr, {"probe", "n", "grid", "threshold", "r", "levels", "min_gap_steps"});
        const std::size_t n = b.count("n", name == "time_holder" ? 1 : 2);
        if (n == 0 || n * d > 3) throw ConfigError(b.at("n"), "need 1 <= n*d <= 3");
        const GridSpec grid = grid_from(b, "grid", n * d);
        if (name == "permutation_invariance") {
            const double thr = b.number("threshold", 1e-9);
            return [=](Context& ctx) { ctx.add(permutation_invariance_probe(*ctx.grid(model, n, grid), thr)); };
        }
        const double r = b.number("r", 2.0);
        const std::size_t levels = b.count("levels", 6), min_gap = b.count("min_gap_steps", 4);
        return [=](Context& ctx) { ctx.add(time_holder_probe(*ctx.grid(model, n, grid), r, levels, min_gap)); };
    }
    if (name == "feedback_roundtrip" || name == "feedback_optimality") {
        const Block b(doc, ptr, {"probe", "grid", "x0", "t0", "T", "steps", "n_paths", "seed", "offsets",
                                 "reference", "grid_error"});
        const VectorTuple x0 = parse_tuple(b.raw("x0"), d, b.at("x0"));
        if (x0.n() * d > 3) throw ConfigError(b.at("x0"), "need n*d <= 3 for a grid feedback");
        const GridSpec grid = grid_from(b, "grid", x0.n() * d);
        const SimConfig sim = sim_from(b, seed, jobs, 200, 10000);
        if (name == "feedback_roundtrip") {
            FeedbackRoundtripInput in;
            in.model = model;
            in.cfg = sim;
            in.x0 = x0;
            in.offsets = b.numbers("offsets", in.offsets);
            return [=](Context& ctx) mutable {
                const auto u = ctx.grid(model, x0.n(), grid);
                in.u = u.get();
                ctx.add(feedback_roundtrip(in));
            };
        }
        FeedbackOptimalityInput in;
        in.model = model;
        in.cfg = sim;
        in.x0 = x0;
        in.reference = b.number("reference");
        in.grid_error = b.number("grid_error", 1e-3);
        return [=](Context& ctx) mutable {
            const auto u = ctx.grid(model, x0.n(), grid);
            in.u = u.get();
            ctx.add(feedback_optimality(in));
        };
    }
    if (name == "martingale" || name == "stability") {
        const Block b(doc, ptr, {"probe", "x0", "direction", "deltas", "r", "t0", "T", "steps", "n_paths", "seed",
                                 "max_ratio"});
        const VectorTuple x0 = parse_tuple(b.raw("x0"), d, b.at("x0"));
        const SimConfig sim = sim_from(b, seed, jobs, 100, 2000);
        if (name == "martingale") {
            for (const auto& e : model.drift) {
                if (!e.is_constant() || e.eval({}, {}) != 0.0) throw ConfigError(ptr, "martingale probe needs zero drift");
            }
            return [=](Context& ctx) { ctx.add(martingale_probe(model, sim, x0)); };
        }
        const VectorTuple dir = parse_tuple(b.raw("direction"), d, b.at("direction"));
        if (dir.n() != x0.n()) throw ConfigError(b.at("direction"), "direction must match x0");
        const auto deltas = b.numbers("deltas", {0.1, 0.01});
        const double r = b.number("r", 2.0), max_ratio = b.number("max_ratio", 1.5);
        return [=](Context& ctx) { ctx.add(stability_probe(model, sim, x0, dir, deltas, r, max_ratio)); };
    }
    throw ConfigError(ptr + "/probe", "unknown probe '" + name + "'");
}

Plan plan_verify(const ExperimentConfig& cfg, const json& doc) {
    const Block b(doc, "/verify", {"probes"});
    Plan plan;
    plan.header = "probe,statistic,threshold,pass";
    if (!b.has("probes")) return plan;
    const json& probes = b.raw("probes");
    if (!probes.is_array()) throw ConfigError(b.at("probes"), "expected an array");
    for (std::size_t j = 0; j < probes.size(); ++j) {
        plan.tasks.push_back(plan_verify_probe(cfg, probes[j], b.at("probes") + "/" + std::to_string(j), j));
    }
    return plan;
}

// --- mollify ---------------------------------------------------------------

Plan plan_mollify(const ExperimentConfig& cfg, const json& doc) {
    const Block b(doc, "/mollify", {"functional", "k", "mc_reps", "evaluate", "probes", "seed"});
    const BaseFunctional base = functional_from_json(b.raw("functional"), b.at("functional"));
    const auto ks = b.counts("k", {4, 16, 64});
    for (std::size_t j = 0; j < ks.size(); ++j) {
        if (ks[j] == 0) throw ConfigError(b.at("k") + "/" + std::to_string(j), "k must be >= 1");
    }
    const std::size_t reps = b.count("mc_reps", 1000);
    if (reps == 0) throw ConfigError(b.at("mc_reps"), "mc_reps must be >= 1");
    const std::uint64_t seed = b.u64("seed", cfg.seed);
    const std::size_t jobs = cfg.jobs;

    Plan plan;
    plan.header = "probe,statistic,threshold,pass";
    if (b.has("evaluate")) {
        const json& arr = b.raw("evaluate");
        if (!arr.is_array()) throw ConfigError(b.at("evaluate"), "expected an array");
        std::vector<FunctionalPoint> points;
        for (std::size_t j = 0; j < arr.size(); ++j) {
            const Block e(arr[j], b.at("evaluate") + "/" + std::to_string(j), {"x", "mu"});
            FunctionalPoint p;
            p.x = parse_point(e.raw("x"), base.d, e.at("x"));
            p.mu = EmpiricalMeasure(parse_tuple(e.raw("mu"), base.d, e.at("mu")));
            points.push_back(std::move(p));
        }
        plan.tasks.push_back([=](Context& ctx) {
            json rows = json::array();
            for (std::size_t k : ks) {
                const SmoothedFunctional sf{base, k, reps, seed, jobs};
                for (std::size_t j = 0; j < points.size(); ++j) {
                    const MeanWithError m = smooth_eval(sf, points[j].x, points[j].mu);
                    rows.push_back({{"k", k}, {"point", j}, {"mean", m.mean}, {"std_error", m.std_error},
                                    {"base", base(points[j].x, points[j].mu.atoms())}});
                }
            }
            ctx.summary["evaluations"] = rows;
        });
    }
    if (b.has("probes")) {
        const json& probes = b.raw("probes");
        if (!probes.is_array()) throw ConfigError(b.at("probes"), "expected an array");
        for (std::size_t j = 0; j < probes.size(); ++j) {
            const std::string ptr = b.at("probes") + "/" + std::to_string(j);
            const json& p = probes[j];
            if (!p.is_object() || !p.contains("probe") || !p.at("probe").is_string()) {
                throw ConfigError(ptr + "/probe", "expected a probe name");
            }
            const std::string name = p.at("probe").get<std::string>();
            const Block pb(p, ptr, {"probe", "count", "radius", "atoms", "seed"});
            const std::size_t count = pb.count("count", name == "uniform_convergence" ? 20 : 30);
            const double radius = pb.number("radius", 2.0);
            const std::size_t atoms = pb.count("atoms", 5);
            if (atoms == 0) throw ConfigError(pb.at("atoms"), "atoms must be >= 1");
            const std::uint64_t ps = pb.u64("seed", derive_seed(seed, j));
            if (name == "lipschitz") {
                if (std::isnan(base.lipschitz)) throw ConfigError(ptr, "functional has no declared Lipschitz constant");
                plan.tasks.push_back([=](Context& ctx) {
                    const auto pairs = sample_functional_pairs(base.d, count, radius, atoms, ps);
                    for (std::size_t k : ks) {
                        ProbeReport rep = lipschitz_preservation_probe({base, k, reps, seed, jobs}, pairs);
                        rep.name += "_k" + std::to_string(k);
                        ctx.add(rep);
                    }
                });
            } else if (name == "uniform_convergence") {
                if (ks.size() < 2) throw ConfigError(b.at("k"), "uniform_convergence needs at least two k values");
                plan.tasks.push_back([=](Context& ctx) {
                    ConvergenceProbeInput in;
                    in.base = base;
                    in.k_list = ks;
                    in.test_set = bounded_test_family(base.d, count, radius, atoms, ps);
                    in.mc_reps = reps;
                    in.seed = seed;
                    in.jobs = jobs;
                    ctx.add(uniform_convergence_probe(in));
                });
            } else if (name == "convexity") {
                if (!base.convex_lift) throw ConfigError(ptr, "functional does not declare a convex lift");
                plan.tasks.push_back([=](Context& ctx) {
                    const auto cases = sample_convexity_cases(base.d, count, radius, atoms, ps);
                    for (std::size_t k : ks) {
                        ProbeReport rep = convexity_preservation_probe({base, k, reps, seed, jobs}, cases);
                        rep.name += "_k" + std::to_string(k);
                        ctx.add(rep);
                    }
                });
            } else {
                throw ConfigError(ptr + "/probe", "unknown probe '" + name + "'");
            }
        }
    }
    return plan;
}

// --- sweep -----------------------------------------------------------------

Plan plan_sweep(const ExperimentConfig& cfg, const json& doc) {
    const Block b(doc, "/sweep", {"target", "n", "mode", "tuples", "t", "grid", "sim", "r", "seed", "tolerance"});
    const ModelSpec& model = need_model(cfg, "/model");
    ConvergenceInput in;
    in.model = model;
    in.target = EmpiricalMeasure(parse_tuple(b.raw("target"), model.d, b.at("target")));
    in.n_list = b.counts("n", {});
    if (in.n_list.empty()) throw ConfigError(b.at("n"), "expected a non-empty list");
    const std::string mode = b.text("mode", "grid");
    if (mode == "grid") in.value_mode = ValueMode::Grid;
    else if (mode == "oracle") in.value_mode = ValueMode::Oracle;
    else if (mode == "monte-carlo") in.value_mode = ValueMode::MonteCarlo;
    else throw ConfigError(b.at("mode"), "expected grid, oracle or monte-carlo");
    const std::string tuples = b.text("tuples", "duplicate");
    if (tuples == "duplicate") in.tuple_mode = TupleMode::Duplicate;
    else if (tuples == "sample") in.tuple_mode = TupleMode::Sample;
    else throw ConfigError(b.at("tuples"), "expected duplicate or sample");
    for (std::size_t j = 0; j < in.n_list.size(); ++j) {
        const std::size_t n = in.n_list[j];
        const std::string p = b.at("n") + "/" + std::to_string(j);
        if (n == 0) throw ConfigError(p, "n must be positive");
        if (in.value_mode == ValueMode::Grid && n * model.d > 3) throw ConfigError(p, "grid mode needs n*d <= 3");
        if (in.tuple_mode == TupleMode::Duplicate && n % in.target.n() != 0) {
            throw ConfigError(p, "duplication needs n to be a multiple of the target atom count");
        }
    }
    if (in.value_mode == ValueMode::Oracle && !is_decoupled_lq(model)) {
        throw ConfigError(b.at("mode"), "oracle mode needs the decoupled LQ model");
    }
    in.grid = grid_from(b, "grid", 1);
    in.t = b.number("t", in.grid.t0);
    if (b.has("sim")) {
        const Block s(b.raw("sim"), b.at("sim"), {"T", "steps", "n_paths", "seed"});
        in.sim = sim_from(s, cfg.seed, cfg.jobs, 100, 1000);
    } else {
        in.sim.n_paths = 1000;
        in.sim.seed = cfg.seed;
        in.sim.jobs = cfg.jobs;
    }
    in.r = b.number("r", 2.0);
    in.seed = b.u64("seed", cfg.seed);
    std::optional<double> tolerance;
    if (b.has("tolerance")) tolerance = b.number("tolerance");

    Plan plan;
    plan.header = "n,value,std_error,gap,distance";
    plan.tasks.push_back([=](Context& ctx) {
        const auto rows = convergence_sweep(in);
        double worst = 0.0;
        json arr = json::array();
        for (const auto& r : rows) {
            ctx.rows.push_back(std::to_string(r.n) + "," + csv_number(r.value) + "," + csv_number(r.std_error) + "," +
                               csv_number(r.gap) + "," + csv_number(r.distance));
            arr.push_back({{"n", r.n}, {"value", r.value}, {"std_error", r.std_error}, {"gap", r.gap},
                           {"distance", safe_number(r.distance)}});
            worst = std::max(worst, r.gap);
        }
        ctx.summary["sweep"] = arr;
        if (tolerance) {
            ProbeReport rep;
            rep.name = "sweep_gap";
            rep.samples = rows.size();
            rep.statistic = worst;
            rep.threshold = *tolerance;
            rep.provenance = {{"model", in.model.id}};
            rep.finalize();
            ctx.add(rep);
        }
    });
    return plan;
}

Plan build_plan(const ExperimentConfig& cfg) {
    const json& doc = cfg.document;
    if (!doc.contains(cfg.kind)) {
        if (cfg.kind == "verify") return Plan{"probe,statistic,threshold,pass", {}};
        throw ConfigError("/" + cfg.kind, "parameter block for '" + cfg.kind + "' missing");
    }
    const json& block = doc.at(cfg.kind);
    if (cfg.kind == "simulate") return plan_simulate(cfg, block);
    if (cfg.kind == "solve-hjb") return plan_solve(cfg, block);
    if (cfg.kind == "verify") return plan_verify(cfg, block);
    if (cfg.kind == "mollify") return plan_mollify(cfg, block);
    return plan_sweep(cfg, block);
}

} // namespace

// ---------------------------------------------------------------------------

ExperimentConfig parse_experiment(const json& doc, const fs::path& base_dir) {
    const Block b(doc, "", {"kind", "model", "model_file", "seed", "jobs", "output", "simulate", "solve-hjb",
                            "verify", "mollify", "sweep", "description"});
    ExperimentConfig cfg;
    cfg.kind = b.text("kind");
    if (std::find(kKinds.begin(), kKinds.end(), cfg.kind) == kKinds.end()) {
        throw ConfigError("/kind", "unknown experiment kind '" + cfg.kind + "'");
    }
    for (const auto& k : kKinds) {
        if (k != cfg.kind && doc.contains(k)) throw ConfigError("/" + k, "block does not match kind '" + cfg.kind + "'");
    }
    if (b.has("model") && b.has("model_file")) throw ConfigError("/model_file", "give either model or model_file");
    if (b.has("model")) {
        cfg.model = model_from_json(doc.at("model"), "/model");
    } else if (b.has("model_file")) {
        const fs::path p = fs::absolute(base_dir / b.text("model_file"));
        std::ifstream in(p);
        if (!in) throw ConfigError("/model_file", "cannot read " + p.string());
        json m;
        try {
            m = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError("/model_file", p.string() + ": byte " + std::to_string(e.byte) + ": malformed JSON");
        }
        cfg.model = model_from_json(m, "/model_file");
    }
    cfg.seed = b.u64("seed", 0);
    cfg.jobs = b.count("jobs", 1);
    if (cfg.jobs == 0) throw ConfigError("/jobs", "jobs must be >= 1");
    cfg.output = fs::absolute(base_dir / b.text("output", "results")).lexically_normal();
    cfg.document = doc;
    build_plan(cfg);  // validates every block without running anything
    return cfg;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    const Plan plan = build_plan(cfg);
    Context ctx;
    ctx.cfg = &cfg;
    for (const auto& task : plan.tasks) task(ctx);
    ExperimentResult r;
    if (cfg.kind == "verify" || cfg.kind == "mollify") {
        std::ostringstream os;
        write_probe_csv(ctx.probes, os);
        r.csv = os.str();
    } else {
        r.csv = plan.header + "\n";
        for (const auto& row : ctx.rows) r.csv += row + "\n";
    }
    r.probes = std::move(ctx.probes);
    r.extra_files = std::move(ctx.files);
    r.summary = std::move(ctx.summary);
    for (const auto& p : r.probes) r.pass = r.pass && p.pass;
    r.summary["kind"] = cfg.kind;
    r.summary["model"] = cfg.model ? json(cfg.model->id) : json(nullptr);
    r.summary["seed"] = cfg.seed;
    r.summary["pass"] = r.pass;
    r.summary["probes"] = probes_to_json(r.probes);
    return r;
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << contents;
        if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string config_hash(const json& doc) {
    const std::string s = doc.dump();  // object keys are kept sorted
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_artifacts(const ExperimentConfig& cfg, const ExperimentResult& result) {
    fs::create_directories(cfg.output);
    write_file_atomic(cfg.output / "results.csv", result.csv);
    write_file_atomic(cfg.output / "summary.json", result.summary.dump(2) + "\n");
    json files = json::array({"results.csv", "summary.json"});
    for (const auto& f : result.extra_files) {
        write_file_atomic(cfg.output / f.name, f.contents);
        files.push_back(f.name);
    }
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    const json manifest = {{"config_hash", config_hash(cfg.document)},
                           {"seed", cfg.seed},
                           {"kind", cfg.kind},
                           {"created", stamp},
                           {"files", files},
                           {"versions",
                            {{"mfc", kVersion},
                             {"compiler", __VERSION__},
                             {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                   std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                   std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}}};
    write_file_atomic(cfg.output / "manifest.json", manifest.dump(2) + "\n");
}

ExitCode run_command(const RunOptions& options, std::ostream& out, std::ostream& err) {
    json doc;
    {
        std::ifstream in(options.config, std::ios::binary);
        if (!in) {
            err << "error: cannot read config " << options.config.string() << "\n";
            return ExitCode::ConfigError;
        }
        std::ostringstream buf;
        buf << in.rdbuf();
        try {
            doc = json::parse(buf.str());
        } catch (const json::parse_error& e) {
            err << "error: " << options.config.string() << ": malformed JSON at byte " << e.byte << "\n";
            return ExitCode::ConfigError;
        }
    }
    if (options.seed && doc.is_object()) doc["seed"] = *options.seed;
    if (options.jobs && doc.is_object()) doc["jobs"] = *options.jobs;

    ExperimentConfig cfg;
    try {
        const fs::path base = fs::absolute(options.config).parent_path();
        cfg = parse_experiment(doc, base);
        if (options.out) cfg.output = fs::absolute(*options.out).lexically_normal();
    } catch (const ConfigError& e) {
        err << "config error at " << (e.pointer().empty() ? "/" : e.pointer()) << ": " << e.message() << "\n";
        return ExitCode::ConfigError;
    }

    try {
        const ExperimentResult result = run_experiment(cfg);
        write_artifacts(cfg, result);
        if (options.format == "json") {
            out << result.summary.dump(2) << "\n";
        } else {
            out << result.csv;
        }
        for (const auto& p : result.probes) {
            if (!p.pass) err << "probe failed: " << p.name << " statistic " << p.statistic << " threshold " << p.threshold << "\n";
        }
        return result.pass ? ExitCode::Pass : ExitCode::RuntimeFailure;
    } catch (const std::exception& e) {
        err << "runtime failure: " << e.what() << "\n";
        return ExitCode::RuntimeFailure;
    }
}

json registry_listing() {
    json arr = json::array();
    for (const auto& k : kKinds) arr.push_back({{"category", "kind"}, {"name", k}});
    for (const auto& n : registry_names()) arr.push_back({{"category", "model"}, {"name", n}});
    for (const auto& n : functional_names()) arr.push_back({{"category", "functional"}, {"name", n}});
    for (const auto& n : kVerifyProbes) arr.push_back({{"category", "verify-probe"}, {"name", n}});
    for (const auto& n : kMollifyProbes) arr.push_back({{"category", "mollify-probe"}, {"name", n}});
    return arr;
}

void print_registry(std::ostream& out, bool as_json) {
    const json listing = registry_listing();
    if (as_json) {
        out << listing.dump(2) << "\n";
        return;
    }
    for (const auto& e : listing) out << e.at("category").get<std::string>() << ' ' << e.at("name").get<std::string>() << '\n';
}

} // namespace mfc
