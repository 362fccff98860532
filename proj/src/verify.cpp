#include "mfc/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "mfc/rng.hpp"

namespace mfc {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// JSON has no infinity; non-finite statistics are written as strings.
json number_or_string(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

double number_from(const json& v) {
    if (v.is_number()) return v.get<double>();
    const std::string s = v.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    return std::numeric_limits<double>::quiet_NaN();
}

} // namespace

bool ProbeReport::decide(double statistic, double threshold, Comparator cmp) {
    switch (cmp) {
        case Comparator::LessEqual: return statistic <= threshold;
        case Comparator::GreaterEqual: return statistic >= threshold;
        case Comparator::Report: return true;
    }
    return false;
}

std::string comparator_name(Comparator c) {
    switch (c) {
        case Comparator::LessEqual: return "<=";
        case Comparator::GreaterEqual: return ">=";
        case Comparator::Report: return "report";
    }
    return "?";
}

json ProbeReport::to_json() const {
    return {{"probe", name},
            {"samples", samples},
            {"statistic", number_or_string(statistic)},
            {"threshold", number_or_string(threshold)},
            {"comparator", comparator_name(comparator)},
            {"pass", pass},
            {"provenance", provenance},
            {"extras", extras}};
}

ProbeReport ProbeReport::from_json(const json& doc) {
    ProbeReport r;
    r.name = doc.at("probe").get<std::string>();
    r.samples = doc.at("samples").get<std::size_t>();
    r.statistic = number_from(doc.at("statistic"));
    r.threshold = number_from(doc.at("threshold"));
    const std::string c = doc.at("comparator").get<std::string>();
    if (c == "<=") r.comparator = Comparator::LessEqual;
    else if (c == ">=") r.comparator = Comparator::GreaterEqual;
    else if (c == "report") r.comparator = Comparator::Report;
    else throw ConfigError("/comparator", "unknown comparator '" + c + "'");
    r.provenance = doc.value("provenance", json::object());
    r.extras = doc.value("extras", json::object());
    r.finalize();
    return r;
}

void write_probe_csv(const std::vector<ProbeReport>& reports, std::ostream& out) {
    out << "probe,statistic,threshold,pass\n";
    out.precision(17);
    for (const auto& r : reports) {
        out << r.name << ',' << r.statistic << ',' << r.threshold << ',' << (r.pass ? "true" : "false") << '\n';
    }
}

json probes_to_json(const std::vector<ProbeReport>& reports) {
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(r.to_json());
    return arr;
}

ValueSource grid_value_source(const GridValueFunction& u, double t) {
    const std::size_t slice = u.nearest_slice(t);
    const GridValueFunction* grid = &u;
    return [grid, slice](const VectorTuple& x) { return grid->interpolate(slice, x.flat()); };
}

ValueSource riccati_value_source(double sigma, double kappa, double T, double t) {
    return [=](const VectorTuple& x) { return riccati_lq_value(sigma, kappa, T, t, x); };
}

// ---------------------------------------------------------------------------

ProbeReport duplication_consistency(const DuplicationInput& in) {
    const std::size_t d = in.model.d;
    if (in.m == 0 || in.base_n == 0) throw DomainError("duplication_consistency: n and m must be positive");
    if (in.base_n * in.m * d > 3) {
        throw ShapeError("duplication_consistency: base_n * m * d = " +
                         std::to_string(in.base_n * in.m * d) + " exceeds 3");
    }
    const GridValueFunction base = solve_hjb(in.model, in.base_n, in.base_grid);
    const GridValueFunction dup = solve_hjb(in.model, in.base_n * in.m, in.dup_grid);
    std::vector<double> times = in.times;
    if (times.empty()) times = {in.base_grid.t0, in.base_grid.T};

    ProbeReport rep;
    rep.name = "duplication_consistency";
    rep.threshold = in.threshold;
    double worst = 0.0, terminal = 0.0;
    json rows = json::array();
    for (const auto& x : in.points) {
        if (x.n() != in.base_n || x.d() != d) throw ShapeError("duplication_consistency: test point shape");
        const VectorTuple xd = duplicate_atoms(x, in.m);
        for (double t : times) {
            const std::size_t sb = base.nearest_slice(t), sd = dup.nearest_slice(t);
            const double ub = base.interpolate(sb, x.flat());
            const double ud = dup.interpolate(sd, xd.flat());
            const double gap = std::abs(ud - ub);
            worst = std::max(worst, gap);
            if (sb + 1 == base.slice_count() && sd + 1 == dup.slice_count()) terminal = std::max(terminal, gap);
            rows.push_back({{"x", x.flat()}, {"t", t}, {"u_n", ub}, {"u_mn", ud}, {"gap", gap}});
            ++rep.samples;
        }
    }
    rep.statistic = worst;
    rep.extras = {{"terminal_residual", terminal}, {"rows", rows}};
    rep.provenance = {{"model", in.model.id},
                      {"base_n", in.base_n},
                      {"m", in.m},
                      {"base_grid", in.base_grid.to_json()},
                      {"dup_grid", in.dup_grid.to_json()}};
    rep.finalize();
    return rep;
}

OpenLoopSchedule random_open_loop(std::size_t steps, std::size_t n, std::size_t d, double amplitude,
                                  std::uint64_t seed) {
    CounterStream rng(seed, 0x6f70656eULL);
    OpenLoopSchedule s;
    s.controls.reserve(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        VectorTuple a(n, d);
        for (double& v : a.flat()) v = rng.uniform(-amplitude, amplitude);
        s.controls.push_back(std::move(a));
    }
    return s;
}

namespace {

double relative_gap(double a, double b) {
    if (std::isnan(a) && std::isnan(b)) return 0.0;
    return std::abs(a - b) / std::max(1.0, std::abs(a));
}

double identity_gap(const CostEstimate& f, const CostEstimate& l) {
    if (f.valid != l.valid || f.per_path.size() != l.per_path.size()) return kInf;
    double g = std::max({relative_gap(f.mean, l.mean), relative_gap(f.running_l1, l.running_l1),
                         relative_gap(f.running_l2, l.running_l2), relative_gap(f.terminal, l.terminal)});
    for (std::size_t p = 0; p < f.per_path.size(); ++p) g = std::max(g, relative_gap(f.per_path[p], l.per_path[p]));
    return g;
}

} // namespace

ProbeReport cost_identity_check(const ModelSpec& model, const SimConfig& cfg, const VectorTuple& x0,
                                const OpenLoopSchedule& policy) {
    const CostEstimate finite = cost_finite(model, cfg, x0, policy);
    const CostEstimate lifted = cost_lifted(model, cfg, x0, lift_policy(policy));
    ProbeReport rep;
    rep.name = "cost_identity";
    rep.samples = cfg.n_paths;
    rep.threshold = 1e-12;
    rep.statistic = identity_gap(finite, lifted);
    rep.extras = {{"finite", number_or_string(finite.mean)}, {"lifted", number_or_string(lifted.mean)}};
    rep.provenance = {{"model", model.id}, {"seed", cfg.seed}, {"n", x0.n()}};
    rep.finalize();
    return rep;
}

ProbeReport cost_identity_sweep(std::size_t draws, std::uint64_t seed, std::size_t steps,
                                std::size_t n_paths) {
    const auto names = registry_names();
    ProbeReport rep;
    rep.name = "cost_identity_sweep";
    rep.threshold = 1e-12;
    double worst = 0.0;
    json rows = json::array();
    for (std::size_t j = 0; j < draws; ++j) {
        CounterStream rng(seed, 0x73776565ULL, j);
        const ModelSpec model = registry_model(names[rng.index(names.size())]);
        const std::size_t n = 1 + rng.index(4);
        VectorTuple x0(n, model.d);
        for (double& v : x0.flat()) v = rng.uniform(-2.0, 2.0);
        SimConfig cfg;
        cfg.steps = steps;
        cfg.n_paths = n_paths;
        cfg.seed = rng.next_bits();
        const auto policy = random_open_loop(steps, n, model.d, 1.0, rng.next_bits());
        const ProbeReport one = cost_identity_check(model, cfg, x0, policy);
        worst = std::max(worst, one.statistic);
        rows.push_back({{"model", model.id}, {"n", n}, {"seed", cfg.seed}, {"gap", one.statistic}});
        ++rep.samples;
    }
    rep.statistic = worst;
    rep.extras = {{"draws", rows}};
    rep.provenance = {{"seed", seed}, {"steps", steps}, {"n_paths", n_paths}};
    rep.finalize();
    return rep;
}

namespace {

MarkovFeedback offset_policy(const MarkovFeedback& base, std::size_t axis, double offset) {
    MarkovFeedback p;
    p.id = base.id + "+e" + std::to_string(axis) + "*" + std::to_string(offset);
    p.fn = [fn = base.fn, axis, offset](double s, const VectorTuple& x) {
        VectorTuple a = fn(s, x);
        a.flat().at(axis) += offset;
        return a;
    };
    return p;
}

double max_abs_difference(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return kInf;
    double worst = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (std::isnan(a[j]) && std::isnan(b[j])) continue;
        worst = std::max(worst, std::abs(a[j] - b[j]));
    }
    return worst;
}

} // namespace

ProbeReport feedback_roundtrip(const FeedbackRoundtripInput& in) {
    if (in.u == nullptr) throw DomainError("feedback_roundtrip: no value function");
    const MarkovFeedback fb = synthesize_feedback(*in.u);
    const PathBundle finite = simulate_particles(in.model, in.cfg, in.x0, fb);
    const PathBundle lifted = simulate_lifted_atoms(in.model, in.cfg, in.x0, lift_policy(fb));
    const double state_gap = std::max(max_abs_difference(finite.states, lifted.states),
                                      max_abs_difference(finite.controls, lifted.controls));

    std::vector<ControlPolicy> policies{fb, ZeroControl{}};
    for (std::size_t axis = 0; axis < in.x0.flat().size(); ++axis) {
        for (double off : in.offsets) policies.push_back(offset_policy(fb, axis, off));
    }
    const PolicyComparison cmp = policy_compare(in.model, in.cfg, in.x0, policies);
    double worst_z = -kInf;
    json rows = json::array();
    for (std::size_t j = 2; j < policies.size(); ++j) {
        const MeanWithError diff = cmp.differences[0][j];  // feedback minus perturbed
        double z;
        if (diff.std_error > 0.0) z = diff.mean / diff.std_error;
        else z = diff.mean > 0.0 ? kInf : (diff.mean < 0.0 ? -kInf : 0.0);
        worst_z = std::max(worst_z, z);
        rows.push_back({{"policy", cmp.ids[j]}, {"cost", cmp.estimates[j].mean},
                        {"paired_diff", diff.mean}, {"paired_se", diff.std_error}, {"z", number_or_string(z)}});
    }
    ProbeReport rep;
    rep.name = "feedback_roundtrip";
    rep.samples = in.cfg.n_paths;
    rep.threshold = in.z_threshold;
    rep.statistic = state_gap == 0.0 ? worst_z : kInf;
    rep.extras = {{"state_gap", state_gap},
                  {"feedback_cost", cmp.estimates[0].mean},
                  {"feedback_se", cmp.estimates[0].std_error},
                  {"zero_cost", cmp.estimates[1].mean},
                  {"zero_minus_feedback", cmp.differences[1][0].mean},
                  {"perturbed", rows}};
    rep.provenance = {{"model", in.model.id}, {"seed", in.cfg.seed}, {"grid", in.u->spec.to_json()}};
    rep.finalize();
    return rep;
}

ProbeReport feedback_optimality(const FeedbackOptimalityInput& in) {
    if (in.u == nullptr) throw DomainError("feedback_optimality: no value function");
    const MarkovFeedback fb = synthesize_feedback(*in.u);
    const PolicyComparison cmp = policy_compare(in.model, in.cfg, in.x0, {fb, ZeroControl{}});
    const CostEstimate& j_fb = cmp.estimates[0];
    const MeanWithError gap = cmp.differences[1][0];  // zero minus feedback
    const double allowance = in.grid_error + in.z_value * j_fb.std_error;
    const double value_margin = std::abs(j_fb.mean - in.reference) - allowance;
    const double gap_z = gap.std_error > 0.0 ? gap.mean / gap.std_error : (gap.mean > 0.0 ? kInf : 0.0);
    ProbeReport rep;
    rep.name = "feedback_optimality";
    rep.samples = in.cfg.n_paths;
    rep.threshold = 0.0;
    // Both margins normalized so that <= 0 means satisfied.
    rep.statistic = std::max(value_margin / std::max(allowance, 1e-300), (in.z_gap - gap_z) / in.z_gap);
    rep.extras = {{"feedback_cost", j_fb.mean},
                  {"feedback_se", j_fb.std_error},
                  {"reference", in.reference},
                  {"allowance", allowance},
                  {"zero_cost", cmp.estimates[1].mean},
                  {"paired_gap", gap.mean},
                  {"paired_gap_se", gap.std_error},
                  {"gap_z", number_or_string(gap_z)}};
    rep.provenance = {{"model", in.model.id}, {"seed", in.cfg.seed}, {"steps", in.cfg.steps},
                      {"grid", in.u->spec.to_json()}};
    rep.finalize();
    return rep;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<VectorTuple, VectorTuple>> sample_tuple_pairs(std::size_t n, std::size_t d,
                                                                    std::size_t count, double radius,
                                                                    double min_distance,
                                                                    std::uint64_t seed) {
    CounterStream rng(seed, 0x70616972ULL);
    std::vector<std::pair<VectorTuple, VectorTuple>> out;
    std::size_t attempts = 0;
    while (out.size() < count) {
        if (++attempts > 1000 * (count + 1)) throw DomainError("sample_tuple_pairs: min_distance unattainable");
        VectorTuple x(n, d), y(n, d);
        for (double& v : x.flat()) v = rng.uniform(-radius, radius);
        for (double& v : y.flat()) v = rng.uniform(-radius, radius);
        if (rdistance(x, y, 2.0) >= min_distance) out.emplace_back(std::move(x), std::move(y));
    }
    return out;
}

ProbeReport semiconcavity_probe(const ValueSource& value,
                                const std::vector<std::pair<VectorTuple, VectorTuple>>& pairs,
                                const std::vector<double>& lambdas, std::optional<double> expected,
                                double tolerance) {
    double sup = -kInf, inf = kInf;
    std::size_t used = 0, skipped = 0;
    for (const auto& [x, y] : pairs) {
        const double dist = rdistance(x, y, 2.0);
        if (dist < 1e-8) {
            ++skipped;
            continue;
        }
        const double vx = value(x), vy = value(y);
        for (double l : lambdas) {
            if (l <= 0.0 || l >= 1.0) continue;
            VectorTuple z(x.n(), x.d());
            for (std::size_t j = 0; j < z.flat().size(); ++j) z.flat()[j] = l * x.flat()[j] + (1.0 - l) * y.flat()[j];
            const double s = l * vx + (1.0 - l) * vy - value(z);
            const double q = s / (l * (1.0 - l) * dist * dist);
            sup = std::max(sup, q);
            inf = std::min(inf, q);
            ++used;
        }
    }
    ProbeReport rep;
    rep.name = "semiconcavity";
    rep.samples = used;
    rep.extras = {{"sup", number_or_string(sup)}, {"inf", number_or_string(inf)}, {"skipped", skipped}};
    if (expected) {
        rep.statistic = used == 0 ? kInf : std::max(std::abs(sup - *expected), std::abs(inf - *expected));
        rep.threshold = tolerance;
        rep.extras["expected"] = *expected;
    } else {
        rep.statistic = used == 0 ? 0.0 : sup;
        rep.threshold = kInf;
        rep.comparator = Comparator::Report;
    }
    rep.finalize();
    return rep;
}

ProbeReport permutation_invariance_probe(const GridValueFunction& u, double threshold) {
    const std::size_t n = u.n, d = u.d;
    for (std::size_t a = d; a < u.dims(); ++a) {
        const auto& ax = u.spec.axes[a];
        const auto& ref = u.spec.axes[a % d];
        if (ax.lower != ref.lower || ax.upper != ref.upper || ax.points != ref.points) {
            throw ShapeError("permutation_invariance_probe: particle axes differ");
        }
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double worst = 0.0;
    std::size_t samples = 0;
    std::vector<std::size_t> idx(u.dims());
    while (std::next_permutation(perm.begin(), perm.end())) {
        for (std::size_t q = 0; q < u.node_count(); ++q) {
            const auto src = u.multi_index(q);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t c = 0; c < d; ++c) idx[perm[i] * d + c] = src[i * d + c];
            }
            const std::size_t p = u.flat_index(idx);
            for (const auto& slice : u.values) worst = std::max(worst, std::abs(slice[q] - slice[p]));
            samples += u.slice_count();
        }
    }
    ProbeReport rep;
    rep.name = "permutation_invariance";
    rep.samples = samples;
    rep.statistic = worst;
    rep.threshold = threshold;
    rep.provenance = {{"model", u.model.id}, {"n", n}, {"grid", u.spec.to_json()}};
    rep.finalize();
    return rep;
}

ProbeReport time_holder_probe(const GridValueFunction& u, double r, std::size_t levels,
                              std::size_t min_gap_steps, double tolerance) {
    check_r(r);
    if (u.slice_count() < 3) throw DomainError("time_holder_probe: too few stored slices");
    const std::size_t base = std::max<std::size_t>(1, (min_gap_steps + u.save_every - 1) / u.save_every);
    const auto core = u.core_nodes();
    std::vector<double> weight(core.size());
    for (std::size_t j = 0; j < core.size(); ++j) {
        const VectorTuple x(u.n, u.d, u.coordinates(core[j]));
        weight[j] = 1.0 + rnorm(x, r);
    }
    std::vector<double> gaps, ratios;
    for (std::size_t level = 0; level < levels; ++level) {
        const std::size_t g = base << level;
        if (g >= u.slice_count()) break;
        double best = 0.0;
        for (std::size_t s = 0; s + g < u.slice_count(); ++s) {
            const double dt = u.times[s + g] - u.times[s];
            const double root = std::sqrt(dt);
            for (std::size_t j = 0; j < core.size(); ++j) {
                const double diff = std::abs(u.values[s + g][core[j]] - u.values[s][core[j]]);
                best = std::max(best, diff / (weight[j] * root));
            }
        }
        gaps.push_back(u.times[g] - u.times[0]);
        ratios.push_back(best);
    }
    // ratios[0] belongs to the smallest gap.
    double increase = -kInf;
    for (std::size_t j = 0; j + 1 < ratios.size(); ++j) increase = std::max(increase, ratios[j] - ratios[j + 1]);
    ProbeReport rep;
    rep.name = "time_holder";
    rep.samples = ratios.size();
    rep.statistic = ratios.size() < 2 ? 0.0 : increase;
    rep.threshold = tolerance;
    rep.extras = {{"gaps", gaps},
                  {"ratios", ratios},
                  {"max_ratio", ratios.empty() ? 0.0 : *std::max_element(ratios.begin(), ratios.end())}};
    rep.provenance = {{"model", u.model.id}, {"n", u.n}, {"r", r}};
    rep.finalize();
    return rep;
}

// ---------------------------------------------------------------------------

ProbeReport martingale_probe(const ModelSpec& model, const SimConfig& cfg, const VectorTuple& x0,
                             double z_threshold) {
    for (const auto& b : model.drift) {
        if (!b.is_constant() || b.eval({}, {}) != 0.0) {
            throw DomainError("martingale probe needs a zero-drift model, got '" + model.id + "'");
        }
    }
    const PathBundle b = simulate_particles(model, cfg, x0, ZeroControl{});
    double worst = 0.0;
    json rows = json::array();
    std::vector<double> samples;
    for (std::size_t j = 0; j < x0.flat().size(); ++j) {
        samples.clear();
        for (std::size_t p = 0; p < b.n_paths; ++p) {
            if (b.alive[p]) samples.push_back(b.state(p, b.steps)[j] - x0.flat()[j]);
        }
        const MeanWithError m = mean_and_error(samples);
        double z = 0.0;
        if (m.std_error > 0.0) z = std::abs(m.mean) / m.std_error;
        else if (m.mean != 0.0) z = kInf;
        worst = std::max(worst, z);
        rows.push_back({{"component", j}, {"mean_shift", m.mean}, {"se", m.std_error}});
    }
    ProbeReport rep;
    rep.name = "martingale";
    rep.samples = b.alive_count();
    rep.statistic = worst;
    rep.threshold = z_threshold;
    rep.extras = {{"components", rows}};
    rep.provenance = {{"model", model.id}, {"seed", cfg.seed}, {"steps", cfg.steps}};
    rep.finalize();
    return rep;
}

ProbeReport stability_probe(const ModelSpec& model, const SimConfig& cfg, const VectorTuple& x0,
                            const VectorTuple& direction, const std::vector<double>& deltas, double r,
                            double max_ratio) {
    if (direction.n() != x0.n() || direction.d() != x0.d()) throw ShapeError("stability_probe: direction shape");
    if (deltas.size() < 2) throw DomainError("stability_probe: need at least two deltas");
    const PathBundle b0 = simulate_particles(model, cfg, x0, ZeroControl{});
    std::vector<double> constants;
    for (double delta : deltas) {
        VectorTuple x1 = x0;
        for (std::size_t j = 0; j < x1.flat().size(); ++j) x1.flat()[j] += delta * direction.flat()[j];
        const double start = rdistance(x1, x0, r);
        if (!(start > 0.0)) throw DomainError("stability_probe: zero perturbation");
        const PathBundle b1 = simulate_particles(model, cfg, x1, ZeroControl{});
        constants.push_back(paired_sup_difference(b1, b0, r).mean / start);
    }
    const auto [lo, hi] = std::minmax_element(constants.begin(), constants.end());
    ProbeReport rep;
    rep.name = "stability";
    rep.samples = cfg.n_paths;
    rep.statistic = *lo > 0.0 ? *hi / *lo : kInf;
    rep.threshold = max_ratio;
    rep.extras = {{"deltas", deltas}, {"constants", constants}};
    rep.provenance = {{"model", model.id}, {"seed", cfg.seed}, {"r", r}};
    rep.finalize();
    return rep;
}

// ---------------------------------------------------------------------------

namespace {

/// d_r between empirical measures of possibly different sizes, through a
/// common refinement (each atom repeated up to the least common multiple).
double measure_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b, double r) {
    if (a.n() == b.n() || a.d() == 1) return wasserstein_r(a, b, r);
    const std::size_t l = std::lcm(a.n(), b.n());
    if (l > 512) return std::numeric_limits<double>::quiet_NaN();
    return wasserstein_r(EmpiricalMeasure(duplicate_atoms(a.atoms(), l / a.n())),
                         EmpiricalMeasure(duplicate_atoms(b.atoms(), l / b.n())), r);
}

double constant_sigma(const ModelSpec& model) {
    if (model.d != 1 || model.d_prime != 1 || !model.diffusion.at(0).is_constant()) {
        throw DomainError("convergence_sweep: oracle mode needs constant scalar sigma");
    }
    return model.diffusion[0].eval({}, MeasureFeatures{});
}

} // namespace

std::vector<ConvergenceRow> convergence_sweep(const ConvergenceInput& in) {
    const std::size_t d = in.model.d;
    if (in.target.d() != d) throw ShapeError("convergence_sweep: target dimension differs from model");
    std::vector<ConvergenceRow> rows;
    for (std::size_t n : in.n_list) {
        VectorTuple x;
        if (in.tuple_mode == TupleMode::Duplicate) {
            if (n % in.target.n() != 0) {
                throw DomainError("convergence_sweep: n = " + std::to_string(n) +
                                  " is not a multiple of the target atom count");
            }
            x = duplicate_atoms(in.target.atoms(), n / in.target.n());
        } else {
            CounterStream rng(in.seed, 0x69696400ULL, n);
            x = VectorTuple(n, d);
            for (std::size_t i = 0; i < n; ++i) {
                const auto atom = in.target.atom(rng.index(in.target.n()));
                std::copy(atom.begin(), atom.end(), x[i].begin());
            }
        }
        ConvergenceRow row;
        row.n = n;
        row.distance = measure_distance(EmpiricalMeasure(x), in.target, in.r);
        switch (in.value_mode) {
            case ValueMode::Grid: {
                if (in.grid.axes.empty()) throw DomainError("convergence_sweep: grid template has no axes");
                GridSpec g = in.grid;
                g.axes.assign(n * d, in.grid.axes.front());
                const GridValueFunction u = solve_hjb(in.model, n, g);
                row.value = u.value(in.t, x.flat());
                break;
            }
            case ValueMode::Oracle:
                row.value = riccati_lq_value(constant_sigma(in.model), in.model.kappa, in.grid.T, in.t, x);
                break;
            case ValueMode::MonteCarlo: {
                SimConfig cfg = in.sim;
                cfg.t0 = in.t;
                const CostEstimate est = cost_finite(in.model, cfg, x, ZeroControl{});
                row.value = est.mean;
                row.std_error = est.std_error;
                break;
            }
        }
        row.gap = rows.empty() ? 0.0 : std::abs(row.value - rows.back().value);
        rows.push_back(row);
    }
    return rows;
}

} // namespace mfc
