#include "mfc/wmollify.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <thread>

namespace mfc {

using nlohmann::json;

namespace {

struct Entry {
    const char* expr;
    double lipschitz;
    bool convex;
    bool linear;
};

const std::map<std::string, Entry>& functional_registry() {
    static const std::map<std::string, Entry> reg{
        {"const", {"7", 0.0, true, true}},
        {"mean", {"m1[0]", 1.0, true, true}},
        {"mean-squared", {"m1[0]^2", std::numeric_limits<double>::quiet_NaN(), true, false}},
        {"second-moment", {"m2", std::numeric_limits<double>::quiet_NaN(), true, false}},
        {"state", {"x[0]", 1.0, true, true}},
        {"tanh-mix", {"tanh(m1[0]) + 0.5*x[0]", 1.0, false, false}},
    };
    return reg;
}

} // namespace

json BaseFunctional::to_json() const {
    return {{"id", id},
            {"d", d},
            {"expr", expr.to_string()},
            {"lipschitz", std::isnan(lipschitz) ? json(nullptr) : json(lipschitz)},
            {"r", r},
            {"convex_lift", convex_lift},
            {"linear_lift", linear_lift}};
}

std::vector<std::string> functional_names() {
    std::vector<std::string> names;
    for (const auto& [name, e] : functional_registry()) names.push_back(name);
    return names;
}

BaseFunctional registry_functional(const std::string& name) {
    const auto& reg = functional_registry();
    const auto it = reg.find(name);
    if (it == reg.end()) throw DomainError("unknown functional '" + name + "'");
    BaseFunctional f;
    f.id = name;
    f.expr = CoefficientExpr::parse(it->second.expr);
    f.lipschitz = it->second.lipschitz;
    f.convex_lift = it->second.convex;
    f.linear_lift = it->second.linear;
    return f;
}

BaseFunctional functional_from_json(const json& doc, const std::string& pointer) {
    if (doc.is_string()) {
        try {
            return registry_functional(doc.get<std::string>());
        } catch (const DomainError& e) {
            throw ConfigError(pointer, e.what());
        }
    }
    if (!doc.is_object()) throw ConfigError(pointer, "functional must be a registry name or an object");
    static const std::set<std::string> allowed{"id", "expr", "d", "lipschitz", "r", "convex_lift", "linear_lift"};
    for (const auto& [key, value] : doc.items()) {
        if (!allowed.contains(key)) throw ConfigError(pointer + "/" + key, "unknown key");
    }
    if (!doc.contains("expr") || !doc.at("expr").is_string()) throw ConfigError(pointer + "/expr", "expected an expression string");
    BaseFunctional f;
    try {
        f.expr = CoefficientExpr::parse(doc.at("expr").get<std::string>());
    } catch (const ParseError& e) {
        throw ConfigError(pointer + "/expr", e.what());
    }
    try {
        f.id = doc.value("id", std::string("custom"));
        f.d = doc.value("d", std::size_t{1});
        if (doc.contains("lipschitz") && !doc.at("lipschitz").is_null()) f.lipschitz = doc.at("lipschitz").get<double>();
        f.r = doc.value("r", 1.0);
        f.convex_lift = doc.value("convex_lift", false);
        f.linear_lift = doc.value("linear_lift", false);
    } catch (const json::exception& e) {
        throw ConfigError(pointer, e.what());
    }
    if (f.d == 0 || f.expr.state_arity() > f.d || f.expr.mean_arity() > f.d) {
        throw ConfigError(pointer + "/d", "expression indexes beyond dimension d");
    }
    return f;
}

void SmoothedFunctional::validate() const {
    if (k < 1) throw DomainError("SmoothedFunctional: k must be >= 1");
    if (mc_reps < 1) throw DomainError("SmoothedFunctional: mc_reps must be >= 1");
}

BumpDraw sample_bump(double epsilon, std::size_t d, CounterStream& rng) {
    if (!(epsilon > 0.0)) throw DomainError("sample_bump: epsilon must be positive");
    BumpDraw out;
    out.offset.assign(d, 0.0);
    std::vector<double> u(d);
    for (;;) {
        ++out.proposals;
        // Uniform on the unit ball: Gaussian direction, radius U^(1/d).
        double norm2 = 0.0;
        for (double& v : u) {
            v = rng.normal();
            norm2 += v * v;
        }
        const double radius = std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
        const double scale = norm2 > 0.0 ? radius / std::sqrt(norm2) : 0.0;
        double s2 = 0.0;
        for (double& v : u) {
            v *= scale;
            s2 += v * v;
        }
        if (s2 >= 1.0) continue;
        // eta(u) / eta(0) = exp(1 - 1 / (1 - |u|^2))
        if (rng.uniform() < std::exp(1.0 + 1.0 / (s2 - 1.0))) {
            for (std::size_t c = 0; c < d; ++c) out.offset[c] = epsilon * u[c];
            return out;
        }
    }
}

namespace {

/// Random inputs of one replicate: y_0, atom indices and offsets y_1..y_N.
struct ReplicateDraw {
    std::vector<double> y0;
    std::vector<std::size_t> index;
    std::vector<double> offsets;  // N x d
};

ReplicateDraw draw_replicate(std::uint64_t seed, std::size_t rep, std::size_t N, std::size_t atoms,
                             double epsilon, std::size_t d, const OffsetHook& hook) {
    CounterStream rng(seed, 0x6d6f6c6cULL, rep);
    ReplicateDraw r;
    r.y0 = sample_bump(epsilon, d, rng).offset;
    if (hook) hook(r.y0);
    r.index.resize(N);
    r.offsets.resize(N * d);
    for (std::size_t i = 0; i < N; ++i) {
        r.index[i] = static_cast<std::size_t>(rng.index(atoms));
        const auto y = sample_bump(epsilon, d, rng).offset;
        if (hook) hook(y);
        std::copy(y.begin(), y.end(), r.offsets.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return r;
}

double evaluate_draw(const BaseFunctional& base, const ReplicateDraw& r, std::span<const double> x,
                     const VectorTuple& atoms, std::vector<double>& xs, VectorTuple& sample) {
    const std::size_t d = atoms.d();
    for (std::size_t c = 0; c < d; ++c) xs[c] = x[c] - r.y0[c];
    for (std::size_t i = 0; i < r.index.size(); ++i) {
        const auto a = atoms[r.index[i]];
        for (std::size_t c = 0; c < d; ++c) sample[i][c] = a[c] - r.offsets[i * d + c];
    }
    return base(xs, sample);
}

/// Fills out[j] = fn(j) for j < count on `jobs` threads; fn must be thread-safe.
template <class Fn>
void parallel_fill(std::vector<double>& out, std::size_t jobs, Fn fn) {
    jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(out.size(), 1));
    if (jobs == 1) {
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = fn(j);
        return;
    }
    std::exception_ptr failure;
    std::mutex mutex;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (std::size_t j = w; j < out.size(); j += jobs) out[j] = fn(j);
            } catch (...) {
                const std::lock_guard lock(mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    if (failure) std::rethrow_exception(failure);
}

void check_point(const BaseFunctional& base, std::span<const double> x, const EmpiricalMeasure& mu) {
    if (x.size() != mu.d()) throw ShapeError("smoothing: x and mu have different dimensions");
    if (base.expr.state_arity() > x.size() || base.expr.mean_arity() > mu.d()) {
        throw ShapeError("smoothing: functional indexes beyond the point dimension");
    }
}

} // namespace

std::vector<double> smooth_replicates(const BaseFunctional& base, std::size_t N, double epsilon,
                                      std::size_t reps, std::uint64_t seed, std::span<const double> x,
                                      const EmpiricalMeasure& mu, std::size_t jobs, const OffsetHook& hook) {
    if (N < 1 || reps < 1) throw DomainError("smoothing: need N >= 1 and reps >= 1");
    if (!(epsilon > 0.0)) throw DomainError("smoothing: epsilon must be positive");
    check_point(base, x, mu);
    std::mutex hook_mutex;
    OffsetHook guarded;
    if (hook) {
        guarded = [&](std::span<const double> y) {
            const std::lock_guard lock(hook_mutex);
            hook(y);
        };
    }
    std::vector<double> values(reps);
    parallel_fill(values, jobs, [&](std::size_t j) {
        const ReplicateDraw r = draw_replicate(seed, j, N, mu.n(), epsilon, mu.d(), guarded);
        std::vector<double> xs(mu.d());
        VectorTuple sample(N, mu.d());
        return evaluate_draw(base, r, x, mu.atoms(), xs, sample);
    });
    return values;
}

MeanWithError smooth_eval_raw(const BaseFunctional& base, std::size_t N, double epsilon, std::size_t reps,
                              std::uint64_t seed, std::span<const double> x, const EmpiricalMeasure& mu,
                              std::size_t jobs, const OffsetHook& hook) {
    const auto values = smooth_replicates(base, N, epsilon, reps, seed, x, mu, jobs, hook);
    return mean_and_error(values);
}

MeanWithError smooth_eval(const SmoothedFunctional& sf, std::span<const double> x, const EmpiricalMeasure& mu,
                          const OffsetHook& hook) {
    sf.validate();
    return smooth_eval_raw(sf.base, sf.k, sf.epsilon(), sf.mc_reps, sf.seed, x, mu, sf.jobs, hook);
}

// ---------------------------------------------------------------------------

namespace {

FunctionalPoint random_point(CounterStream& rng, std::size_t d, double radius, std::size_t atoms) {
    FunctionalPoint p;
    p.x.resize(d);
    // Uniform in the cube, then pulled into the ball of the given radius.
    double norm2 = 0.0;
    for (double& v : p.x) {
        v = rng.uniform(-radius, radius);
        norm2 += v * v;
    }
    if (norm2 > radius * radius) {
        const double s = radius / std::sqrt(norm2);
        for (double& v : p.x) v *= s;
    }
    VectorTuple a(atoms, d);
    for (double& v : a.flat()) v = rng.uniform(-radius, radius);
    p.mu = EmpiricalMeasure(std::move(a));
    return p;
}

double euclid(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
    return std::sqrt(s);
}

} // namespace

std::vector<FunctionalPoint> bounded_test_family(std::size_t d, std::size_t count, double radius,
                                                 std::size_t atoms, std::uint64_t seed) {
    CounterStream rng(seed, 0x66616d69ULL);
    std::vector<FunctionalPoint> out;
    for (std::size_t j = 0; j < count; ++j) out.push_back(random_point(rng, d, radius, atoms));
    return out;
}

std::vector<std::pair<FunctionalPoint, FunctionalPoint>> sample_functional_pairs(std::size_t d, std::size_t count,
                                                                                double radius, std::size_t atoms,
                                                                                std::uint64_t seed) {
    CounterStream rng(seed, 0x6c697073ULL);
    std::vector<std::pair<FunctionalPoint, FunctionalPoint>> out;
    for (std::size_t j = 0; j < count; ++j) {
        FunctionalPoint a = random_point(rng, d, radius, atoms);
        FunctionalPoint b = random_point(rng, d, radius, atoms);
        out.emplace_back(std::move(a), std::move(b));
    }
    return out;
}

ProbeReport lipschitz_preservation_probe(const SmoothedFunctional& sf,
                                         const std::vector<std::pair<FunctionalPoint, FunctionalPoint>>& pairs) {
    sf.validate();
    const double L = sf.base.lipschitz;
    if (std::isnan(L)) throw DomainError("lipschitz_preservation_probe: functional has no declared constant");
    double worst = -std::numeric_limits<double>::infinity(), raw = 0.0;
    std::size_t used = 0, skipped = 0;
    for (const auto& [p, q] : pairs) {
        const double denom = euclid(p.x, q.x) + wasserstein_r(p.mu, q.mu, sf.base.r);
        if (denom < 1e-8) {
            ++skipped;
            continue;
        }
        // Reorder nu so that shared indices pick optimally coupled atoms.
        EmpiricalMeasure nu = q.mu;
        if (p.mu.n() == q.mu.n()) {
            const auto sigma = optimal_assignment(p.mu, q.mu, sf.base.r);
            VectorTuple atoms(q.mu.n(), q.mu.d());
            for (std::size_t i = 0; i < sigma.size(); ++i) {
                const auto a = q.mu.atom(sigma[i]);
                std::copy(a.begin(), a.end(), atoms[i].begin());
            }
            nu = EmpiricalMeasure(std::move(atoms));
        }
        const auto a = smooth_replicates(sf.base, sf.k, sf.epsilon(), sf.mc_reps, sf.seed, p.x, p.mu, sf.jobs);
        const auto b = smooth_replicates(sf.base, sf.k, sf.epsilon(), sf.mc_reps, sf.seed, q.x, nu, sf.jobs);
        std::vector<double> diff(a.size());
        for (std::size_t j = 0; j < a.size(); ++j) diff[j] = a[j] - b[j];
        const MeanWithError m = mean_and_error(diff);
        raw = std::max(raw, std::abs(m.mean) / denom);
        worst = std::max(worst, (std::abs(m.mean) - 3.0 * m.std_error) / denom);
        ++used;
    }
    ProbeReport rep;
    rep.name = "lipschitz_preservation";
    rep.samples = used;
    rep.statistic = used == 0 ? 0.0 : worst;
    rep.threshold = L;
    rep.extras = {{"raw_quotient", raw}, {"skipped", skipped}, {"k", sf.k}};
    rep.provenance = {{"functional", sf.base.id}, {"seed", sf.seed}, {"mc_reps", sf.mc_reps}};
    rep.finalize();
    return rep;
}

ProbeReport uniform_convergence_probe(const ConvergenceProbeInput& in) {
    if (in.k_list.size() < 2) throw DomainError("uniform_convergence_probe: need at least two k values");
    if (in.test_set.empty()) throw DomainError("uniform_convergence_probe: empty test set");
    std::vector<double> sups, ses;
    for (std::size_t k : in.k_list) {
        double sup = -1.0, se = 0.0;
        for (const auto& p : in.test_set) {
            const MeanWithError m =
                smooth_eval_raw(in.base, k, 1.0 / static_cast<double>(k), in.mc_reps, in.seed, p.x, p.mu, in.jobs);
            const double err = std::abs(m.mean - in.base(p.x, p.mu.atoms()));
            if (err > sup) {
                sup = err;
                se = m.std_error;
            }
        }
        sups.push_back(sup);
        ses.push_back(se);
    }
    double stat = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j + 1 < sups.size(); ++j) {
        stat = std::max(stat, sups[j + 1] - sups[j] - in.z * std::hypot(ses[j], ses[j + 1]));
    }
    const double strict = sups.back() - sups.front() + in.z * std::hypot(ses.front(), ses.back());
    stat = std::max(stat, strict);
    ProbeReport rep;
    rep.name = "uniform_convergence";
    rep.samples = in.test_set.size() * in.k_list.size();
    rep.statistic = stat;
    rep.threshold = 0.0;
    rep.extras = {{"k", in.k_list}, {"sup_error", sups}, {"sup_se", ses}, {"strict_margin", strict}};
    rep.provenance = {{"functional", in.base.id}, {"seed", in.seed}, {"mc_reps", in.mc_reps}};
    rep.finalize();
    return rep;
}

std::vector<ConvexityCase> sample_convexity_cases(std::size_t d, std::size_t count, double radius,
                                                  std::size_t atoms, std::uint64_t seed) {
    CounterStream rng(seed, 0x636f6e76ULL);
    const double lambdas[] = {0.25, 0.5, 0.75};
    std::vector<ConvexityCase> out;
    for (std::size_t j = 0; j < count; ++j) {
        ConvexityCase c;
        c.x.resize(d);
        c.y.resize(d);
        for (double& v : c.x) v = rng.uniform(-radius, radius);
        for (double& v : c.y) v = rng.uniform(-radius, radius);
        c.X = VectorTuple(atoms, d);
        c.Y = VectorTuple(atoms, d);
        for (double& v : c.X.flat()) v = rng.uniform(-radius, radius);
        for (double& v : c.Y.flat()) v = rng.uniform(-radius, radius);
        c.lambda = lambdas[j % 3];
        out.push_back(std::move(c));
    }
    return out;
}

ProbeReport convexity_preservation_probe(const SmoothedFunctional& sf, const std::vector<ConvexityCase>& cases,
                                         double z) {
    sf.validate();
    double worst = std::numeric_limits<double>::infinity(), max_abs = 0.0, min_delta = worst, min_rep = worst;
    for (const auto& c : cases) {
        if (c.X.n() != c.Y.n() || c.X.d() != c.Y.d() || c.x.size() != c.X.d() || c.y.size() != c.X.d()) {
            throw ShapeError("convexity_preservation_probe: case shapes differ");
        }
        check_point(sf.base, c.x, EmpiricalMeasure(c.X));
        const double l = c.lambda;
        std::vector<double> xm(c.x.size());
        for (std::size_t j = 0; j < xm.size(); ++j) xm[j] = l * c.x[j] + (1.0 - l) * c.y[j];
        VectorTuple M(c.X.n(), c.X.d());
        for (std::size_t j = 0; j < M.flat().size(); ++j) M.flat()[j] = l * c.X.flat()[j] + (1.0 - l) * c.Y.flat()[j];
        std::vector<double> delta(sf.mc_reps);
        parallel_fill(delta, sf.jobs, [&](std::size_t j) {
            const ReplicateDraw r = draw_replicate(sf.seed, j, sf.k, c.X.n(), sf.epsilon(), c.X.d(), {});
            std::vector<double> xs(c.X.d());
            VectorTuple sample(sf.k, c.X.d());
            const double a = evaluate_draw(sf.base, r, c.x, c.X, xs, sample);
            const double b = evaluate_draw(sf.base, r, c.y, c.Y, xs, sample);
            const double m = evaluate_draw(sf.base, r, xm, M, xs, sample);
            return l * a + (1.0 - l) * b - m;
        });
        for (double v : delta) {
            max_abs = std::max(max_abs, std::abs(v));
            min_rep = std::min(min_rep, v);
        }
        const MeanWithError e = mean_and_error(delta);
        min_delta = std::min(min_delta, e.mean);
        worst = std::min(worst, e.mean + z * e.std_error);
    }
    ProbeReport rep;
    rep.name = "convexity_preservation";
    rep.samples = cases.size();
    rep.statistic = cases.empty() ? 0.0 : worst;
    rep.threshold = -1e-12;
    rep.comparator = Comparator::GreaterEqual;
    rep.extras = {{"max_abs_replicate", max_abs}, {"min_delta", cases.empty() ? 0.0 : min_delta},
                  {"min_replicate", cases.empty() ? 0.0 : min_rep}, {"k", sf.k}};
    rep.provenance = {{"functional", sf.base.id}, {"seed", sf.seed}, {"mc_reps", sf.mc_reps}};
    rep.finalize();
    return rep;
}

} // namespace mfc
