#include "mfc/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mfc/rng.hpp"

namespace mfc {

using nlohmann::json;

void ModelSpec::validate() const {
    if (d == 0 || d_prime == 0) throw ConfigError("/d", "dimensions must be positive");
    if (drift.size() != d) {
        throw ConfigError("/b", "expected " + std::to_string(d) + " drift components");
    }
    if (diffusion.size() != d * d_prime) {
        throw ConfigError("/sigma", "expected a " + std::to_string(d) + "x" +
                                        std::to_string(d_prime) + " matrix");
    }
    if (!(kappa > 0.0) || !std::isfinite(kappa)) {
        throw ConfigError("/kappa", "kappa must be positive and finite");
    }
    auto check = [&](const CoefficientExpr& e, const std::string& where) {
        if (e.state_arity() > d || e.mean_arity() > d) {
            throw ConfigError(where, "expression '" + e.to_string() +
                                         "' indexes beyond dimension " + std::to_string(d));
        }
    };
    for (std::size_t k = 0; k < drift.size(); ++k) check(drift[k], "/b/" + std::to_string(k));
    for (std::size_t k = 0; k < diffusion.size(); ++k) {
        check(diffusion[k], "/sigma/" + std::to_string(k / d_prime) + "/" + std::to_string(k % d_prime));
    }
    check(running_l1, "/l1");
    check(terminal, "/UT");
    if (terminal.state_arity() > 0) {
        throw ConfigError("/UT", "terminal cost may depend on measure features only");
    }
}

void ModelSpec::drift_at(std::span<const double> x, const MeasureFeatures& f,
                         std::span<double> out) const {
    for (std::size_t k = 0; k < d; ++k) out[k] = drift[k].eval(x, f);
}

void ModelSpec::diffusion_at(std::span<const double> x, const MeasureFeatures& f,
                             std::span<double> out) const {
    for (std::size_t k = 0; k < diffusion.size(); ++k) out[k] = diffusion[k].eval(x, f);
}

double ModelSpec::terminal_at(const MeasureFeatures& f) const {
    return terminal.eval(std::span<const double>{}, f);
}

json ModelSpec::to_json() const {
    json b = json::array();
    for (const auto& e : drift) b.push_back(e.to_string());
    json sigma = json::array();
    for (std::size_t i = 0; i < d; ++i) {
        json row = json::array();
        for (std::size_t m = 0; m < d_prime; ++m) row.push_back(diffusion[i * d_prime + m].to_string());
        sigma.push_back(row);
    }
    return json{{"id", id},
                {"d", d},
                {"d_prime", d_prime},
                {"b", b},
                {"sigma", sigma},
                {"l1", running_l1.to_string()},
                {"kappa", kappa},
                {"UT", terminal.to_string()},
                {"is_affine_lift", is_affine_lift},
                {"lift_convex", lift_convex}};
}

namespace {

CoefficientExpr parse_at(const json& v, const std::string& pointer) {
    if (v.is_number()) return CoefficientExpr::constant(v.get<double>());
    if (!v.is_string()) throw ConfigError(pointer, "expected an expression string");
    try {
        return CoefficientExpr::parse(v.get<std::string>());
    } catch (const ParseError& e) {
        throw ConfigError(pointer, e.what());
    }
}

struct RegistryEntry {
    std::size_t d;
    std::vector<std::string> drift;
    std::vector<std::string> diffusion;
    std::string l1;
    double kappa;
    std::string terminal;
    bool affine;
    bool convex;
};

// Sorted by name.
const std::map<std::string, RegistryEntry>& registry() {
    static const std::map<std::string, RegistryEntry> entries{
        {"LQ-decoupled", {1, {"0"}, {"1"}, "0", 1.0, "m2/2", true, true}},
        {"LQ-mean-reverting", {1, {"-x[0]+m1[0]"}, {"1"}, "0", 1.0, "m2/2", true, true}},
        {"linear-terminal", {1, {"0"}, {"1"}, "0", 1.0, "m1[0]", true, true}},
        // sigma = sigma^1(x) + g(integral of zeta) with g = tanh, zeta(y) = y.
        {"tanh-interaction",
         {1, {"-0.5*x[0]"}, {"0.5+0.25*tanh(m1[0])"}, "0.1*sqrt(1+(x[0]-m1[0])^2)", 1.0, "m2/2",
          false, false}},
    };
    return entries;
}

} // namespace

std::vector<std::string> registry_names() {
    std::vector<std::string> names;
    for (const auto& [name, entry] : registry()) names.push_back(name);
    std::ranges::sort(names);
    return names;
}

bool has_registry_model(const std::string& name) { return registry().contains(name); }

ModelSpec registry_model(const std::string& name) {
    const auto it = registry().find(name);
    if (it == registry().end()) throw ConfigError("/registry", "unknown registry model '" + name + "'");
    const RegistryEntry& e = it->second;
    ModelSpec m;
    m.id = name;
    m.d = e.d;
    m.d_prime = e.diffusion.size() / e.d;
    for (const auto& s : e.drift) m.drift.push_back(CoefficientExpr::parse(s));
    for (const auto& s : e.diffusion) m.diffusion.push_back(CoefficientExpr::parse(s));
    m.running_l1 = CoefficientExpr::parse(e.l1);
    m.kappa = e.kappa;
    m.terminal = CoefficientExpr::parse(e.terminal);
    m.is_affine_lift = e.affine;
    m.lift_convex = e.convex;
    m.validate();
    return m;
}

ModelSpec model_from_json(const json& doc, const std::string& pointer) {
    if (doc.is_string()) {
        const auto name = doc.get<std::string>();
        if (!has_registry_model(name)) throw ConfigError(pointer, "unknown registry model '" + name + "'");
        return registry_model(name);
    }
    if (!doc.is_object()) throw ConfigError(pointer, "model must be an object or registry name");
    static const std::set<std::string> allowed{"registry", "id", "d", "d_prime", "b", "sigma",
                                               "l1", "kappa", "UT", "is_affine_lift",
                                               "lift_convex"};
    for (const auto& [key, value] : doc.items()) {
        if (!allowed.contains(key)) throw ConfigError(pointer + "/" + key, "unknown key");
    }
    ModelSpec m;
    if (doc.contains("registry")) {
        const auto& reg = doc.at("registry");
        if (!reg.is_string() || !has_registry_model(reg.get<std::string>())) {
            throw ConfigError(pointer + "/registry", "unknown registry model");
        }
        m = registry_model(reg.get<std::string>());
    }
    auto get_count = [&](const char* key, std::size_t& out) {
        if (!doc.contains(key)) return;
        const auto& v = doc.at(key);
        if (!is_json_count(v) || v.get<std::size_t>() == 0) {
            throw ConfigError(pointer + "/" + key, "expected a positive integer");
        }
        out = v.get<std::size_t>();
    };
    get_count("d", m.d);
    get_count("d_prime", m.d_prime);
    if (doc.contains("id")) {
        if (!doc.at("id").is_string()) throw ConfigError(pointer + "/id", "expected a string");
        m.id = doc.at("id").get<std::string>();
    }
    if (doc.contains("b")) {
        const auto& b = doc.at("b");
        if (!b.is_array()) throw ConfigError(pointer + "/b", "expected an array of expressions");
        m.drift.clear();
        for (std::size_t k = 0; k < b.size(); ++k) {
            m.drift.push_back(parse_at(b[k], pointer + "/b/" + std::to_string(k)));
        }
    }
    if (doc.contains("sigma")) {
        const auto& s = doc.at("sigma");
        if (!s.is_array()) throw ConfigError(pointer + "/sigma", "expected a matrix of expressions");
        m.diffusion.clear();
        for (std::size_t i = 0; i < s.size(); ++i) {
            const std::string rp = pointer + "/sigma/" + std::to_string(i);
            if (!s[i].is_array() || s[i].size() != m.d_prime) {
                throw ConfigError(rp, "expected a row of " + std::to_string(m.d_prime) + " expressions");
            }
            for (std::size_t j = 0; j < s[i].size(); ++j) {
                m.diffusion.push_back(parse_at(s[i][j], rp + "/" + std::to_string(j)));
            }
        }
    }
    if (doc.contains("l1")) m.running_l1 = parse_at(doc.at("l1"), pointer + "/l1");
    if (doc.contains("UT")) m.terminal = parse_at(doc.at("UT"), pointer + "/UT");
    if (doc.contains("kappa")) {
        if (!doc.at("kappa").is_number()) throw ConfigError(pointer + "/kappa", "expected a number");
        m.kappa = doc.at("kappa").get<double>();
    }
    for (const char* flag : {"is_affine_lift", "lift_convex"}) {
        if (!doc.contains(flag)) continue;
        if (!doc.at(flag).is_boolean()) throw ConfigError(pointer + "/" + flag, "expected a boolean");
        (std::string(flag) == "is_affine_lift" ? m.is_affine_lift : m.lift_convex) = doc.at(flag).get<bool>();
    }
    if (!doc.contains("registry")) {
        for (const char* key : {"b", "sigma", "kappa", "UT"}) {
            if (!doc.contains(key)) throw ConfigError(pointer + "/" + key, "missing required key");
        }
    }
    try {
        m.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(pointer + e.pointer(), e.message());
    }
    return m;
}

double l2_cost(std::span<const double> a, double kappa) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return 0.5 * kappa * s;
}

std::vector<double> l2_gradient(std::span<const double> a, double kappa) {
    std::vector<double> g(a.begin(), a.end());
    for (double& v : g) v *= kappa;
    return g;
}

double l2_conjugate(std::span<const double> p, double kappa) {
    double s = 0.0;
    for (double v : p) s += v * v;
    return s / (2.0 * kappa);
}

std::vector<double> feedback_map(std::span<const double> p, double kappa) {
    std::vector<double> a(p.begin(), p.end());
    for (double& v : a) v /= kappa;
    return a;
}

double hamiltonian(std::span<const double> x, const MeasureFeatures& f,
                   std::span<const double> p, const ModelSpec& model) {
    std::vector<double> b(model.d);
    model.drift_at(x, f, b);
    double bp = 0.0;
    for (std::size_t k = 0; k < model.d; ++k) bp += b[k] * p[k];
    return -bp - model.l1_at(x, f) + l2_conjugate(p, model.kappa);
}

double hamiltonian(std::span<const double> x, const EmpiricalMeasure& mu,
                   std::span<const double> p, const ModelSpec& model) {
    return hamiltonian(x, MeasureFeatures::of(mu), p, model);
}

LiftedCoefficients lifted_coefficients(const ModelSpec& model, const VectorTuple& atoms,
                                       bool with_terminal) {
    const std::size_t n = atoms.n();
    const std::size_t block = model.d * model.d_prime;
    const MeasureFeatures f = MeasureFeatures::of(atoms);
    LiftedCoefficients out;
    out.drift = VectorTuple(n, model.d);
    out.diffusion.assign(n * block, 0.0);
    double l1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        model.drift_at(atoms[i], f, out.drift[i]);
        model.diffusion_at(atoms[i], f, std::span<double>(out.diffusion).subspan(i * block, block));
        l1 += model.l1_at(atoms[i], f);
    }
    out.running_l1 = l1 / static_cast<double>(n);
    if (with_terminal) out.terminal = model.terminal_at(f);
    return out;
}

json AssumptionReport::to_json() const {
    json entries_json = json::array();
    for (const auto& e : entries) {
        entries_json.push_back({{"coefficient", e.coefficient},
                                {"radii", e.radii},
                                {"estimates", e.estimates},
                                {"non_lipschitz_global", e.non_lipschitz_global}});
    }
    return {{"sample_count", sample_count}, {"r", r}, {"entries", entries_json}};
}

namespace {

double euclid(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
}

} // namespace

AssumptionReport assumption_probe(const ModelSpec& model, std::size_t sample_count,
                                  double radius, std::uint64_t seed, double r,
                                  std::size_t atoms_per_measure) {
    if (sample_count < 2) throw DomainError("assumption_probe: need at least 2 samples");
    if (!(radius > 0.0)) throw DomainError("assumption_probe: radius must be positive");
    check_r(r);
    const std::size_t d = model.d;
    const std::size_t m = std::max<std::size_t>(atoms_per_measure, 1);
    const std::vector<std::string> names{"b", "sigma", "l1", "UT"};
    AssumptionReport report;
    report.sample_count = sample_count;
    report.r = r;
    for (const auto& name : names) report.entries.push_back({name, {}, {}, false});

    for (int level = 0; level < 3; ++level) {
        const double R = radius * std::pow(2.0, level);
        std::vector<double> best(names.size(), 0.0);
        CounterStream rng(seed, static_cast<std::uint64_t>(level));
        auto clamp = [R](double v) { return std::clamp(v, -R, R); };
        for (std::size_t s = 0; s < sample_count; ++s) {
            std::vector<double> x(d), y(d);
            VectorTuple mu_atoms(m, d), nu_atoms(m, d);
            for (auto& v : x) v = rng.uniform(-R, R);
            for (auto& v : mu_atoms.flat()) v = rng.uniform(-R, R);
            y = x;
            nu_atoms = mu_atoms;
            // Alternate between moving the point, the measure, or both.
            const std::size_t mode = s % 3;
            const double scale = R * rng.uniform();
            if (mode != 1) {
                for (auto& v : y) v = clamp(v + scale * rng.uniform(-1.0, 1.0));
            }
            if (mode != 0) {
                for (auto& v : nu_atoms.flat()) v = clamp(v + scale * rng.uniform(-1.0, 1.0));
            }
            const EmpiricalMeasure mu(mu_atoms), nu(nu_atoms);
            const double dx = euclid(x, y);
            const double dmu = wasserstein_r(mu, nu, r);
            if (dx + dmu < 1e-12) continue;
            const auto fm = MeasureFeatures::of(mu_atoms);
            const auto fn = MeasureFeatures::of(nu_atoms);
            try {
                std::vector<double> bx(d), by(d);
                model.drift_at(x, fm, bx);
                model.drift_at(y, fn, by);
                best[0] = std::max(best[0], euclid(bx, by) / (dx + dmu));
                std::vector<double> sx(d * model.d_prime), sy(d * model.d_prime);
                model.diffusion_at(x, fm, sx);
                model.diffusion_at(y, fn, sy);
                best[1] = std::max(best[1], euclid(sx, sy) / (dx + dmu));
                best[2] = std::max(best[2], std::abs(model.l1_at(x, fm) - model.l1_at(y, fn)) / (dx + dmu));
                if (dmu > 1e-12) {
                    best[3] = std::max(best[3], std::abs(model.terminal_at(fm) - model.terminal_at(fn)) / dmu);
                }
            } catch (const EvalError&) {
                // Points outside the coefficient's domain are skipped.
            }
        }
        for (std::size_t c = 0; c < names.size(); ++c) {
            report.entries[c].radii.push_back(R);
            report.entries[c].estimates.push_back(best[c]);
        }
    }
    for (auto& e : report.entries) {
        const auto& q = e.estimates;
        e.non_lipschitz_global = q[0] > 0.0 && q[1] > 1.5 * q[0] && q[2] > 1.5 * q[1];
    }
    return report;
}

} // namespace mfc
