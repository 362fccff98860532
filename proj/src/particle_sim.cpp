#include "mfc/particle_sim.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "mfc/rng.hpp"

namespace mfc {

void SimConfig::validate() const {
    if (!(T > t0)) throw DomainError("SimConfig: need T > t0");
    if (steps < 1) throw DomainError("SimConfig: need steps >= 1");
    if (n_paths < 1) throw DomainError("SimConfig: need n_paths >= 1");
}

VectorTuple evaluate_policy(const ControlPolicy& policy, std::size_t step, double s,
                            const VectorTuple& x) {
    VectorTuple a = std::visit(
        [&](const auto& p) -> VectorTuple {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, ZeroControl>) {
                return VectorTuple(x.n(), x.d(), 0.0);
            } else if constexpr (std::is_same_v<P, OpenLoopSchedule>) {
                if (step >= p.controls.size()) {
                    throw ShapeError("open-loop schedule has " + std::to_string(p.controls.size()) +
                                     " steps, step " + std::to_string(step) + " requested");
                }
                return p.controls[step];
            } else {
                return p.fn(s, x);
            }
        },
        policy);
    if (a.n() != x.n() || a.d() != x.d()) throw ShapeError("policy output shape mismatch");
    return a;
}

std::string policy_id(const ControlPolicy& policy) {
    return std::visit(
        [](const auto& p) -> std::string {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, ZeroControl>) return "zero";
            else if constexpr (std::is_same_v<P, OpenLoopSchedule>) return "open-loop";
            else return p.id;
        },
        policy);
}

VectorTuple PathBundle::state_tuple(std::size_t path, std::size_t step) const {
    const auto s = state(path, step);
    return VectorTuple(n, d, std::vector<double>(s.begin(), s.end()));
}

VectorTuple PathBundle::control_tuple(std::size_t path, std::size_t step) const {
    const auto s = control(path, step);
    return VectorTuple(n, d, std::vector<double>(s.begin(), s.end()));
}

bool PathBundle::all_alive() const {
    return std::ranges::all_of(alive, [](char c) { return c != 0; });
}

std::size_t PathBundle::alive_count() const {
    return static_cast<std::size_t>(std::ranges::count_if(alive, [](char c) { return c != 0; }));
}

double wiener_increment(std::uint64_t seed, std::size_t path, std::size_t step,
                        std::size_t component, double dt) {
    const CounterRng rng(seed, path, step);
    return std::sqrt(dt) * rng.normal(component);
}

std::vector<double> wiener_increments(const SimConfig& cfg, std::size_t d_prime) {
    cfg.validate();
    std::vector<double> out(cfg.n_paths * cfg.steps * d_prime);
    const double dt = cfg.dt();
    for (std::size_t p = 0; p < cfg.n_paths; ++p) {
        for (std::size_t k = 0; k < cfg.steps; ++k) {
            for (std::size_t m = 0; m < d_prime; ++m) {
                out[(p * cfg.steps + k) * d_prime + m] = wiener_increment(cfg.seed, p, k, m, dt);
            }
        }
    }
    return out;
}

namespace {

/// X_i <- X_i + (-a_i + b_i) dt + sigma_i dW; the one update both integrators use.
inline void euler_atom_update(std::span<const double> x, std::span<const double> a,
                              std::span<const double> b, std::span<const double> sigma,
                              std::span<const double> dw, double dt, std::span<double> out) {
    const std::size_t d = x.size();
    const std::size_t dp = dw.size();
    for (std::size_t c = 0; c < d; ++c) {
        double noise = 0.0;
        for (std::size_t m = 0; m < dp; ++m) noise += sigma[c * dp + m] * dw[m];
        out[c] = x[c] + (-a[c] + b[c]) * dt + noise;
    }
}

struct StepCoefficients {
    std::vector<double> drift;      // n*d
    std::vector<double> diffusion;  // n*d*d'
};

using CoefficientFn = std::function<void(const VectorTuple&, StepCoefficients&)>;

PathBundle integrate(const ModelSpec& model, const SimConfig& cfg, const VectorTuple& x0,
                     const ControlPolicy& policy, const CoefficientFn& coefficients,
                     const SimHooks& hooks) {
    cfg.validate();
    if (x0.d() != model.d) throw ShapeError("initial state dimension differs from model dimension");
    if (x0.n() == 0) throw ShapeError("initial state has no particles");
    PathBundle b;
    b.n_paths = cfg.n_paths;
    b.steps = cfg.steps;
    b.n = x0.n();
    b.d = model.d;
    b.d_prime = model.d_prime;
    b.t0 = cfg.t0;
    b.dt = cfg.dt();
    const std::size_t nd = b.n * b.d;
    const std::size_t block = model.d * model.d_prime;
    b.states.assign(b.n_paths * (b.steps + 1) * nd, 0.0);
    b.controls.assign(b.n_paths * b.steps * nd, 0.0);
    b.increments.assign(b.n_paths * b.steps * b.d_prime, 0.0);
    b.alive.assign(b.n_paths, 1);
    b.diagnostics.assign(b.n_paths, std::string());

    auto run_path = [&](std::size_t p) {
        double* states = b.states.data() + p * (b.steps + 1) * nd;
        std::copy(x0.flat().begin(), x0.flat().end(), states);
        VectorTuple x = x0;
        VectorTuple next(b.n, b.d);
        StepCoefficients coef;
        coef.drift.assign(nd, 0.0);
        coef.diffusion.assign(b.n * block, 0.0);
        std::vector<double> dw(b.d_prime);
        std::size_t last_valid = b.steps;
        for (std::size_t k = 0; k < b.steps; ++k) {
            for (std::size_t m = 0; m < b.d_prime; ++m) {
                dw[m] = wiener_increment(cfg.seed, p, k, m, b.dt);
            }
            std::copy(dw.begin(), dw.end(), b.increments.begin() + static_cast<std::ptrdiff_t>((p * b.steps + k) * b.d_prime));
            VectorTuple a;
            try {
                a = evaluate_policy(policy, k, cfg.time(k), x);
                coefficients(x, coef);
            } catch (const EvalError& e) {
                b.alive[p] = 0;
                b.diagnostics[p] = "path " + std::to_string(p) + " aborted at step " +
                                   std::to_string(k) + ": " + e.what();
                last_valid = k;
                break;
            }
            std::copy(a.flat().begin(), a.flat().end(), b.controls.begin() + static_cast<std::ptrdiff_t>((p * b.steps + k) * nd));
            bool blown = false;
            for (std::size_t i = 0; i < b.n; ++i) {
                if (hooks.on_increment) hooks.on_increment(p, k, i, dw);
                euler_atom_update(x[i], a[i],
                                  std::span<const double>(coef.drift).subspan(i * b.d, b.d),
                                  std::span<const double>(coef.diffusion).subspan(i * block, block),
                                  dw, b.dt, next[i]);
                double norm2 = 0.0;
                for (double v : next[i]) norm2 += v * v;
                if (!std::isfinite(norm2) || std::sqrt(norm2) > kBlowUpThreshold) blown = true;
            }
            std::copy(next.flat().begin(), next.flat().end(), states + (k + 1) * nd);
            if (blown) {
                b.alive[p] = 0;
                b.diagnostics[p] = "path " + std::to_string(p) + " aborted at step " +
                                   std::to_string(k + 1) + ": state non-finite or above 1e8";
                last_valid = k + 1;
                break;
            }
            std::swap(x, next);
        }
        if (!b.alive[p]) {
            // States after the abort point are undefined.
            std::fill(states + (last_valid + 1) * nd, states + (b.steps + 1) * nd,
                      std::numeric_limits<double>::quiet_NaN());
        }
    };

    const std::size_t jobs = std::clamp<std::size_t>(cfg.jobs, 1, b.n_paths);
    if (jobs == 1) {
        for (std::size_t p = 0; p < b.n_paths; ++p) run_path(p);
        return b;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (std::size_t p = w; p < b.n_paths; p += jobs) run_path(p);
            } catch (...) {
                const std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    if (failure) std::rethrow_exception(failure);
    return b;
}

} // namespace

PathBundle simulate_particles(const ModelSpec& model, const SimConfig& cfg,
                              const VectorTuple& x0, const ControlPolicy& policy,
                              const SimHooks& hooks) {
    const std::size_t block = model.d * model.d_prime;
    const CoefficientFn per_particle = [&model, block](const VectorTuple& x, StepCoefficients& c) {
        const MeasureFeatures f = MeasureFeatures::of(x);
        for (std::size_t i = 0; i < x.n(); ++i) {
            model.drift_at(x[i], f, std::span<double>(c.drift).subspan(i * model.d, model.d));
            model.diffusion_at(x[i], f, std::span<double>(c.diffusion).subspan(i * block, block));
        }
    };
    return integrate(model, cfg, x0, policy, per_particle, hooks);
}

PathBundle simulate_lifted_atoms(const ModelSpec& model, const SimConfig& cfg,
                                 const VectorTuple& atoms, const LiftedPolicy& policy,
                                 const SimHooks& hooks) {
    const CoefficientFn lifted = [&model](const VectorTuple& x, StepCoefficients& c) {
        LiftedCoefficients lc = lifted_coefficients(model, x, /*with_terminal=*/false);
        c.drift = std::move(lc.drift.flat());
        c.diffusion = std::move(lc.diffusion);
    };
    return integrate(model, cfg, atoms, policy.atomwise, lifted, hooks);
}

MeanWithError mean_and_error(std::span<const double> samples) {
    MeanWithError out;
    const std::size_t m = samples.size();
    if (m == 0) return out;
    double sum = 0.0;
    for (double v : samples) sum += v;
    out.mean = sum / static_cast<double>(m);
    if (m < 2) return out;
    double ss = 0.0;
    for (double v : samples) ss += (v - out.mean) * (v - out.mean);
    out.std_error = std::sqrt(ss / static_cast<double>(m - 1) / static_cast<double>(m));
    return out;
}

namespace {

double rnorm_flat(std::span<const double> a, std::span<const double> b, std::size_t n,
                  std::size_t d, double r) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double q = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = a[i * d + c] - (b.empty() ? 0.0 : b[i * d + c]);
            q += diff * diff;
        }
        s += std::pow(std::sqrt(q), r);
    }
    return std::pow(s / static_cast<double>(n), 1.0 / r);
}

} // namespace

PathStatistics path_statistics(const PathBundle& bundle, double r) {
    check_r(r);
    if (bundle.n_paths == 0) throw ShapeError("path_statistics: empty bundle");
    PathStatistics st;
    std::vector<double> sup_norm, sup_dev;
    st.moment_trajectory.assign(bundle.steps + 1, 0.0);
    std::vector<double> inc_all;
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        if (!bundle.alive[p]) continue;
        const auto x0 = bundle.state(p, 0);
        double best_norm = 0.0, best_dev = 0.0;
        for (std::size_t k = 0; k <= bundle.steps; ++k) {
            const auto xk = bundle.state(p, k);
            const double norm = rnorm_flat(xk, {}, bundle.n, bundle.d, r);
            best_norm = std::max(best_norm, norm);
            best_dev = std::max(best_dev, rnorm_flat(xk, x0, bundle.n, bundle.d, r));
            st.moment_trajectory[k] += std::pow(norm, r);
        }
        sup_norm.push_back(best_norm);
        sup_dev.push_back(best_dev);
        for (std::size_t k = 0; k < bundle.steps; ++k) {
            for (double v : bundle.increment(p, k)) inc_all.push_back(v);
        }
    }
    st.paths_used = sup_norm.size();
    if (st.paths_used > 0) {
        for (double& v : st.moment_trajectory) v /= static_cast<double>(st.paths_used);
    }
    st.sup_norm = mean_and_error(sup_norm);
    st.sup_deviation = mean_and_error(sup_dev);
    st.increment_mean = mean_and_error(inc_all);
    std::vector<double> sq(inc_all.size());
    for (std::size_t j = 0; j < inc_all.size(); ++j) sq[j] = inc_all[j] * inc_all[j] / bundle.dt;
    st.increment_var_ratio = mean_and_error(sq);
    return st;
}

MeanWithError sup_deviation_window(const PathBundle& bundle, double r, std::size_t window) {
    check_r(r);
    window = std::min(window, bundle.steps);
    std::vector<double> sup_dev;
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        if (!bundle.alive[p]) continue;
        const auto x0 = bundle.state(p, 0);
        double best = 0.0;
        for (std::size_t k = 0; k <= window; ++k) {
            best = std::max(best, rnorm_flat(bundle.state(p, k), x0, bundle.n, bundle.d, r));
        }
        sup_dev.push_back(best);
    }
    return mean_and_error(sup_dev);
}

MeanWithError paired_sup_difference(const PathBundle& a, const PathBundle& b, double r) {
    check_r(r);
    if (a.n_paths != b.n_paths || a.steps != b.steps || a.n != b.n || a.d != b.d) {
        throw ShapeError("paired_sup_difference: bundle shapes differ");
    }
    std::vector<double> sups;
    for (std::size_t p = 0; p < a.n_paths; ++p) {
        if (!a.alive[p] || !b.alive[p]) continue;
        double best = 0.0;
        for (std::size_t k = 0; k <= a.steps; ++k) {
            best = std::max(best, rnorm_flat(a.state(p, k), b.state(p, k), a.n, a.d, r));
        }
        sups.push_back(best);
    }
    return mean_and_error(sups);
}

void write_trajectory_csv(const PathBundle& bundle, std::ostream& out) {
    out << "path,step,particle,coord,value\n";
    out.precision(17);
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        for (std::size_t k = 0; k <= bundle.steps; ++k) {
            const auto s = bundle.state(p, k);
            for (std::size_t i = 0; i < bundle.n; ++i) {
                for (std::size_t c = 0; c < bundle.d; ++c) {
                    out << p << ',' << k << ',' << i << ',' << c << ',' << s[i * bundle.d + c] << '\n';
                }
            }
        }
    }
}

} // namespace mfc
