#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mfc/measure.hpp"
#include "mfc/model.hpp"

namespace mfc {

/// Time mesh and Monte Carlo size. The scheme is always Euler-Maruyama.
struct SimConfig {
    double t0 = 0.0;
    double T = 1.0;
    std::size_t steps = 100;
    std::size_t n_paths = 1;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;  // worker threads; results do not depend on it

    double dt() const { return (T - t0) / static_cast<double>(steps); }
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt(); }
    void validate() const;
};

struct ZeroControl {};

/// Deterministic controls, one n x d tuple per step.
struct OpenLoopSchedule {
    std::vector<VectorTuple> controls;
};

/// Markov feedback (s, x) -> a with a of the same shape as x.
struct MarkovFeedback {
    std::function<VectorTuple(double, const VectorTuple&)> fn;
    std::string id = "feedback";
};

using ControlPolicy = std::variant<ZeroControl, OpenLoopSchedule, MarkovFeedback>;

/// Controls of a policy at step k, time s and state x.
VectorTuple evaluate_policy(const ControlPolicy& policy, std::size_t step, double s,
                            const VectorTuple& x);

std::string policy_id(const ControlPolicy& policy);

/// Piecewise-constant lift a^n = sum_i a_i 1_{A_i^n} of a finite-dimensional
/// policy: acts on the atom representation of X in E_n, one d-vector per atom.
struct LiftedPolicy {
    ControlPolicy atomwise;
};

inline LiftedPolicy lift_policy(ControlPolicy policy) { return LiftedPolicy{std::move(policy)}; }

/// Monte Carlo trajectories sharing one common Wiener path per sample path.
struct PathBundle {
    std::size_t n_paths = 0;
    std::size_t steps = 0;
    std::size_t n = 0;
    std::size_t d = 0;
    std::size_t d_prime = 0;
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<double> states;      // [path][step 0..steps][particle][coord]
    std::vector<double> increments;  // [path][step][noise coord]
    std::vector<double> controls;    // [path][step][particle][coord]
    std::vector<char> alive;         // per path
    std::vector<std::string> diagnostics;  // empty string for healthy paths

    std::span<const double> state(std::size_t path, std::size_t step) const {
        return {states.data() + (path * (steps + 1) + step) * n * d, n * d};
    }
    std::span<const double> control(std::size_t path, std::size_t step) const {
        return {controls.data() + (path * steps + step) * n * d, n * d};
    }
    std::span<const double> increment(std::size_t path, std::size_t step) const {
        return {increments.data() + (path * steps + step) * d_prime, d_prime};
    }
    VectorTuple state_tuple(std::size_t path, std::size_t step) const;
    VectorTuple control_tuple(std::size_t path, std::size_t step) const;
    bool all_alive() const;
    std::size_t alive_count() const;
};

/// Optional instrumentation: called once per (path, step, particle) with the
/// Wiener increment that particle's update consumed.
struct SimHooks {
    std::function<void(std::size_t, std::size_t, std::size_t, std::span<const double>)> on_increment;
};

/// States whose Euclidean norm exceeds this abort the path.
inline constexpr double kBlowUpThreshold = 1e8;

/// Single N(0, dt) component keyed by (seed, path, step, component).
double wiener_increment(std::uint64_t seed, std::size_t path, std::size_t step,
                        std::size_t component, double dt);

/// All increments [path][step][component] for cfg and noise dimension d_prime.
std::vector<double> wiener_increments(const SimConfig& cfg, std::size_t d_prime);

/// Euler-Maruyama for the n-particle common-noise system.
PathBundle simulate_particles(const ModelSpec& model, const SimConfig& cfg,
                              const VectorTuple& x0, const ControlPolicy& policy,
                              const SimHooks& hooks = {});

/// Euler-Maruyama for dX = [-a + B(X)] ds + Sigma(X) dW on E_n atoms.
PathBundle simulate_lifted_atoms(const ModelSpec& model, const SimConfig& cfg,
                                 const VectorTuple& atoms, const LiftedPolicy& policy,
                                 const SimHooks& hooks = {});

struct MeanWithError {
    double mean = 0.0;
    double std_error = 0.0;
};

MeanWithError mean_and_error(std::span<const double> samples);

struct PathStatistics {
    std::size_t paths_used = 0;
    MeanWithError sup_norm;            // E sup_s |X(s)|_r
    MeanWithError sup_deviation;       // E sup_s |X(s) - x|_r
    MeanWithError increment_mean;      // per component average, pooled
    MeanWithError increment_var_ratio; // sample variance / dt, pooled
    std::vector<double> moment_trajectory;  // E M_r(mu_X(s)) per step
};

PathStatistics path_statistics(const PathBundle& bundle, double r);

/// E sup_{k <= window} |X^k - X^0|_r over alive paths.
MeanWithError sup_deviation_window(const PathBundle& bundle, double r, std::size_t window);

/// E sup_s |X^1(s) - X^0(s)|_r for two bundles driven by the same noise.
MeanWithError paired_sup_difference(const PathBundle& a, const PathBundle& b, double r);

/// CSV with header "path,step,particle,coord,value".
void write_trajectory_csv(const PathBundle& bundle, std::ostream& out);

} // namespace mfc
