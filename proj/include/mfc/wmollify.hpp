#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfc/expr.hpp"
#include "mfc/rng.hpp"
#include "mfc/verify.hpp"

namespace mfc {

/// phi(x, mu) on R^d x P(R^d), written in the coefficient language.
struct BaseFunctional {
    std::string id = "custom";
    std::size_t d = 1;
    CoefficientExpr expr;
    /// Declared Lipschitz constant w.r.t. |x - y| + d_r(mu, nu); NaN if none.
    double lipschitz = std::numeric_limits<double>::quiet_NaN();
    double r = 1.0;
    bool convex_lift = false;
    bool linear_lift = false;

    double operator()(std::span<const double> x, const VectorTuple& atoms) const {
        return expr.eval(x, MeasureFeatures::of(atoms));
    }
    nlohmann::json to_json() const;
};

std::vector<std::string> functional_names();
BaseFunctional registry_functional(const std::string& name);
/// Registry name or {"expr", "d", "lipschitz", "r", "convex_lift", "linear_lift"}.
BaseFunctional functional_from_json(const nlohmann::json& doc, const std::string& pointer = "");

/// phi_k = psi_{k, 1/k}: k samples from mu and mollifier width 1/k.
struct SmoothedFunctional {
    BaseFunctional base;
    std::size_t k = 4;
    std::size_t mc_reps = 1000;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;

    double epsilon() const { return 1.0 / static_cast<double>(k); }
    void validate() const;
};

struct BumpDraw {
    std::vector<double> offset;
    std::size_t proposals = 0;
};

/// One draw from eta_eps, the normalized bump exp(-1 / (1 - |y/eps|^2)) on the
/// eps-ball, by rejection from the uniform law on the ball.
BumpDraw sample_bump(double epsilon, std::size_t d, CounterStream& rng);

/// Instrumentation: sees every mollifier offset used by an evaluation.
using OffsetHook = std::function<void(std::span<const double>)>;

/// E[phi(x - y_0, (1/N) sum_i delta_{X_i - y_i})] with X_i i.i.d. from mu and
/// y_j from eta_eps. Replicate j uses the stream keyed (seed, j), so two calls
/// with the same seed share indices and offsets.
MeanWithError smooth_eval_raw(const BaseFunctional& base, std::size_t N, double epsilon,
                              std::size_t reps, std::uint64_t seed, std::span<const double> x,
                              const EmpiricalMeasure& mu, std::size_t jobs = 1,
                              const OffsetHook& hook = {});

/// Per-replicate values of the estimator above.
std::vector<double> smooth_replicates(const BaseFunctional& base, std::size_t N, double epsilon,
                                      std::size_t reps, std::uint64_t seed,
                                      std::span<const double> x, const EmpiricalMeasure& mu,
                                      std::size_t jobs = 1, const OffsetHook& hook = {});

MeanWithError smooth_eval(const SmoothedFunctional& sf, std::span<const double> x,
                          const EmpiricalMeasure& mu, const OffsetHook& hook = {});

/// A point (x, mu) of the functional's domain.
struct FunctionalPoint {
    std::vector<double> x;
    EmpiricalMeasure mu;
};

/// Points with |x| <= radius and atoms in [-radius, radius]^d.
std::vector<FunctionalPoint> bounded_test_family(std::size_t d, std::size_t count, double radius,
                                                 std::size_t atoms, std::uint64_t seed);

std::vector<std::pair<FunctionalPoint, FunctionalPoint>> sample_functional_pairs(
    std::size_t d, std::size_t count, double radius, std::size_t atoms, std::uint64_t seed);

/// max |phi_k(x, mu) - phi_k(y, nu)| / (|x - y| + d_r(mu, nu)) with common
/// random numbers. nu's atoms are reordered by an optimal assignment first so
/// shared indices realize an optimal coupling. The statistic discounts 3 paired
/// standard errors and is compared with the declared constant.
ProbeReport lipschitz_preservation_probe(const SmoothedFunctional& sf,
                                         const std::vector<std::pair<FunctionalPoint, FunctionalPoint>>& pairs);

struct ConvergenceProbeInput {
    BaseFunctional base;
    std::vector<std::size_t> k_list{4, 16, 64};
    std::vector<FunctionalPoint> test_set;
    std::size_t mc_reps = 2000;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    double z = 3.0;
};

/// sup over the test set of |phi_k - phi| per k. Statistic: the largest of
/// (sup_{k'} - sup_k - z SE) over consecutive k < k', and
/// (sup_last - sup_first + z SE); all must be <= 0.
ProbeReport uniform_convergence_probe(const ConvergenceProbeInput& in);

struct ConvexityCase {
    std::vector<double> x, y;
    VectorTuple X, Y;  // equal atom counts
    double lambda = 0.5;
};

std::vector<ConvexityCase> sample_convexity_cases(std::size_t d, std::size_t count, double radius,
                                                  std::size_t atoms, std::uint64_t seed);

/// Delta = l phi_k(x, X) + (1 - l) phi_k(y, Y) - phi_k(l x + (1 - l) y, l X + (1 - l) Y)
/// under the coupling with shared atom indices and offsets. Statistic:
/// min over cases of Delta + z paired SE (>= -1e-12 passes; the slack absorbs
/// rounding in linear cases). extras.max_abs_replicate is the largest
/// per-replicate |Delta|, extras.min_replicate the smallest per-replicate Delta.
ProbeReport convexity_preservation_probe(const SmoothedFunctional& sf,
                                         const std::vector<ConvexityCase>& cases, double z = 3.0);

} // namespace mfc
