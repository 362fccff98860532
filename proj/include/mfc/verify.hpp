#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfc/cost_mc.hpp"
#include "mfc/hjb_grid.hpp"

namespace mfc {

enum class Comparator { LessEqual, GreaterEqual, Report };

/// Outcome of one numerical certificate. `pass` is recomputed from the
/// statistic and threshold, never set directly.
struct ProbeReport {
    std::string name;
    std::size_t samples = 0;
    double statistic = 0.0;
    double threshold = 0.0;
    Comparator comparator = Comparator::LessEqual;
    bool pass = false;
    nlohmann::json provenance = nlohmann::json::object();
    nlohmann::json extras = nlohmann::json::object();

    static bool decide(double statistic, double threshold, Comparator cmp);
    void finalize() { pass = decide(statistic, threshold, comparator); }

    nlohmann::json to_json() const;
    static ProbeReport from_json(const nlohmann::json& doc);
};

std::string comparator_name(Comparator c);
/// CSV "probe,statistic,threshold,pass", one row per report.
void write_probe_csv(const std::vector<ProbeReport>& reports, std::ostream& out);
nlohmann::json probes_to_json(const std::vector<ProbeReport>& reports);

/// V(t, X) evaluated at an atom tuple, for a fixed t.
using ValueSource = std::function<double(const VectorTuple&)>;

/// Multilinear interpolation of the slice nearest to t. `u` must outlive the source.
ValueSource grid_value_source(const GridValueFunction& u, double t);
/// Closed-form value of the decoupled LQ model, any n.
ValueSource riccati_value_source(double sigma, double kappa, double T, double t);

// ---------------------------------------------------------------------------
// Projection and lifting

struct DuplicationInput {
    ModelSpec model;
    std::size_t base_n = 1;
    std::size_t m = 2;
    GridSpec base_grid;
    GridSpec dup_grid;
    std::vector<VectorTuple> points;  // base_n particles each
    std::vector<double> times;        // evaluated at the nearest stored slice
    double threshold = 2e-2;
};

/// max |u_{mn}(t, dup(x, m)) - u_n(t, x)| from two independent grid solves.
/// extras.terminal_residual holds the same quantity restricted to t = T.
ProbeReport duplication_consistency(const DuplicationInput& in);

/// |J_n - J| / max(1, |J_n|) for one open-loop policy under shared noise.
ProbeReport cost_identity_check(const ModelSpec& model, const SimConfig& cfg,
                                const VectorTuple& x0, const OpenLoopSchedule& policy);

/// Random open-loop schedule with entries uniform in [-amplitude, amplitude].
OpenLoopSchedule random_open_loop(std::size_t steps, std::size_t n, std::size_t d,
                                  double amplitude, std::uint64_t seed);

/// `draws` random (registry model, seed, x0, open-loop policy) triples; the
/// statistic is the worst relative gap.
ProbeReport cost_identity_sweep(std::size_t draws, std::uint64_t seed, std::size_t steps = 20,
                                std::size_t n_paths = 8);

struct FeedbackRoundtripInput {
    ModelSpec model;
    SimConfig cfg;
    VectorTuple x0;
    const GridValueFunction* u = nullptr;
    std::vector<double> offsets{-0.2, -0.1, 0.1, 0.2};
    double z_threshold = 2.0;
};

/// (a) lifted and finite simulations of the grid feedback coincide bit for
/// bit; (b) no constant-offset perturbation of the feedback beats it by more
/// than z_threshold paired standard errors. Statistic: the largest such
/// z-score, +inf when (a) fails.
ProbeReport feedback_roundtrip(const FeedbackRoundtripInput& in);

struct FeedbackOptimalityInput {
    ModelSpec model;
    SimConfig cfg;
    VectorTuple x0;
    const GridValueFunction* u = nullptr;
    double reference = 0.0;   // optimal value
    double grid_error = 1e-3; // allowance for the grid solution
    double z_value = 3.0;
    double z_gap = 5.0;
};

/// Cost of the grid feedback is within grid_error + z_value SE of the
/// reference and beats zero control by at least z_gap paired SE.
/// Statistic: the worst of the two normalized margins (pass when <= 0).
ProbeReport feedback_optimality(const FeedbackOptimalityInput& in);

// ---------------------------------------------------------------------------
// Regularity

/// Random pairs of n x d tuples in the box [-radius, radius] with
/// |x - y|_2 >= min_distance.
std::vector<std::pair<VectorTuple, VectorTuple>> sample_tuple_pairs(
    std::size_t n, std::size_t d, std::size_t count, double radius, double min_distance,
    std::uint64_t seed);

/// S(l, X, Y) / (l (1 - l) |X - Y|^2) with S = l V(X) + (1 - l) V(Y) - V(l X + (1 - l) Y).
/// extras carry sup (semiconcavity estimate) and inf (semiconvexity estimate).
/// With `expected`, the statistic is max(|sup - e|, |inf - e|) against `tolerance`;
/// otherwise the probe only reports.
ProbeReport semiconcavity_probe(const ValueSource& value,
                                const std::vector<std::pair<VectorTuple, VectorTuple>>& pairs,
                                const std::vector<double>& lambdas,
                                std::optional<double> expected = std::nullopt,
                                double tolerance = 1e-3);

/// max |u(t, x) - u(t, sigma x)| over nodes, stored slices and particle permutations.
ProbeReport permutation_invariance_probe(const GridValueFunction& u, double threshold = 1e-9);

/// R(g) = max |u(s, x) - u(t, x)| / ((1 + |x|_r) sqrt(g)) for stored slice pairs
/// g apart, over core nodes. Gaps shrink down to `min_gap_steps` solver steps.
/// Statistic: largest increase of R as the gap shrinks (pass when <= tolerance).
ProbeReport time_holder_probe(const GridValueFunction& u, double r, std::size_t levels = 6,
                              std::size_t min_gap_steps = 4, double tolerance = 1e-12);

// ---------------------------------------------------------------------------
// Simulator statistics

/// Zero-drift, zero-control martingale check: max over particles and coordinates
/// of |mean X(T) - x0| / SE. Threshold 4.
ProbeReport martingale_probe(const ModelSpec& model, const SimConfig& cfg, const VectorTuple& x0,
                             double z_threshold = 4.0);

/// C(delta) = E sup |X^1 - X^0|_r / |x^1 - x^0|_r for x^1 = x^0 + delta * direction,
/// shared noise and zero control. Statistic: max C / min C across deltas.
ProbeReport stability_probe(const ModelSpec& model, const SimConfig& cfg, const VectorTuple& x0,
                            const VectorTuple& direction, const std::vector<double>& deltas,
                            double r, double max_ratio = 1.5);

// ---------------------------------------------------------------------------
// Convergence in n

enum class ValueMode { Grid, Oracle, MonteCarlo };
enum class TupleMode { Duplicate, Sample };

struct ConvergenceInput {
    ModelSpec model;
    EmpiricalMeasure target;
    std::vector<std::size_t> n_list;
    ValueMode value_mode = ValueMode::Grid;
    TupleMode tuple_mode = TupleMode::Duplicate;
    double t = 0.0;
    GridSpec grid;      // template; axes are replicated to n*d dimensions
    SimConfig sim;      // Monte Carlo mode: zero-control cost as an upper bound
    double r = 2.0;
    std::uint64_t seed = 0;
};

struct ConvergenceRow {
    std::size_t n = 0;
    double value = 0.0;
    double std_error = 0.0;
    double gap = 0.0;        // |value - previous value|, 0 on the first row
    double distance = 0.0;   // d_r(mu_x(n), target)
};

std::vector<ConvergenceRow> convergence_sweep(const ConvergenceInput& in);

} // namespace mfc
