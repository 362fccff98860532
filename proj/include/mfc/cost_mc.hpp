#pragma once

#include <string>
#include <vector>

#include "mfc/particle_sim.hpp"

namespace mfc {

/// Monte Carlo estimate of a control cost with its additive breakdown.
struct CostEstimate {
    double mean = 0.0;  // running_l1 + running_l2 + terminal
    double std_error = 0.0;
    std::size_t n_paths = 0;
    double running_l1 = 0.0;
    double running_l2 = 0.0;
    double terminal = 0.0;
    bool valid = true;
    std::vector<std::string> diagnostics;
    std::vector<double> per_path;  // path totals, kept for paired comparisons
};

/// J_n(t, x; a): left-endpoint quadrature of (1/n) sum_i (l_1 + l_2) plus U_T.
CostEstimate cost_finite(const ModelSpec& model, const SimConfig& cfg, const VectorTuple& x0,
                         const ControlPolicy& policy);

/// J(t, X; a) on E_n atoms: the same quadrature applied to L_1, L_2 and U_T.
CostEstimate cost_lifted(const ModelSpec& model, const SimConfig& cfg, const VectorTuple& atoms,
                         const LiftedPolicy& policy);

/// Cost of an already simulated particle bundle.
CostEstimate cost_of_bundle(const ModelSpec& model, const PathBundle& bundle);

/// Mean and standard error of the path-wise difference a - b (same noise).
MeanWithError paired_difference(const CostEstimate& a, const CostEstimate& b);

struct PolicyComparison {
    std::vector<std::string> ids;
    std::vector<CostEstimate> estimates;
    std::vector<std::size_t> ranking;  // indices, cheapest first
    /// diff[i][j] = estimate i minus estimate j, path-paired.
    std::vector<std::vector<MeanWithError>> differences;
};

/// Evaluates every policy on identical noise (common random numbers).
PolicyComparison policy_compare(const ModelSpec& model, const SimConfig& cfg,
                                const VectorTuple& x0, const std::vector<ControlPolicy>& policies);

std::string hash_tuple(const VectorTuple& x);
std::string cost_csv_header();
std::string cost_csv_row(const std::string& model_id, const SimConfig& cfg, const VectorTuple& x0,
                         const std::string& policy, const CostEstimate& est);

} // namespace mfc
