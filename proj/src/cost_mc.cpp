#include "mfc/cost_mc.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace mfc {

namespace {

struct PathCost {
    double l1 = 0.0;
    double l2 = 0.0;
    double terminal = 0.0;
};

CostEstimate summarize(const std::vector<PathCost>& paths, const PathBundle& bundle) {
    CostEstimate est;
    est.n_paths = bundle.n_paths;
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        if (!bundle.alive[p]) {
            est.valid = false;
            est.diagnostics.push_back(bundle.diagnostics[p]);
        }
    }
    if (!est.valid) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        est.mean = est.std_error = est.running_l1 = est.running_l2 = est.terminal = nan;
        return est;
    }
    std::vector<double> l1(paths.size()), l2(paths.size()), term(paths.size());
    est.per_path.resize(paths.size());
    for (std::size_t p = 0; p < paths.size(); ++p) {
        l1[p] = paths[p].l1;
        l2[p] = paths[p].l2;
        term[p] = paths[p].terminal;
        est.per_path[p] = paths[p].l1 + paths[p].l2 + paths[p].terminal;
    }
    est.running_l1 = mean_and_error(l1).mean;
    est.running_l2 = mean_and_error(l2).mean;
    est.terminal = mean_and_error(term).mean;
    est.mean = est.running_l1 + est.running_l2 + est.terminal;
    est.std_error = mean_and_error(est.per_path).std_error;
    return est;
}

} // namespace

CostEstimate cost_of_bundle(const ModelSpec& model, const PathBundle& bundle) {
    std::vector<PathCost> paths(bundle.n_paths);
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        if (!bundle.alive[p]) continue;
        PathCost& c = paths[p];
        for (std::size_t k = 0; k < bundle.steps; ++k) {
            const VectorTuple x = bundle.state_tuple(p, k);
            const VectorTuple a = bundle.control_tuple(p, k);
            const MeasureFeatures f = MeasureFeatures::of(x);
            double l1 = 0.0, l2 = 0.0;
            for (std::size_t i = 0; i < x.n(); ++i) {
                l1 += model.l1_at(x[i], f);
                l2 += l2_cost(a[i], model.kappa);
            }
            c.l1 += bundle.dt * (l1 / static_cast<double>(x.n()));
            c.l2 += bundle.dt * (l2 / static_cast<double>(x.n()));
        }
        c.terminal = model.terminal_at(MeasureFeatures::of(bundle.state_tuple(p, bundle.steps)));
    }
    return summarize(paths, bundle);
}

CostEstimate cost_finite(const ModelSpec& model, const SimConfig& cfg, const VectorTuple& x0,
                         const ControlPolicy& policy) {
    return cost_of_bundle(model, simulate_particles(model, cfg, x0, policy));
}

CostEstimate cost_lifted(const ModelSpec& model, const SimConfig& cfg, const VectorTuple& atoms,
                         const LiftedPolicy& policy) {
    const PathBundle bundle = simulate_lifted_atoms(model, cfg, atoms, policy);
    std::vector<PathCost> paths(bundle.n_paths);
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        if (!bundle.alive[p]) continue;
        PathCost& c = paths[p];
        for (std::size_t k = 0; k < bundle.steps; ++k) {
            const LiftedCoefficients lc = lifted_coefficients(model, bundle.state_tuple(p, k), false);
            // L_2(a) = integral over (0,1) of l_2(a(w)); a is constant on each A_i^n.
            const VectorTuple a = bundle.control_tuple(p, k);
            double l2 = 0.0;
            for (std::size_t i = 0; i < a.n(); ++i) l2 += l2_cost(a[i], model.kappa);
            c.l1 += bundle.dt * lc.running_l1;
            c.l2 += bundle.dt * (l2 / static_cast<double>(a.n()));
        }
        c.terminal = lifted_coefficients(model, bundle.state_tuple(p, bundle.steps)).terminal;
    }
    return summarize(paths, bundle);
}

MeanWithError paired_difference(const CostEstimate& a, const CostEstimate& b) {
    if (a.per_path.size() != b.per_path.size()) {
        throw ShapeError("paired_difference: estimates use different path counts");
    }
    std::vector<double> diff(a.per_path.size());
    for (std::size_t p = 0; p < diff.size(); ++p) diff[p] = a.per_path[p] - b.per_path[p];
    return mean_and_error(diff);
}

PolicyComparison policy_compare(const ModelSpec& model, const SimConfig& cfg,
                                const VectorTuple& x0, const std::vector<ControlPolicy>& policies) {
    if (policies.size() < 2) throw DomainError("policy_compare: need at least two policies");
    PolicyComparison cmp;
    for (const auto& policy : policies) {
        cmp.ids.push_back(policy_id(policy));
        cmp.estimates.push_back(cost_finite(model, cfg, x0, policy));
    }
    cmp.ranking.resize(policies.size());
    std::iota(cmp.ranking.begin(), cmp.ranking.end(), 0);
    std::ranges::stable_sort(cmp.ranking, [&](std::size_t i, std::size_t j) {
        return cmp.estimates[i].mean < cmp.estimates[j].mean;
    });
    const std::size_t m = policies.size();
    cmp.differences.assign(m, std::vector<MeanWithError>(m));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (cmp.estimates[i].valid && cmp.estimates[j].valid) {
                cmp.differences[i][j] = paired_difference(cmp.estimates[i], cmp.estimates[j]);
            } else {
                const double nan = std::numeric_limits<double>::quiet_NaN();
                cmp.differences[i][j] = {nan, nan};
            }
        }
    }
    return cmp;
}

std::string hash_tuple(const VectorTuple& x) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xffULL;
            h *= 0x100000001b3ULL;
        }
    };
    feed(x.n());
    feed(x.d());
    for (double v : x.flat()) feed(std::bit_cast<std::uint64_t>(v));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string cost_csv_header() {
    return "model_id,n,t0,x0_hash,policy_id,mean,std_error,n_paths,dt";
}

std::string cost_csv_row(const std::string& model_id, const SimConfig& cfg, const VectorTuple& x0,
                         const std::string& policy, const CostEstimate& est) {
    std::ostringstream os;
    os.precision(17);
    os << model_id << ',' << x0.n() << ',' << cfg.t0 << ',' << hash_tuple(x0) << ',' << policy << ','
       << est.mean << ',' << est.std_error << ',' << est.n_paths << ',' << cfg.dt();
    return os.str();
}

} // namespace mfc
