#include "mfc/hjb_grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <ostream>
#include <set>

namespace mfc {

using nlohmann::json;

GridSpec GridSpec::uniform(std::size_t dims, double lower, double upper, std::size_t points) {
    GridSpec g;
    g.axes.assign(dims, GridAxis{lower, upper, points});
    return g;
}

void GridSpec::validate(std::size_t dims) const {
    if (axes.size() != dims) {
        throw ShapeError("GridSpec: expected " + std::to_string(dims) + " axes, got " +
                         std::to_string(axes.size()));
    }
    for (std::size_t a = 0; a < axes.size(); ++a) {
        if (axes[a].points < 8) throw DomainError("GridSpec: axis " + std::to_string(a) + " needs >= 8 points");
        if (!(axes[a].upper > axes[a].lower)) throw DomainError("GridSpec: axis " + std::to_string(a) + " has upper <= lower");
    }
    if (!(T > t0)) throw DomainError("GridSpec: need T > t0");
    if (!(margin >= 0.0 && margin < 0.5)) throw DomainError("GridSpec: margin must lie in [0, 0.5)");
    if (!(cfl_safety > 0.0 && cfl_safety <= 1.0)) throw DomainError("GridSpec: cfl_safety must lie in (0, 1]");
}

json GridSpec::to_json() const {
    json ax = json::array();
    for (const auto& a : axes) ax.push_back({{"lower", a.lower}, {"upper", a.upper}, {"points", a.points}});
    return {{"axes", ax},           {"t0", t0},         {"T", T},
            {"time_steps", time_steps}, {"cfl_safety", cfl_safety}, {"margin", margin},
            {"max_stored_values", max_stored_values}};
}

std::size_t default_grid_points(std::size_t dims) { return dims <= 1 ? 241 : dims == 2 ? 121 : 41; }

GridSpec GridSpec::from_json(const json& doc, std::size_t dims, const std::string& pointer) {
    if (!doc.is_object()) throw ConfigError(pointer, "grid must be an object");
    static const std::set<std::string> allowed{"axes", "lower", "upper", "points", "t0", "T",
                                               "time_steps", "cfl_safety", "margin",
                                               "max_stored_values"};
    for (const auto& [key, value] : doc.items()) {
        if (!allowed.contains(key)) throw ConfigError(pointer + "/" + key, "unknown key");
    }
    auto num = [&](const json& obj, const char* key, double fallback, const std::string& where) {
        if (!obj.contains(key)) return fallback;
        if (!obj.at(key).is_number()) throw ConfigError(where + "/" + key, "expected a number");
        return obj.at(key).get<double>();
    };
    auto count = [&](const json& obj, const char* key, std::size_t fallback, const std::string& where) {
        if (!obj.contains(key)) return fallback;
        if (!is_json_count(obj.at(key))) throw ConfigError(where + "/" + key, "expected a non-negative integer");
        return obj.at(key).get<std::size_t>();
    };
    GridSpec g;
    if (doc.contains("axes")) {
        const auto& axes = doc.at("axes");
        if (!axes.is_array()) throw ConfigError(pointer + "/axes", "expected an array");
        for (std::size_t a = 0; a < axes.size(); ++a) {
            const std::string ap = pointer + "/axes/" + std::to_string(a);
            if (!axes[a].is_object()) throw ConfigError(ap, "expected an object");
            for (const auto& [key, value] : axes[a].items()) {
                if (key != "lower" && key != "upper" && key != "points") throw ConfigError(ap + "/" + key, "unknown key");
            }
            g.axes.push_back({num(axes[a], "lower", -3.0, ap), num(axes[a], "upper", 3.0, ap),
                              count(axes[a], "points", default_grid_points(dims), ap)});
        }
    } else {
        g.axes.assign(dims, GridAxis{num(doc, "lower", -3.0, pointer), num(doc, "upper", 3.0, pointer),
                                     count(doc, "points", default_grid_points(dims), pointer)});
    }
    g.t0 = num(doc, "t0", 0.0, pointer);
    g.T = num(doc, "T", 1.0, pointer);
    g.time_steps = count(doc, "time_steps", 0, pointer);
    g.cfl_safety = num(doc, "cfl_safety", 0.9, pointer);
    g.margin = num(doc, "margin", 0.25, pointer);
    g.max_stored_values = count(doc, "max_stored_values", g.max_stored_values, pointer);
    try {
        g.validate(dims);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(pointer, e.what());
    }
    return g;
}

CflError::CflError(double required_dt, double dt, std::size_t slice)
    : DomainError("CFL violated at slice " + std::to_string(slice) + ": dt = " + std::to_string(dt) +
                  " exceeds the stability bound " + std::to_string(required_dt)),
      required_dt_(required_dt),
      slice_(slice) {}

// ---------------------------------------------------------------------------
// GridValueFunction

std::size_t GridValueFunction::node_count() const {
    std::size_t c = 1;
    for (const auto& a : spec.axes) c *= a.points;
    return c;
}

std::vector<std::size_t> GridValueFunction::multi_index(std::size_t node) const {
    std::vector<std::size_t> idx(dims());
    for (std::size_t a = dims(); a-- > 0;) {
        idx[a] = node % spec.axes[a].points;
        node /= spec.axes[a].points;
    }
    return idx;
}

std::size_t GridValueFunction::flat_index(std::span<const std::size_t> idx) const {
    std::size_t flat = 0;
    for (std::size_t a = 0; a < dims(); ++a) flat = flat * spec.axes[a].points + idx[a];
    return flat;
}

std::vector<double> GridValueFunction::coordinates(std::size_t node) const {
    const auto idx = multi_index(node);
    std::vector<double> x(dims());
    for (std::size_t a = 0; a < dims(); ++a) x[a] = spec.axes[a].coordinate(idx[a]);
    return x;
}

bool GridValueFunction::in_core(std::size_t node) const {
    const auto x = coordinates(node);
    for (std::size_t a = 0; a < dims(); ++a) {
        const auto& ax = spec.axes[a];
        const double cut = spec.margin * (ax.upper - ax.lower);
        const double eps = 1e-9 * ax.spacing();
        if (x[a] < ax.lower + cut - eps || x[a] > ax.upper - cut + eps) return false;
    }
    return true;
}

std::vector<std::size_t> GridValueFunction::core_nodes() const {
    std::vector<std::size_t> out;
    for (std::size_t q = 0; q < node_count(); ++q) {
        if (in_core(q)) out.push_back(q);
    }
    return out;
}

std::size_t GridValueFunction::nearest_slice(double t) const {
    const auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 0;
    if (it == times.end()) return times.size() - 1;
    const std::size_t hi = static_cast<std::size_t>(it - times.begin());
    return (t - times[hi - 1] <= times[hi] - t) ? hi - 1 : hi;
}

double GridValueFunction::interpolate(std::size_t slice, std::span<const double> x) const {
    return interpolate(values.at(slice), x);
}

double GridValueFunction::interpolate(std::span<const double> field, std::span<const double> x) const {
    const std::size_t D = dims();
    if (x.size() != D) throw ShapeError("interpolate: query has wrong dimension");
    std::vector<std::size_t> base(D);
    std::vector<double> w(D);
    for (std::size_t a = 0; a < D; ++a) {
        const auto& ax = spec.axes[a];
        const double h = ax.spacing();
        double s = std::clamp((x[a] - ax.lower) / h, 0.0, static_cast<double>(ax.points - 1));
        // Queries on a node must reproduce the node value exactly.
        if (std::abs(s - std::round(s)) < 1e-9) s = std::round(s);
        std::size_t i = static_cast<std::size_t>(std::floor(s));
        if (i >= ax.points - 1) i = ax.points - 2;
        base[a] = i;
        w[a] = s - static_cast<double>(i);
    }
    double total = 0.0;
    std::vector<std::size_t> idx(D);
    for (std::size_t corner = 0; corner < (std::size_t{1} << D); ++corner) {
        double weight = 1.0;
        for (std::size_t a = 0; a < D; ++a) {
            const bool up = (corner >> a) & 1U;
            idx[a] = base[a] + (up ? 1 : 0);
            weight *= up ? w[a] : 1.0 - w[a];
        }
        if (weight != 0.0) total += weight * field[flat_index(idx)];
    }
    return total;
}

// ---------------------------------------------------------------------------
// Solver

namespace {

/// Grid values with one ghost layer per side. Ghosts are linear extrapolations
/// filled axis by axis, so corner ghosts are consistent.
class PaddedField {
public:
    explicit PaddedField(const std::vector<std::size_t>& points) : points_(points) {
        const std::size_t D = points.size();
        stride_.assign(D, 1);
        for (std::size_t a = D; a-- > 1;) stride_[a - 1] = stride_[a] * (points[a] + 2);
        size_ = stride_[0] * (points[0] + 2);
        data_.assign(size_, 0.0);
        inner_.reserve(1);
        std::size_t nodes = 1;
        for (auto p : points) nodes *= p;
        inner_.resize(nodes);
        std::vector<std::size_t> idx(D, 0);
        for (std::size_t q = 0; q < nodes; ++q) {
            std::size_t rem = q, off = 0;
            for (std::size_t a = D; a-- > 0;) {
                idx[a] = rem % points[a];
                rem /= points[a];
            }
            for (std::size_t a = 0; a < D; ++a) off += (idx[a] + 1) * stride_[a];
            inner_[q] = off;
        }
    }

    std::size_t stride(std::size_t a) const { return stride_[a]; }
    std::size_t padded(std::size_t node) const { return inner_[node]; }
    const double* data() const { return data_.data(); }

    void load(std::span<const double> values) {
        for (std::size_t q = 0; q < inner_.size(); ++q) data_[inner_[q]] = values[q];
        const std::size_t D = points_.size();
        std::vector<std::size_t> idx(D);
        for (std::size_t a = 0; a < D; ++a) {
            // Every padded index with idx[a] == 0 or points+1; other axes range over
            // interior plus the ghosts of axes already processed.
            for (std::size_t off = 0; off < size_; ++off) {
                std::size_t rem = off;
                bool skip = false;
                for (std::size_t b = 0; b < D; ++b) {
                    idx[b] = rem / stride_[b];
                    rem %= stride_[b];
                }
                for (std::size_t b = a + 1; b < D; ++b) {
                    if (idx[b] == 0 || idx[b] == points_[b] + 1) skip = true;
                }
                if (skip) continue;
                const std::size_t s = stride_[a];
                if (idx[a] == 0) data_[off] = 2.0 * data_[off + s] - data_[off + 2 * s];
                else if (idx[a] == points_[a] + 1) data_[off] = 2.0 * data_[off - s] - data_[off - 2 * s];
            }
        }
    }

private:
    std::vector<std::size_t> points_;
    std::vector<std::size_t> stride_;
    std::size_t size_ = 0;
    std::vector<double> data_;
    std::vector<std::size_t> inner_;
};

struct NodeCoefficients {
    std::vector<double> drift;       // [node][axis]
    std::vector<double> diffusion;   // [node][axis][axis], A_n
    std::vector<double> running;     // (1/n) sum_i l_1(x_i, mu_x)
    std::vector<double> terminal;    // U_T(mu_x)
    double max_trace = 0.0;          // Lambda
};

NodeCoefficients precompute(const ModelSpec& model, std::size_t n, const GridValueFunction& g) {
    const std::size_t D = g.dims();
    const std::size_t N = g.node_count();
    const std::size_t dp = model.d_prime;
    const std::size_t block = model.d * dp;
    NodeCoefficients c;
    c.drift.assign(N * D, 0.0);
    c.diffusion.assign(N * D * D, 0.0);
    c.running.assign(N, 0.0);
    c.terminal.assign(N, 0.0);
    for (std::size_t q = 0; q < N; ++q) {
        const VectorTuple x(n, model.d, g.coordinates(q));
        LiftedCoefficients lc;
        try {
            lc = lifted_coefficients(model, x);
        } catch (const EvalError& e) {
            throw DomainError("solve_hjb: coefficients not evaluable at grid node " +
                              std::to_string(q) + ": " + e.what());
        }
        std::copy(lc.drift.flat().begin(), lc.drift.flat().end(), c.drift.begin() + static_cast<std::ptrdiff_t>(q * D));
        // (A_n)_{(i,k),(j,l)} = sum_m sigma_i[k,m] sigma_j[l,m]
        double trace = 0.0;
        for (std::size_t a = 0; a < D; ++a) {
            const std::size_t i = a / model.d, k = a % model.d;
            for (std::size_t b = 0; b < D; ++b) {
                const std::size_t j = b / model.d, l = b % model.d;
                double s = 0.0;
                for (std::size_t m = 0; m < dp; ++m) {
                    s += lc.diffusion[i * block + k * dp + m] * lc.diffusion[j * block + l * dp + m];
                }
                c.diffusion[(q * D + a) * D + b] = s;
            }
            trace += c.diffusion[(q * D + a) * D + a];
        }
        c.max_trace = std::max(c.max_trace, trace);
        c.running[q] = lc.running_l1;
        c.terminal[q] = lc.terminal;
    }
    return c;
}

double stable_dt(double safety, double max_trace, double theta_sum, double h) {
    const double denom = 2.0 * max_trace / (h * h) + theta_sum / h;
    return denom > 0.0 ? safety / denom : std::numeric_limits<double>::infinity();
}

/// Sum over axes of the grid-max wave speed |b_a| + n |D_a u| / kappa.
double wave_speed_sum(const GridValueFunction& g, const NodeCoefficients& c,
                      std::span<const double> values, double kappa) {
    const std::size_t D = g.dims();
    const auto grad = grid_gradient(g, values);
    double total = 0.0;
    for (std::size_t a = 0; a < D; ++a) {
        double best = 0.0;
        for (std::size_t q = 0; q < g.node_count(); ++q) {
            best = std::max(best, std::abs(c.drift[q * D + a]) +
                                      static_cast<double>(g.n) * std::abs(grad[a][q]) / kappa);
        }
        total += best;
    }
    return total;
}

double min_spacing(const GridSpec& grid) {
    double h = std::numeric_limits<double>::infinity();
    for (const auto& a : grid.axes) h = std::min(h, a.spacing());
    return h;
}

GridValueFunction make_shell(const ModelSpec& model, std::size_t n, const GridSpec& grid) {
    if (n == 0) throw DomainError("solve_hjb: n must be positive");
    if (n * model.d > 3) {
        throw ShapeError("solve_hjb: n*d = " + std::to_string(n * model.d) + " exceeds 3");
    }
    grid.validate(n * model.d);
    GridValueFunction g;
    g.spec = grid;
    g.model = model;
    g.n = n;
    g.d = model.d;
    return g;
}

} // namespace

double cfl_time_step(const ModelSpec& model, std::size_t n, const GridSpec& grid) {
    GridValueFunction g = make_shell(model, n, grid);
    const NodeCoefficients c = precompute(model, n, g);
    const double theta = wave_speed_sum(g, c, c.terminal, model.kappa);
    return stable_dt(grid.cfl_safety, c.max_trace, theta, min_spacing(grid));
}

GridValueFunction solve_hjb(const ModelSpec& model, std::size_t n, const GridSpec& grid) {
    GridValueFunction g = make_shell(model, n, grid);
    const std::size_t D = g.dims();
    const std::size_t N = g.node_count();
    const NodeCoefficients coef = precompute(model, n, g);
    const double h_min = min_spacing(grid);
    const double horizon = grid.T - grid.t0;
    const double dn = static_cast<double>(n);

    const double theta0 = wave_speed_sum(g, coef, coef.terminal, model.kappa);
    const double dt_bound = stable_dt(grid.cfl_safety, coef.max_trace, theta0, h_min);
    std::size_t K = grid.time_steps;
    if (K == 0) {
        K = static_cast<std::size_t>(std::ceil(horizon / dt_bound));
        K = std::max<std::size_t>(K, 1);
    }
    const double dt = horizon / static_cast<double>(K);
    if (dt > dt_bound * (1.0 + 1e-12)) throw CflError(dt_bound, dt, K);
    g.time_steps = K;
    g.dt = dt;
    g.save_every = std::max<std::size_t>(1, (K * N + grid.max_stored_values - 1) / grid.max_stored_values);

    std::vector<double> spacing(D);
    std::vector<std::size_t> points(D);
    for (std::size_t a = 0; a < D; ++a) {
        spacing[a] = grid.axes[a].spacing();
        points[a] = grid.axes[a].points;
    }
    PaddedField field(points);
    std::vector<double> cur = coef.terminal;
    std::vector<double> next(N);
    std::map<std::size_t, std::vector<double>> stored;
    stored.emplace(K, cur);

    std::vector<double> grad(D), second(D);
    for (std::size_t step = K; step-- > 0;) {
        field.load(cur);
        const double* u = field.data();
        std::vector<double> theta_max(D, 0.0);
        for (std::size_t q = 0; q < N; ++q) {
            const std::size_t p = field.padded(q);
            const double uc = u[p];
            const double* b = coef.drift.data() + q * D;
            const double* A = coef.diffusion.data() + q * D * D;
            double diffusion = 0.0;
            double hamiltonian_term = coef.running[q];
            double viscosity = 0.0;
            double grad_sq = 0.0;
            for (std::size_t a = 0; a < D; ++a) {
                const std::size_t s = field.stride(a);
                const double up = u[p + s], um = u[p - s];
                const double h = spacing[a];
                grad[a] = (up - um) / (2.0 * h);
                second[a] = (up - 2.0 * uc + um) / (h * h);
                diffusion += 0.5 * A[a * D + a] * second[a];
                hamiltonian_term += b[a] * grad[a];
                grad_sq += grad[a] * grad[a];
                // Local Lax-Friedrichs: only the viscosity the diffusion lacks for monotonicity.
                const double theta = std::abs(b[a]) + dn * std::abs(grad[a]) / model.kappa;
                theta_max[a] = std::max(theta_max[a], theta);
                const double nu = std::max(0.0, 0.5 * theta * h - 0.5 * A[a * D + a]);
                viscosity += nu * second[a];
            }
            for (std::size_t a = 0; a < D; ++a) {
                for (std::size_t c = a + 1; c < D; ++c) {
                    const double Aac = A[a * D + c];
                    if (Aac == 0.0) continue;
                    const std::size_t sa = field.stride(a), sc = field.stride(c);
                    const double cross = (u[p + sa + sc] - u[p + sa - sc] - u[p - sa + sc] + u[p - sa - sc]) /
                                         (4.0 * spacing[a] * spacing[c]);
                    diffusion += Aac * cross;
                }
            }
            // -(1/n) sum_i H(x_i, mu, n D_i u) with H = -b.p - l_1 + |p|^2 / (2 kappa).
            hamiltonian_term -= dn * grad_sq / (2.0 * model.kappa);
            next[q] = uc + dt * (diffusion + hamiltonian_term + viscosity);
        }
        double theta_sum = 0.0;
        for (double t : theta_max) theta_sum += t;
        const double bound = stable_dt(1.0, coef.max_trace, theta_sum, h_min);
        if (dt > bound) throw CflError(bound * grid.cfl_safety, dt, step);
        for (std::size_t q = 0; q < N; ++q) {
            if (!std::isfinite(next[q])) {
                throw NumericalError("solve_hjb: non-finite value at slice " + std::to_string(step) +
                                         ", node " + std::to_string(q),
                                     step);
            }
        }
        std::swap(cur, next);
        if (step % g.save_every == 0) stored.emplace(step, cur);
    }
    for (auto& [step, slice] : stored) {
        g.times.push_back(step == K ? grid.T : grid.t0 + static_cast<double>(step) * dt);
        g.values.push_back(std::move(slice));
    }
    return g;
}

std::vector<std::vector<double>> grid_gradient(const GridValueFunction& u, std::size_t slice) {
    return grid_gradient(u, u.values.at(slice));
}

std::vector<std::vector<double>> grid_gradient(const GridValueFunction& u,
                                               std::span<const double> field) {
    const std::size_t D = u.dims();
    const std::size_t N = u.node_count();
    std::vector<std::vector<double>> grad(D, std::vector<double>(N, 0.0));
    std::vector<std::size_t> stride(D, 1);
    for (std::size_t a = D; a-- > 1;) stride[a - 1] = stride[a] * u.spec.axes[a].points;
    for (std::size_t q = 0; q < N; ++q) {
        const auto idx = u.multi_index(q);
        for (std::size_t a = 0; a < D; ++a) {
            const double h = u.spec.axes[a].spacing();
            const std::size_t last = u.spec.axes[a].points - 1;
            if (idx[a] == 0) {
                grad[a][q] = (field[q + stride[a]] - field[q]) / h;
            } else if (idx[a] == last) {
                grad[a][q] = (field[q] - field[q - stride[a]]) / h;
            } else {
                grad[a][q] = (field[q + stride[a]] - field[q - stride[a]]) / (2.0 * h);
            }
        }
    }
    return grad;
}

MarkovFeedback synthesize_feedback(const GridValueFunction& u) {
    struct Shared {
        GridValueFunction grid;  // values replaced by gradient slices per axis
        std::vector<std::vector<std::vector<double>>> gradients;  // [slice][axis][node]
    };
    auto shared = std::make_shared<Shared>();
    shared->grid.spec = u.spec;
    shared->grid.n = u.n;
    shared->grid.d = u.d;
    shared->grid.times = u.times;
    shared->grid.model = u.model;
    for (std::size_t s = 0; s < u.slice_count(); ++s) shared->gradients.push_back(grid_gradient(u, s));
    const double kappa = u.model.kappa;
    MarkovFeedback policy;
    policy.id = "grid-feedback";
    policy.fn = [shared, kappa](double s, const VectorTuple& x) {
        const GridValueFunction& g = shared->grid;
        const std::size_t slice = g.nearest_slice(s);
        const auto& grad = shared->gradients[slice];
        const std::vector<double>& coords = x.flat();
        VectorTuple a(x.n(), x.d());
        const double dn = static_cast<double>(g.n);
        for (std::size_t axis = 0; axis < coords.size(); ++axis) {
            const double p = dn * g.interpolate(grad[axis], coords);
            a.flat()[axis] = feedback_map(std::span<const double>(&p, 1), kappa)[0];
        }
        return a;
    };
    return policy;
}

RiccatiSolution riccati_lq_solve(double sigma, double kappa, double T, double t0,
                                 std::size_t steps) {
    if (!(kappa > 0.0)) throw DomainError("riccati_lq_solve: kappa must be positive");
    if (!(T >= t0) || steps == 0) throw DomainError("riccati_lq_solve: need T >= t0 and steps > 0");
    // Integrate in reversed time tau = T - t: dP/dtau = -P^2/kappa, dr/dtau = sigma^2 P / 2.
    const double h = (T - t0) / static_cast<double>(steps);
    const double s2 = sigma * sigma;
    auto rhs = [&](double P) { return std::pair{-P * P / kappa, 0.5 * s2 * P}; };
    RiccatiSolution sol;
    sol.times.resize(steps + 1);
    sol.P.resize(steps + 1);
    sol.r.resize(steps + 1);
    double P = 1.0, r = 0.0;
    sol.times[steps] = T;
    sol.P[steps] = P;
    sol.r[steps] = r;
    for (std::size_t k = steps; k-- > 0;) {
        const auto [k1p, k1r] = rhs(P);
        const auto [k2p, k2r] = rhs(P + 0.5 * h * k1p);
        const auto [k3p, k3r] = rhs(P + 0.5 * h * k2p);
        const auto [k4p, k4r] = rhs(P + h * k3p);
        P += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        r += h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
        sol.times[k] = k == 0 ? t0 : T - static_cast<double>(steps - k) * h;
        sol.P[k] = P;
        sol.r[k] = r;
    }
    return sol;
}

double riccati_lq_value(double sigma, double kappa, double T, double t, const VectorTuple& x,
                        std::size_t steps) {
    if (x.d() != 1 || x.n() == 0) throw ShapeError("riccati_lq_value: expects a non-empty d = 1 tuple");
    if (t > T) throw DomainError("riccati_lq_value: t > T");
    double P = 1.0, r = 0.0;
    if (t < T) {
        const auto sol = riccati_lq_solve(sigma, kappa, T, t, steps);
        P = sol.P.front();
        r = sol.r.front();
    }
    double total = 0.0;
    for (std::size_t i = 0; i < x.n(); ++i) total += P * x[i][0] * x[i][0] / 2.0 + r;
    return total / static_cast<double>(x.n());
}

void write_value_csv(const GridValueFunction& u, std::ostream& out, std::size_t every) {
    every = std::max<std::size_t>(every, 1);
    out << "slice,node,value\n";
    out.precision(17);
    for (std::size_t s = 0; s < u.slice_count(); ++s) {
        if (s % every != 0 && s + 1 != u.slice_count()) continue;
        for (std::size_t q = 0; q < u.node_count(); ++q) out << s << ',' << q << ',' << u.values[s][q] << '\n';
    }
}

json value_function_sidecar(const GridValueFunction& u) {
    return {{"grid", u.spec.to_json()},
            {"model", u.model.to_json()},
            {"n", u.n},
            {"d", u.d},
            {"time_steps", u.time_steps},
            {"dt", u.dt},
            {"save_every", u.save_every},
            {"times", u.times}};
}

} // namespace mfc
