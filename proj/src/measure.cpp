#include "mfc/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mfc {

VectorTuple::VectorTuple(std::size_t n, std::size_t d, double fill)
    : n_(n), d_(d), data_(n * d, fill) {}

VectorTuple::VectorTuple(std::size_t n, std::size_t d, std::vector<double> flat)
    : n_(n), d_(d), data_(std::move(flat)) {
    if (data_.size() != n_ * d_) {
        throw ShapeError("VectorTuple: flat size " + std::to_string(data_.size()) +
                         " != n*d = " + std::to_string(n_ * d_));
    }
}

VectorTuple VectorTuple::from_points(const std::vector<std::vector<double>>& points) {
    if (points.empty()) return {};
    const std::size_t d = points.front().size();
    std::vector<double> flat;
    flat.reserve(points.size() * d);
    for (const auto& p : points) {
        if (p.size() != d) throw ShapeError("VectorTuple: ragged point list");
        flat.insert(flat.end(), p.begin(), p.end());
    }
    return VectorTuple(points.size(), d, std::move(flat));
}

std::vector<std::vector<double>> VectorTuple::to_points() const {
    std::vector<std::vector<double>> out(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        out[i].assign(data_.begin() + static_cast<std::ptrdiff_t>(i * d_),
                      data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * d_));
    }
    return out;
}

EmpiricalMeasure::EmpiricalMeasure(VectorTuple atoms) : atoms_(std::move(atoms)) {
    if (atoms_.n() == 0 || atoms_.d() == 0) {
        throw ShapeError("EmpiricalMeasure: need at least one atom of positive dimension");
    }
    for (double v : atoms_.flat()) {
        if (!std::isfinite(v)) throw DomainError("EmpiricalMeasure: non-finite coordinate");
    }
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::span<const double> point, std::size_t copies) {
    VectorTuple atoms(copies, point.size());
    for (std::size_t i = 0; i < copies; ++i) std::ranges::copy(point, atoms[i].begin());
    return EmpiricalMeasure(std::move(atoms));
}

namespace {

std::vector<std::vector<double>> sorted_points(const VectorTuple& t) {
    auto pts = t.to_points();
    std::ranges::sort(pts);
    return pts;
}

double point_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
    }
    return std::sqrt(s);
}

double point_norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

std::vector<double> cost_matrix(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                double r) {
    const std::size_t n = mu.n();
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            cost[i * n + j] = std::pow(point_distance(mu.atom(i), nu.atom(j)), r);
        }
    }
    return cost;
}

void check_same_dim(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.d() != nu.d()) throw ShapeError("measures live in different dimensions");
}

} // namespace

bool EmpiricalMeasure::operator==(const EmpiricalMeasure& other) const {
    if (n() != other.n() || d() != other.d()) return false;
    return sorted_points(atoms_) == sorted_points(other.atoms_);
}

void check_r(double r) {
    if (!(r >= 1.0 && r <= 2.0)) {
        throw DomainError("exponent r must lie in [1,2], got " + std::to_string(r));
    }
}

double moment_r(const EmpiricalMeasure& mu, double r) {
    check_r(r);
    double s = 0.0;
    for (std::size_t i = 0; i < mu.n(); ++i) s += std::pow(point_norm(mu.atom(i)), r);
    return s / static_cast<double>(mu.n());
}

double rnorm(const VectorTuple& x, double r) {
    check_r(r);
    if (x.n() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < x.n(); ++i) s += std::pow(point_norm(x[i]), r);
    return std::pow(s / static_cast<double>(x.n()), 1.0 / r);
}

double rdistance(const VectorTuple& x, const VectorTuple& y, double r) {
    check_r(r);
    if (x.n() != y.n() || x.d() != y.d()) throw ShapeError("rdistance: shape mismatch");
    if (x.n() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < x.n(); ++i) s += std::pow(point_distance(x[i], y[i]), r);
    return std::pow(s / static_cast<double>(x.n()), 1.0 / r);
}

std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n) {
    // Potentials u (rows), v (columns); 1-based with a virtual column 0.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n);
    for (std::size_t j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

std::vector<std::size_t> optimal_assignment(const EmpiricalMeasure& mu,
                                            const EmpiricalMeasure& nu, double r) {
    check_r(r);
    check_same_dim(mu, nu);
    if (mu.n() != nu.n()) throw ShapeError("optimal_assignment: unequal atom counts");
    const auto cost = cost_matrix(mu, nu, r);
    return solve_assignment(cost, mu.n());
}

namespace {

double quantile_coupling_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double r) {
    std::vector<double> a(mu.atoms().flat()), b(nu.atoms().flat());
    std::ranges::sort(a);
    std::ranges::sort(b);
    const double wa = 1.0 / static_cast<double>(a.size());
    const double wb = 1.0 / static_cast<double>(b.size());
    // Walk the common refinement of the two cumulative distribution functions
    // in integer units of 1/(n m) to avoid drift.
    const std::size_t n = a.size(), m = b.size();
    std::size_t i = 0, j = 0, left_a = m, left_b = n;
    double total = 0.0;
    const double unit = wa * wb;
    while (i < n && j < m) {
        const std::size_t step = std::min(left_a, left_b);
        total += static_cast<double>(step) * unit * std::pow(std::abs(a[i] - b[j]), r);
        left_a -= step;
        left_b -= step;
        if (left_a == 0) {
            ++i;
            left_a = m;
        }
        if (left_b == 0) {
            ++j;
            left_b = n;
        }
    }
    return std::pow(total, 1.0 / r);
}

} // namespace

double wasserstein_r(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double r) {
    check_r(r);
    check_same_dim(mu, nu);
    if (mu.n() != nu.n()) {
        if (mu.d() != 1) {
            throw ShapeError("wasserstein_r: unequal atom counts are only supported for d = 1");
        }
        return quantile_coupling_1d(mu, nu, r);
    }
    const std::size_t n = mu.n();
    const auto cost = cost_matrix(mu, nu, r);
    const auto match = solve_assignment(cost, n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += cost[i * n + match[i]];
    return std::pow(total / static_cast<double>(n), 1.0 / r);
}

double brute_force_wasserstein(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                               double r) {
    check_r(r);
    check_same_dim(mu, nu);
    if (mu.n() != nu.n()) throw ShapeError("brute_force_wasserstein: unequal atom counts");
    const std::size_t n = mu.n();
    if (n > 8) throw ShapeError("brute_force_wasserstein: refuses n > 8");
    const auto cost = cost_matrix(mu, nu, r);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += cost[i * n + perm[i]];
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::pow(best / static_cast<double>(n), 1.0 / r);
}

VectorTuple duplicate_atoms(const VectorTuple& x, std::size_t m) {
    if (m == 0) throw DomainError("duplicate_atoms: m must be positive");
    VectorTuple out(x.n() * m, x.d());
    for (std::size_t i = 0; i < x.n(); ++i) {
        for (std::size_t c = 0; c < m; ++c) std::ranges::copy(x[i], out[i * m + c].begin());
    }
    return out;
}

} // namespace mfc
