#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfc/measure.hpp"
#include "mfc/model.hpp"
#include "mfc/particle_sim.hpp"

namespace mfc {

struct GridAxis {
    double lower = -3.0;
    double upper = 3.0;
    std::size_t points = 241;

    double spacing() const { return (upper - lower) / static_cast<double>(points - 1); }
    double coordinate(std::size_t i) const { return lower + static_cast<double>(i) * spacing(); }
};

/// Tensor grid over (R^d)^n, one axis per particle coordinate (axis i*d + c).
struct GridSpec {
    std::vector<GridAxis> axes;
    double t0 = 0.0;
    double T = 1.0;
    std::size_t time_steps = 0;   // 0 selects the CFL step automatically
    double cfl_safety = 0.9;
    double margin = 0.25;         // fraction of each axis excluded from the core region
    std::size_t max_stored_values = std::size_t{1} << 24;

    static GridSpec uniform(std::size_t dims, double lower, double upper, std::size_t points);
    void validate(std::size_t dims) const;
    nlohmann::json to_json() const;
    static GridSpec from_json(const nlohmann::json& doc, std::size_t dims, const std::string& pointer = "");
};

/// Points per axis when a config leaves them out: 241, 121, then 41 for three axes.
std::size_t default_grid_points(std::size_t dims);

/// Raised when a requested time step violates the explicit stability bound.
class CflError : public DomainError {
public:
    CflError(double required_dt, double dt, std::size_t slice);
    double required_dt() const { return required_dt_; }
    std::size_t slice() const { return slice_; }

private:
    double required_dt_;
    std::size_t slice_;
};

/// Raised when the solution stops being finite.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, std::size_t slice)
        : std::runtime_error(what), slice_(slice) {}
    std::size_t slice() const { return slice_; }

private:
    std::size_t slice_;
};

/// Numerical solution u_n(t, .) on a tensor grid. Slices are stored in
/// ascending time; the last one is the terminal condition.
class GridValueFunction {
public:
    GridSpec spec;
    ModelSpec model;
    std::size_t n = 1;
    std::size_t d = 1;
    std::size_t time_steps = 0;
    double dt = 0.0;
    std::size_t save_every = 1;
    std::vector<double> times;
    std::vector<std::vector<double>> values;

    std::size_t dims() const { return spec.axes.size(); }
    std::size_t node_count() const;
    std::size_t slice_count() const { return values.size(); }
    std::vector<std::size_t> multi_index(std::size_t node) const;
    std::size_t flat_index(std::span<const std::size_t> idx) const;
    std::vector<double> coordinates(std::size_t node) const;
    bool in_core(std::size_t node) const;
    std::vector<std::size_t> core_nodes() const;

    std::size_t nearest_slice(double t) const;
    /// Multilinear interpolation of a stored slice; queries outside the grid are clamped.
    double interpolate(std::size_t slice, std::span<const double> x) const;
    double interpolate(std::span<const double> field, std::span<const double> x) const;
    double value(double t, std::span<const double> x) const {
        return interpolate(nearest_slice(t), x);
    }
};

/// Explicit backward solve of
///   u_t + 1/2 Tr(A_n D^2 u) - (1/n) sum_i H(x_i, mu_x, n D_{x_i} u) = 0,
///   u(T, x) = U_T(mu_x).
GridValueFunction solve_hjb(const ModelSpec& model, std::size_t n, const GridSpec& grid);

/// Largest stable time step for the terminal slice.
double cfl_time_step(const ModelSpec& model, std::size_t n, const GridSpec& grid);

/// D_{x} u on every node of a slice: [axis][node]. Central differences in the
/// interior, one-sided on the boundary.
std::vector<std::vector<double>> grid_gradient(const GridValueFunction& u, std::size_t slice);
std::vector<std::vector<double>> grid_gradient(const GridValueFunction& u,
                                               std::span<const double> field);

/// a_i(s, x) = (D l_2)^{-1}(n D_{x_i} u(s, x)); gradients interpolated
/// multilinearly in space, nearest stored slice in time.
MarkovFeedback synthesize_feedback(const GridValueFunction& u);

struct RiccatiSolution {
    std::vector<double> times;  // ascending, last entry is T
    std::vector<double> P;
    std::vector<double> r;
};

/// RK4 for P' = P^2 / kappa, r' = -sigma^2 P / 2 backward from P(T) = 1, r(T) = 0.
RiccatiSolution riccati_lq_solve(double sigma, double kappa, double T, double t0,
                                 std::size_t steps);

/// (1/n) sum_i [P(t) x_i^2 / 2 + r(t)] for the decoupled LQ model
/// (b = 0, l_1 = 0, constant sigma, U_T = m2/2), d = 1.
double riccati_lq_value(double sigma, double kappa, double T, double t, const VectorTuple& x,
                        std::size_t steps = 10000);

/// CSV "slice,node,value" for every `every`-th stored slice (and the last one).
void write_value_csv(const GridValueFunction& u, std::ostream& out, std::size_t every);
nlohmann::json value_function_sidecar(const GridValueFunction& u);

} // namespace mfc
