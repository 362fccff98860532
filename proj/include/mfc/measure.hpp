#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfc {

/// Raised when a real parameter falls outside its admissible range.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised for input shapes an operation deliberately does not support.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Ordered state vector x = (x_1, ..., x_n) in (R^d)^n, stored flat (n*d).
class VectorTuple {
public:
    VectorTuple() = default;
    VectorTuple(std::size_t n, std::size_t d, double fill = 0.0);
    VectorTuple(std::size_t n, std::size_t d, std::vector<double> flat);

    /// Builds a tuple from nested point lists; all points must share a dimension.
    static VectorTuple from_points(const std::vector<std::vector<double>>& points);

    std::size_t n() const { return n_; }
    std::size_t d() const { return d_; }
    bool empty() const { return n_ == 0; }

    std::span<double> operator[](std::size_t i) { return {data_.data() + i * d_, d_}; }
    std::span<const double> operator[](std::size_t i) const { return {data_.data() + i * d_, d_}; }

    std::vector<double>& flat() { return data_; }
    const std::vector<double>& flat() const { return data_; }

    std::vector<std::vector<double>> to_points() const;

    bool operator==(const VectorTuple& other) const = default;

private:
    std::size_t n_ = 0;
    std::size_t d_ = 0;
    std::vector<double> data_;
};

/// Uniformly weighted empirical measure (1/n) sum_i delta_{x_i}. The same atom
/// list is the piecewise-constant lift sum_i x_i 1_{A_i^n} on (0,1).
class EmpiricalMeasure {
public:
    EmpiricalMeasure() = default;
    explicit EmpiricalMeasure(VectorTuple atoms);

    static EmpiricalMeasure from_points(const std::vector<std::vector<double>>& points) {
        return EmpiricalMeasure(VectorTuple::from_points(points));
    }
    static EmpiricalMeasure dirac(std::span<const double> point, std::size_t copies = 1);

    std::size_t n() const { return atoms_.n(); }
    std::size_t d() const { return atoms_.d(); }
    std::span<const double> atom(std::size_t i) const { return atoms_[i]; }
    const VectorTuple& atoms() const { return atoms_; }

    /// Permutation-invariant: compares lexicographically sorted atom lists.
    bool operator==(const EmpiricalMeasure& other) const;

private:
    VectorTuple atoms_;
};

/// Forgets the order of x.
inline EmpiricalMeasure to_measure(const VectorTuple& x) { return EmpiricalMeasure(x); }

void check_r(double r);

/// M_r(mu) = (1/n) sum |x_i|^r.
double moment_r(const EmpiricalMeasure& mu, double r);

/// |x|_r = n^{-1/r} (sum |x_i|^r)^{1/r}.
double rnorm(const VectorTuple& x, double r);

/// |x - y|_r without materializing the difference.
double rdistance(const VectorTuple& x, const VectorTuple& y, double r);

/// Optimal bijection for the cost |x_i - y_j|^r (equal counts). Entry i holds
/// the index j of nu matched to atom i of mu.
std::vector<std::size_t> optimal_assignment(const EmpiricalMeasure& mu,
                                            const EmpiricalMeasure& nu, double r);

/// Wasserstein distance d_r between empirical measures. Equal counts use an
/// exact assignment solver; unequal counts are supported only for d == 1
/// (quantile coupling).
double wasserstein_r(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double r);

/// Minimum over all n! bijections. Refuses n > 8.
double brute_force_wasserstein(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                               double r);

/// Repeats each point m times (x_1 m times, then x_2, ...).
VectorTuple duplicate_atoms(const VectorTuple& x, std::size_t m);

/// Solves a dense square assignment problem (minimization) with the
/// shortest augmenting path method. Returns row -> column.
std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n);

} // namespace mfc
