#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfc/expr.hpp"
#include "mfc/measure.hpp"

namespace mfc {

/// Schema violation in a JSON document; carries the JSON pointer of the
/// offending value.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string pointer, const std::string& message)
        : std::runtime_error((pointer.empty() ? std::string("/") : pointer) + ": " + message),
          pointer_(std::move(pointer)),
          message_(message) {}
    const std::string& pointer() const { return pointer_; }
    const std::string& message() const { return message_; }

private:
    std::string pointer_;
    std::string message_;
};

/// True for JSON integers >= 0, whether stored signed or unsigned.
inline bool is_json_count(const nlohmann::json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

/// Coefficient bundle (b, sigma, l_1, l_2 = kappa |a|^2 / 2, U_T).
struct ModelSpec {
    std::string id = "custom";
    std::size_t d = 1;
    std::size_t d_prime = 1;
    std::vector<CoefficientExpr> drift;      // d entries
    std::vector<CoefficientExpr> diffusion;  // d x d', row-major
    CoefficientExpr running_l1;
    double kappa = 1.0;
    CoefficientExpr terminal;
    bool is_affine_lift = false;
    bool lift_convex = false;

    /// Throws ConfigError if shapes or kappa are inconsistent.
    void validate() const;

    void drift_at(std::span<const double> x, const MeasureFeatures& f, std::span<double> out) const;
    void diffusion_at(std::span<const double> x, const MeasureFeatures& f,
                      std::span<double> out) const;
    double l1_at(std::span<const double> x, const MeasureFeatures& f) const {
        return running_l1.eval(x, f);
    }
    double terminal_at(const MeasureFeatures& f) const;

    nlohmann::json to_json() const;
};

/// Parses a model document; accepts {"registry": name} as a shortcut.
ModelSpec model_from_json(const nlohmann::json& doc, const std::string& pointer = "");

std::vector<std::string> registry_names();
ModelSpec registry_model(const std::string& name);
bool has_registry_model(const std::string& name);

// Quadratic control cost family l_2(a) = kappa |a|^2 / 2.
double l2_cost(std::span<const double> a, double kappa);
std::vector<double> l2_gradient(std::span<const double> a, double kappa);
/// Convex conjugate l_2^*(p) = |p|^2 / (2 kappa).
double l2_conjugate(std::span<const double> p, double kappa);
/// (D l_2)^{-1}(p) = p / kappa.
std::vector<double> feedback_map(std::span<const double> p, double kappa);

/// H(x, mu, p) = -b(x,mu).p - l_1(x,mu) + l_2^*(p).
double hamiltonian(std::span<const double> x, const MeasureFeatures& f,
                   std::span<const double> p, const ModelSpec& model);
double hamiltonian(std::span<const double> x, const EmpiricalMeasure& mu,
                   std::span<const double> p, const ModelSpec& model);

/// Atom representation of B(X), Sigma(X), L_1(X), U_T(X) for X in E_n.
struct LiftedCoefficients {
    VectorTuple drift;               // n x d
    std::vector<double> diffusion;   // n blocks of d x d', row-major
    double running_l1 = 0.0;         // (1/n) sum_i l_1(x_i, mu_x)
    double terminal = 0.0;           // U_T(mu_x)
};

LiftedCoefficients lifted_coefficients(const ModelSpec& model, const VectorTuple& atoms,
                                       bool with_terminal = true);

struct LipschitzEstimate {
    std::string coefficient;          // "b", "sigma", "l1", "UT"
    std::vector<double> radii;
    std::vector<double> estimates;    // max sampled quotient per radius
    bool non_lipschitz_global = false;
};

struct AssumptionReport {
    std::size_t sample_count = 0;
    double r = 1.0;
    std::vector<LipschitzEstimate> entries;
    nlohmann::json to_json() const;
};

/// Sampled difference quotients of each coefficient w.r.t. |.| + d_r at
/// radius, 2 radius and 4 radius. A coefficient is flagged when its estimate
/// grows by more than 1.5x across both doublings.
AssumptionReport assumption_probe(const ModelSpec& model, std::size_t sample_count,
                                  double radius, std::uint64_t seed, double r = 1.0,
                                  std::size_t atoms_per_measure = 3);

} // namespace mfc
