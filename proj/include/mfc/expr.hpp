#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mfc/measure.hpp"

namespace mfc {

/// Linear statistics of a measure visible to coefficient expressions:
/// m1 = integral of y (a d-vector), m2 = integral of |y|^2.
struct MeasureFeatures {
    std::vector<double> m1;
    double m2 = 0.0;

    static MeasureFeatures of(const VectorTuple& atoms);
    static MeasureFeatures of(const EmpiricalMeasure& mu) { return of(mu.atoms()); }
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset, std::vector<std::string> expected);

    std::size_t offset() const { return offset_; }
    const std::vector<std::string>& expected() const { return expected_; }

private:
    std::size_t offset_;
    std::vector<std::string> expected_;
};

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parsed arithmetic expression over x[i], m1[k], m2 and numeric constants.
///
/// Grammar (whitespace ignored):
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := '-' unary | power
///   power   := primary ('^' unary)?
///   primary := number | 'x[' int ']' | 'm1[' int ']' | 'm2'
///            | func '(' expr ')' | '(' expr ')'
///   func    := exp | log | tanh | sin | cos | abs | sqrt
class CoefficientExpr {
public:
    enum class Kind { Number, StateVar, MeanVar, SecondMoment, Neg, Add, Sub, Mul, Div, Pow, Call };
    enum class Func { Exp, Log, Tanh, Sin, Cos, Abs, Sqrt };

    struct Node {
        Kind kind = Kind::Number;
        double value = 0.0;
        std::size_t index = 0;  // variable index
        Func func = Func::Exp;
        int lhs = -1;
        int rhs = -1;
        bool operator==(const Node&) const = default;
    };

    CoefficientExpr() : nodes_{Node{}}, root_(0) {}

    static CoefficientExpr parse(std::string_view src);
    static CoefficientExpr constant(double v);

    double eval(std::span<const double> x, const MeasureFeatures& features) const;

    /// Minimal-parenthesis rendering; parse(to_string()) reproduces the tree.
    std::string to_string() const;

    bool is_constant() const;
    /// One past the largest x[i] / m1[k] index used (0 if none).
    std::size_t state_arity() const;
    std::size_t mean_arity() const;

    bool operator==(const CoefficientExpr& other) const {
        return root_ == other.root_ && nodes_ == other.nodes_;
    }

private:
    friend class ExprParser;
    std::vector<Node> nodes_;
    int root_ = -1;

    double eval_node(int id, std::span<const double> x, const MeasureFeatures& f) const;
    void render(int id, std::string& out) const;
};

std::string_view func_name(CoefficientExpr::Func f);

} // namespace mfc
