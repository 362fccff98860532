#include "mfc/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <utility>

namespace mfc {

MeasureFeatures MeasureFeatures::of(const VectorTuple& atoms) {
    MeasureFeatures f;
    f.m1.assign(atoms.d(), 0.0);
    if (atoms.n() == 0) return f;
    for (std::size_t i = 0; i < atoms.n(); ++i) {
        const auto p = atoms[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            f.m1[k] += p[k];
            f.m2 += p[k] * p[k];
        }
    }
    const double inv = 1.0 / static_cast<double>(atoms.n());
    for (double& v : f.m1) v *= inv;
    f.m2 *= inv;
    return f;
}

namespace {

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += items[i];
    }
    return out;
}

constexpr std::array<std::pair<std::string_view, CoefficientExpr::Func>, 7> kFuncs{{
    {"exp", CoefficientExpr::Func::Exp},
    {"log", CoefficientExpr::Func::Log},
    {"tanh", CoefficientExpr::Func::Tanh},
    {"sin", CoefficientExpr::Func::Sin},
    {"cos", CoefficientExpr::Func::Cos},
    {"abs", CoefficientExpr::Func::Abs},
    {"sqrt", CoefficientExpr::Func::Sqrt},
}};

using Kind = CoefficientExpr::Kind;

int precedence(Kind k) {
    switch (k) {
    case Kind::Add:
    case Kind::Sub: return 1;
    case Kind::Mul:
    case Kind::Div: return 2;
    case Kind::Neg: return 3;
    case Kind::Pow: return 4;
    default: return 5;
    }
}

} // namespace

ParseError::ParseError(const std::string& what, std::size_t offset,
                       std::vector<std::string> expected)
    : std::runtime_error("parse error at byte " + std::to_string(offset) + ": " + what +
                         (expected.empty() ? std::string() : " (expected " + join(expected) + ")")),
      offset_(offset),
      expected_(std::move(expected)) {}

std::string_view func_name(CoefficientExpr::Func f) {
    for (const auto& [name, fn] : kFuncs) {
        if (fn == f) return name;
    }
    return "?";
}

class ExprParser {
public:
    explicit ExprParser(std::string_view src) : src_(src) {}

    CoefficientExpr run() {
        out_.nodes_.clear();
        skip_ws();
        if (pos_ >= src_.size()) {
            throw ParseError("empty expression", pos_, {"number", "identifier", "'('", "'-'"});
        }
        out_.root_ = expr();
        skip_ws();
        if (pos_ < src_.size()) {
            throw ParseError(std::string("unexpected '") + src_[pos_] + "'", pos_,
                             {"'+'", "'-'", "'*'", "'/'", "'^'", "end of input"});
        }
        return std::move(out_);
    }

private:
    std::string_view src_;
    std::size_t pos_ = 0;
    CoefficientExpr out_;

    int push(CoefficientExpr::Node node) {
        out_.nodes_.push_back(node);
        return static_cast<int>(out_.nodes_.size() - 1);
    }

    int binary(Kind k, int lhs, int rhs) {
        CoefficientExpr::Node n;
        n.kind = k;
        n.lhs = lhs;
        n.rhs = rhs;
        return push(n);
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    void expect(char c) {
        if (peek() != c) {
            throw ParseError(pos_ < src_.size() ? std::string("unexpected '") + src_[pos_] + "'"
                                                : std::string("unexpected end of input"),
                             pos_, {std::string("'") + c + "'"});
        }
        ++pos_;
    }

    int expr() {
        int lhs = term();
        for (;;) {
            const char c = peek();
            if (c != '+' && c != '-') return lhs;
            ++pos_;
            lhs = binary(c == '+' ? Kind::Add : Kind::Sub, lhs, term());
        }
    }

    int term() {
        int lhs = unary();
        for (;;) {
            const char c = peek();
            if (c != '*' && c != '/') return lhs;
            ++pos_;
            lhs = binary(c == '*' ? Kind::Mul : Kind::Div, lhs, unary());
        }
    }

    int unary() {
        if (peek() == '-') {
            ++pos_;
            CoefficientExpr::Node n;
            n.kind = Kind::Neg;
            n.lhs = unary();
            return push(n);
        }
        return power();
    }

    int power() {
        const int base = primary();
        if (peek() == '^') {
            ++pos_;
            return binary(Kind::Pow, base, unary());
        }
        return base;
    }

    std::size_t index_suffix() {
        expect('[');
        skip_ws();
        const std::size_t start = pos_;
        std::size_t value = 0;
        const auto [ptr, ec] = std::from_chars(src_.data() + pos_, src_.data() + src_.size(), value);
        if (ec != std::errc() || ptr == src_.data() + start) {
            throw ParseError("expected a non-negative integer index", start, {"integer"});
        }
        pos_ = static_cast<std::size_t>(ptr - src_.data());
        expect(']');
        return value;
    }

    int number() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) {
            ++pos_;
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
            if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
                pos_ = p;
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            }
        }
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, v);
        if (ec != std::errc() || ptr != src_.data() + pos_) {
            throw ParseError("malformed number", start, {"number"});
        }
        CoefficientExpr::Node n;
        n.kind = Kind::Number;
        n.value = v;
        return push(n);
    }

    int primary() {
        const char c = peek();
        const std::size_t start = pos_;
        if (c == '(') {
            ++pos_;
            const int inner = expr();
            expect(')');
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
                ++pos_;
            }
            const std::string_view ident = src_.substr(start, pos_ - start);
            CoefficientExpr::Node n;
            if (ident == "x") {
                n.kind = Kind::StateVar;
                n.index = index_suffix();
                return push(n);
            }
            if (ident == "m1") {
                n.kind = Kind::MeanVar;
                n.index = index_suffix();
                return push(n);
            }
            if (ident == "m2") {
                n.kind = Kind::SecondMoment;
                return push(n);
            }
            for (const auto& [name, fn] : kFuncs) {
                if (ident == name) {
                    expect('(');
                    n.kind = Kind::Call;
                    n.func = fn;
                    n.lhs = expr();
                    expect(')');
                    return push(n);
                }
            }
            throw ParseError("unknown identifier '" + std::string(ident) + "'", start,
                             {"x[i]", "m1[k]", "m2", "exp", "log", "tanh", "sin", "cos", "abs", "sqrt"});
        }
        throw ParseError(c == '\0' ? std::string("unexpected end of input")
                                   : std::string("unexpected '") + c + "'",
                         pos_, {"number", "identifier", "'('", "'-'"});
    }
};

CoefficientExpr CoefficientExpr::parse(std::string_view src) {
    ExprParser parser(src);
    return parser.run();
}

CoefficientExpr CoefficientExpr::constant(double v) {
    CoefficientExpr e;
    e.nodes_.clear();
    Node n;
    n.kind = Kind::Number;
    n.value = std::abs(v);
    e.nodes_.push_back(n);
    e.root_ = 0;
    if (std::signbit(v)) {
        Node neg;
        neg.kind = Kind::Neg;
        neg.lhs = 0;
        e.nodes_.push_back(neg);
        e.root_ = 1;
    }
    return e;
}

double CoefficientExpr::eval(std::span<const double> x, const MeasureFeatures& f) const {
    return eval_node(root_, x, f);
}

double CoefficientExpr::eval_node(int id, std::span<const double> x,
                                  const MeasureFeatures& f) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    switch (n.kind) {
    case Kind::Number: return n.value;
    case Kind::StateVar:
        if (n.index >= x.size()) {
            throw EvalError("x[" + std::to_string(n.index) + "] out of range for dimension " +
                            std::to_string(x.size()));
        }
        return x[n.index];
    case Kind::MeanVar:
        if (n.index >= f.m1.size()) {
            throw EvalError("m1[" + std::to_string(n.index) + "] out of range for dimension " +
                            std::to_string(f.m1.size()));
        }
        return f.m1[n.index];
    case Kind::SecondMoment: return f.m2;
    case Kind::Neg: return -eval_node(n.lhs, x, f);
    case Kind::Add: return eval_node(n.lhs, x, f) + eval_node(n.rhs, x, f);
    case Kind::Sub: return eval_node(n.lhs, x, f) - eval_node(n.rhs, x, f);
    case Kind::Mul: return eval_node(n.lhs, x, f) * eval_node(n.rhs, x, f);
    case Kind::Div: {
        const double num = eval_node(n.lhs, x, f);
        const double den = eval_node(n.rhs, x, f);
        if (den == 0.0) throw EvalError("division by zero");
        return num / den;
    }
    case Kind::Pow: {
        const double base = eval_node(n.lhs, x, f);
        const double ex = eval_node(n.rhs, x, f);
        if (ex == 2.0) return base * base;
        const double v = std::pow(base, ex);
        if (std::isnan(v)) throw EvalError("pow: undefined for base " + std::to_string(base));
        if (base == 0.0 && ex < 0.0) throw EvalError("pow: zero to a negative power");
        return v;
    }
    case Kind::Call: {
        const double a = eval_node(n.lhs, x, f);
        switch (n.func) {
        case Func::Exp: return std::exp(a);
        case Func::Log:
            if (!(a > 0.0)) throw EvalError("log of non-positive value " + std::to_string(a));
            return std::log(a);
        case Func::Tanh: return std::tanh(a);
        case Func::Sin: return std::sin(a);
        case Func::Cos: return std::cos(a);
        case Func::Abs: return std::abs(a);
        case Func::Sqrt:
            if (a < 0.0) throw EvalError("sqrt of negative value " + std::to_string(a));
            return std::sqrt(a);
        }
    }
    }
    throw EvalError("corrupt expression node");
}

void CoefficientExpr::render(int id, std::string& out) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    auto child = [&](int c, bool parens) {
        if (parens) out += '(';
        render(c, out);
        if (parens) out += ')';
    };
    const auto prec = [&](int c) { return precedence(nodes_[static_cast<std::size_t>(c)].kind); };
    switch (n.kind) {
    case Kind::Number: {
        char buf[64];
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), n.value);
        (void)ec;
        out.append(buf, ptr);
        return;
    }
    case Kind::StateVar: out += "x[" + std::to_string(n.index) + "]"; return;
    case Kind::MeanVar: out += "m1[" + std::to_string(n.index) + "]"; return;
    case Kind::SecondMoment: out += "m2"; return;
    case Kind::Neg:
        out += '-';
        child(n.lhs, prec(n.lhs) < 3);
        return;
    case Kind::Call:
        out += func_name(n.func);
        child(n.lhs, true);
        return;
    case Kind::Pow:
        child(n.lhs, prec(n.lhs) <= 4);
        out += '^';
        child(n.rhs, prec(n.rhs) < 3);
        return;
    default: {
        const int p = precedence(n.kind);
        const char op = n.kind == Kind::Add ? '+' : n.kind == Kind::Sub ? '-' : n.kind == Kind::Mul ? '*' : '/';
        child(n.lhs, prec(n.lhs) < p);
        out += op;
        child(n.rhs, prec(n.rhs) <= p);
        return;
    }
    }
}

std::string CoefficientExpr::to_string() const {
    std::string out;
    render(root_, out);
    return out;
}

bool CoefficientExpr::is_constant() const {
    for (const auto& n : nodes_) {
        if (n.kind == Kind::StateVar || n.kind == Kind::MeanVar || n.kind == Kind::SecondMoment) {
            return false;
        }
    }
    return true;
}

std::size_t CoefficientExpr::state_arity() const {
    std::size_t a = 0;
    for (const auto& n : nodes_) {
        if (n.kind == Kind::StateVar) a = std::max(a, n.index + 1);
    }
    return a;
}

std::size_t CoefficientExpr::mean_arity() const {
    std::size_t a = 0;
    for (const auto& n : nodes_) {
        if (n.kind == Kind::MeanVar) a = std::max(a, n.index + 1);
    }
    return a;
}

} // namespace mfc
