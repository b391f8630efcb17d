#pragma once

// Minimal arithmetic expression language used for user-defined maps,
// Lyapunov pairs and tangency functions.
//
// Grammar (whitespace ignored):
//   list    := expr (',' expr)*
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('+' | '-') unary | power
//   power   := primary ('^' unary)?          right associative, binds tighter than unary minus
//   primary := number | identifier | identifier '(' expr (',' expr)* ')' | '(' expr ')'
//
// Functions: sin cos exp log abs sqrt cbrt sign (one argument), pow (two).

#include <array>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nonhyp::expr {

enum class Op {
    Const,
    Var,
    Param,
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Sqrt,
    Cbrt,
    Sign,
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
    Op op = Op::Const;
    double value = 0.0;  // Const and Param
    int index = -1;      // Var
    std::string name;    // Var and Param, kept for printing
    NodePtr lhs;
    NodePtr rhs;
};

/// Names visible to the parser: ordered variables (bound by position at
/// evaluation time) and named real parameters (bound at parse time).
struct Symbols {
    std::vector<std::string> variables;
    std::map<std::string, double> params;

    /// x1..xn
    static Symbols coordinates(int n, std::map<std::string, double> params = {});
};

/// Immutable expression with a compiled stack program for fast evaluation.
class Expr {
public:
    Expr();
    explicit Expr(NodePtr root);

    double eval(std::span<const double> vars) const;

    /// Symbolic partial derivative with respect to variable `var`.
    Expr derivative(int var, const Symbols& symbols) const;

    /// Re-parseable text; parameters print by name.
    std::string to_string() const;

    const NodePtr& root() const { return root_; }
    bool is_constant() const;
    /// True when no node is a non-smooth primitive (abs, sign).
    bool is_smooth() const;

private:
    struct Instr {
        Op op;
        double value;
        int index;
    };
    void compile();

    NodePtr root_;
    std::vector<Instr> program_;
    int max_depth_ = 0;
};

Expr parse(std::string_view source, const Symbols& symbols);
std::vector<Expr> parse_list(std::string_view source, const Symbols& symbols);

/// Node builders with constant folding and 0/1 identities.
namespace build {
NodePtr constant(double v);
NodePtr variable(int index, std::string name);
NodePtr unary(Op op, NodePtr a);
NodePtr binary(Op op, NodePtr a, NodePtr b);
}  // namespace build

}  // namespace nonhyp::expr
