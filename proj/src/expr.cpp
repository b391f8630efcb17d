#include "nonhyp/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>

#include "nonhyp/error.hpp"

namespace nonhyp::expr {

Symbols Symbols::coordinates(int n, std::map<std::string, double> params) {
    Symbols s;
    for (int i = 1; i <= n; ++i) s.variables.push_back("x" + std::to_string(i));
    s.params = std::move(params);
    return s;
}

namespace build {

NodePtr constant(double v) {
    auto n = std::make_shared<Node>();
    n->op = Op::Const;
    n->value = v;
    return n;
}

NodePtr variable(int index, std::string name) {
    auto n = std::make_shared<Node>();
    n->op = Op::Var;
    n->index = index;
    n->name = std::move(name);
    return n;
}

namespace {

NodePtr param(std::string name, double v) {
    auto n = std::make_shared<Node>();
    n->op = Op::Param;
    n->name = std::move(name);
    n->value = v;
    return n;
}

bool is_const(const NodePtr& n) { return n->op == Op::Const; }
bool is_value(const NodePtr& n, double v) { return n->op == Op::Const && n->value == v; }

double apply_unary(Op op, double a) {
    switch (op) {
        case Op::Neg: return -a;
        case Op::Sin: return std::sin(a);
        case Op::Cos: return std::cos(a);
        case Op::Exp: return std::exp(a);
        case Op::Log: return std::log(a);
        case Op::Abs: return std::abs(a);
        case Op::Sqrt: return std::sqrt(a);
        case Op::Cbrt: return std::cbrt(a);
        case Op::Sign: return a > 0 ? 1.0 : (a < 0 ? -1.0 : 0.0);
        default: return a;
    }
}

double int_pow(double a, double b) {
    // Exact repeated multiplication for small integer exponents keeps
    // parsed polynomials bit-compatible with hand-written C++.
    if (b == std::floor(b) && std::abs(b) <= 16) {
        long e = static_cast<long>(std::abs(b));
        double r = 1.0;
        double base = a;
        while (e > 0) {
            if (e & 1) r *= base;
            base *= base;
            e >>= 1;
        }
        return b < 0 ? 1.0 / r : r;
    }
    return std::pow(a, b);
}

double apply_binary(Op op, double a, double b) {
    switch (op) {
        case Op::Add: return a + b;
        case Op::Sub: return a - b;
        case Op::Mul: return a * b;
        case Op::Div: return a / b;
        case Op::Pow: return int_pow(a, b);
        default: return a;
    }
}

}  // namespace

NodePtr unary(Op op, NodePtr a) {
    if (is_const(a)) return constant(apply_unary(op, a->value));
    if (op == Op::Neg && a->op == Op::Neg) return a->lhs;
    auto n = std::make_shared<Node>();
    n->op = op;
    n->lhs = std::move(a);
    return n;
}

NodePtr binary(Op op, NodePtr a, NodePtr b) {
    if (is_const(a) && is_const(b)) return constant(apply_binary(op, a->value, b->value));
    switch (op) {
        case Op::Add:
            if (is_value(a, 0.0)) return b;
            if (is_value(b, 0.0)) return a;
            break;
        case Op::Sub:
            if (is_value(b, 0.0)) return a;
            if (is_value(a, 0.0)) return unary(Op::Neg, b);
            break;
        case Op::Mul:
            if (is_value(a, 0.0) || is_value(b, 0.0)) return constant(0.0);
            if (is_value(a, 1.0)) return b;
            if (is_value(b, 1.0)) return a;
            break;
        case Op::Div:
            if (is_value(a, 0.0)) return constant(0.0);
            if (is_value(b, 1.0)) return a;
            break;
        case Op::Pow:
            if (is_value(b, 0.0)) return constant(1.0);
            if (is_value(b, 1.0)) return a;
            break;
        default: break;
    }
    auto n = std::make_shared<Node>();
    n->op = op;
    n->lhs = std::move(a);
    n->rhs = std::move(b);
    return n;
}

}  // namespace build

// ---------------------------------------------------------------------------
// Parser

namespace {

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma, End };

struct Token {
    Tok kind;
    std::size_t pos;
    double number = 0.0;
    std::string text;
};

std::vector<Token> lex(std::string_view src) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < src.size()) {
        const char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
            std::size_t j = i;
            while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.')) ++j;
            if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
                if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
                    j = k;
                    while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
                }
            }
            const std::string text(src.substr(i, j - i));
            char* end = nullptr;
            const double v = std::strtod(text.c_str(), &end);
            if (end != text.c_str() + text.size()) throw ParseError("malformed number '" + text + "'", i);
            out.push_back({Tok::Number, i, v, text});
            i = j;
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
            out.push_back({Tok::Ident, i, 0.0, std::string(src.substr(i, j - i))});
            i = j;
            continue;
        }
        Tok kind;
        switch (c) {
            case '+': kind = Tok::Plus; break;
            case '-': kind = Tok::Minus; break;
            case '*': kind = Tok::Star; break;
            case '/': kind = Tok::Slash; break;
            case '^': kind = Tok::Caret; break;
            case '(': kind = Tok::LParen; break;
            case ')': kind = Tok::RParen; break;
            case ',': kind = Tok::Comma; break;
            default: throw ParseError(std::string("unexpected character '") + c + "'", i);
        }
        out.push_back({kind, i, 0.0, std::string(1, c)});
        ++i;
    }
    out.push_back({Tok::End, src.size(), 0.0, ""});
    return out;
}

struct FunctionInfo {
    Op op;
    int arity;
};

std::optional<FunctionInfo> lookup_function(const std::string& name) {
    static const std::map<std::string, FunctionInfo> table = {
        {"sin", {Op::Sin, 1}},   {"cos", {Op::Cos, 1}},   {"exp", {Op::Exp, 1}},
        {"log", {Op::Log, 1}},   {"abs", {Op::Abs, 1}},   {"sqrt", {Op::Sqrt, 1}},
        {"cbrt", {Op::Cbrt, 1}}, {"sign", {Op::Sign, 1}}, {"pow", {Op::Pow, 2}},
    };
    auto it = table.find(name);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

class Parser {
public:
    Parser(std::vector<Token> toks, const Symbols& symbols) : toks_(std::move(toks)), symbols_(symbols) {}

    std::vector<NodePtr> parse_list() {
        std::vector<NodePtr> out;
        out.push_back(parse_expr());
        while (peek().kind == Tok::Comma) {
            advance();
            out.push_back(parse_expr());
        }
        expect(Tok::End, "end of input");
        return out;
    }

private:
    const Token& peek() const { return toks_[pos_]; }
    const Token& advance() { return toks_[pos_++]; }

    void expect(Tok kind, const char* what) {
        if (peek().kind != kind) {
            const auto& t = peek();
            throw ParseError(std::string("expected ") + what + (t.kind == Tok::End ? " but input ended" : " but found '" + t.text + "'"),
                             t.pos);
        }
        advance();
    }

    NodePtr parse_expr() {
        NodePtr lhs = parse_term();
        while (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
            const Op op = advance().kind == Tok::Plus ? Op::Add : Op::Sub;
            lhs = raw_binary(op, lhs, parse_term());
        }
        return lhs;
    }

    NodePtr parse_term() {
        NodePtr lhs = parse_unary();
        while (peek().kind == Tok::Star || peek().kind == Tok::Slash) {
            const Op op = advance().kind == Tok::Star ? Op::Mul : Op::Div;
            lhs = raw_binary(op, lhs, parse_unary());
        }
        return lhs;
    }

    NodePtr parse_unary() {
        if (peek().kind == Tok::Minus) {
            advance();
            return raw_unary(Op::Neg, parse_unary());
        }
        if (peek().kind == Tok::Plus) {
            advance();
            return parse_unary();
        }
        return parse_power();
    }

    NodePtr parse_power() {
        NodePtr base = parse_primary();
        if (peek().kind == Tok::Caret) {
            advance();
            return raw_binary(Op::Pow, base, parse_unary());
        }
        return base;
    }

    NodePtr parse_primary() {
        const Token& t = peek();
        switch (t.kind) {
            case Tok::Number: advance(); return build::constant(t.number);
            case Tok::LParen: {
                advance();
                NodePtr inner = parse_expr();
                expect(Tok::RParen, "')'");
                return inner;
            }
            case Tok::Ident: return parse_identifier();
            case Tok::End: throw ParseError("unexpected end of input", t.pos);
            default: throw ParseError("unexpected token '" + t.text + "'", t.pos);
        }
    }

    NodePtr parse_identifier() {
        const Token t = advance();
        if (peek().kind == Tok::LParen) {
            auto fn = lookup_function(t.text);
            if (!fn) throw ParseError("unknown function " + t.text, t.pos);
            advance();
            std::vector<NodePtr> args;
            if (peek().kind != Tok::RParen) {
                args.push_back(parse_expr());
                while (peek().kind == Tok::Comma) {
                    advance();
                    args.push_back(parse_expr());
                }
            }
            expect(Tok::RParen, "')'");
            if (static_cast<int>(args.size()) != fn->arity) {
                throw ParseError("function " + t.text + " expects " + std::to_string(fn->arity) + " argument" +
                                     (fn->arity == 1 ? "" : "s") + ", got " + std::to_string(args.size()),
                                 t.pos);
            }
            return fn->arity == 1 ? raw_unary(fn->op, args[0]) : raw_binary(fn->op, args[0], args[1]);
        }
        for (std::size_t i = 0; i < symbols_.variables.size(); ++i) {
            if (symbols_.variables[i] == t.text) return build::variable(static_cast<int>(i), t.text);
        }
        if (auto it = symbols_.params.find(t.text); it != symbols_.params.end()) {
            return build::param(t.text, it->second);
        }
        if (t.text == "pi") return build::param("pi", 3.14159265358979323846);
        if (lookup_function(t.text)) throw ParseError("function " + t.text + " used without arguments", t.pos);
        throw ParseError("unknown identifier " + t.text, t.pos);
    }

    // The parser keeps the tree as written (no folding) so that printing
    // reproduces the user's structure; folding happens in derivatives.
    static NodePtr raw_unary(Op op, NodePtr a) {
        auto n = std::make_shared<Node>();
        n->op = op;
        n->lhs = std::move(a);
        return n;
    }
    static NodePtr raw_binary(Op op, NodePtr a, NodePtr b) {
        auto n = std::make_shared<Node>();
        n->op = op;
        n->lhs = std::move(a);
        n->rhs = std::move(b);
        return n;
    }

    std::vector<Token> toks_;
    const Symbols& symbols_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<Expr> parse_list(std::string_view source, const Symbols& symbols) {
    Parser parser(lex(source), symbols);
    std::vector<Expr> out;
    for (auto& n : parser.parse_list()) out.emplace_back(std::move(n));
    return out;
}

Expr parse(std::string_view source, const Symbols& symbols) {
    auto list = parse_list(source, symbols);
    if (list.size() != 1) throw ParseError("expected a single expression, got " + std::to_string(list.size()), 0);
    return list.front();
}

// ---------------------------------------------------------------------------
// Expr

Expr::Expr() : Expr(build::constant(0.0)) {}

Expr::Expr(NodePtr root) : root_(std::move(root)) { compile(); }

void Expr::compile() {
    program_.clear();
    int depth = 0;
    max_depth_ = 0;
    std::function<void(const NodePtr&)> emit = [&](const NodePtr& n) {
        switch (n->op) {
            case Op::Const:
            case Op::Param:
                program_.push_back({Op::Const, n->value, -1});
                max_depth_ = std::max(max_depth_, ++depth);
                return;
            case Op::Var:
                program_.push_back({Op::Var, 0.0, n->index});
                max_depth_ = std::max(max_depth_, ++depth);
                return;
            default: break;
        }
        emit(n->lhs);
        if (n->rhs) {
            emit(n->rhs);
            --depth;
        }
        program_.push_back({n->op, 0.0, -1});
    };
    emit(root_);
}

double Expr::eval(std::span<const double> vars) const {
    constexpr int kStack = 64;
    if (max_depth_ > kStack) {
        std::vector<double> heap(static_cast<std::size_t>(max_depth_));
        // Deep trees are rare; evaluate with a heap stack.
        int sp = 0;
        for (const auto& in : program_) {
            switch (in.op) {
                case Op::Const: heap[sp++] = in.value; break;
                case Op::Var: heap[sp++] = vars[static_cast<std::size_t>(in.index)]; break;
                case Op::Add: case Op::Sub: case Op::Mul: case Op::Div: case Op::Pow:
                    --sp;
                    heap[sp - 1] = build::binary(in.op, build::constant(heap[sp - 1]), build::constant(heap[sp]))->value;
                    break;
                default: heap[sp - 1] = build::unary(in.op, build::constant(heap[sp - 1]))->value; break;
            }
        }
        return heap[0];
    }
    std::array<double, kStack> st{};
    int sp = 0;
    for (const auto& in : program_) {
        switch (in.op) {
            case Op::Const: st[sp++] = in.value; break;
            case Op::Var: st[sp++] = vars[static_cast<std::size_t>(in.index)]; break;
            case Op::Neg: st[sp - 1] = -st[sp - 1]; break;
            case Op::Add: --sp; st[sp - 1] += st[sp]; break;
            case Op::Sub: --sp; st[sp - 1] -= st[sp]; break;
            case Op::Mul: --sp; st[sp - 1] *= st[sp]; break;
            case Op::Div: --sp; st[sp - 1] /= st[sp]; break;
            case Op::Pow: --sp; st[sp - 1] = build::binary(Op::Pow, build::constant(st[sp - 1]), build::constant(st[sp]))->value; break;
            case Op::Sin: st[sp - 1] = std::sin(st[sp - 1]); break;
            case Op::Cos: st[sp - 1] = std::cos(st[sp - 1]); break;
            case Op::Exp: st[sp - 1] = std::exp(st[sp - 1]); break;
            case Op::Log: st[sp - 1] = std::log(st[sp - 1]); break;
            case Op::Abs: st[sp - 1] = std::abs(st[sp - 1]); break;
            case Op::Sqrt: st[sp - 1] = std::sqrt(st[sp - 1]); break;
            case Op::Cbrt: st[sp - 1] = std::cbrt(st[sp - 1]); break;
            case Op::Sign: st[sp - 1] = st[sp - 1] > 0 ? 1.0 : (st[sp - 1] < 0 ? -1.0 : 0.0); break;
            case Op::Param: break;
        }
    }
    return st[0];
}

bool Expr::is_constant() const {
    std::function<bool(const NodePtr&)> walk = [&](const NodePtr& n) -> bool {
        if (!n) return true;
        if (n->op == Op::Var) return false;
        return walk(n->lhs) && walk(n->rhs);
    };
    return walk(root_);
}

bool Expr::is_smooth() const {
    std::function<bool(const NodePtr&)> walk = [&](const NodePtr& n) -> bool {
        if (!n) return true;
        if (n->op == Op::Abs || n->op == Op::Sign) return false;
        return walk(n->lhs) && walk(n->rhs);
    };
    return walk(root_);
}

namespace {

using build::binary;
using build::constant;
using build::unary;

NodePtr diff(const NodePtr& n, int var) {
    switch (n->op) {
        case Op::Const:
        case Op::Param: return constant(0.0);
        case Op::Var: return constant(n->index == var ? 1.0 : 0.0);
        case Op::Neg: return unary(Op::Neg, diff(n->lhs, var));
        case Op::Add: return binary(Op::Add, diff(n->lhs, var), diff(n->rhs, var));
        case Op::Sub: return binary(Op::Sub, diff(n->lhs, var), diff(n->rhs, var));
        case Op::Mul:
            return binary(Op::Add, binary(Op::Mul, diff(n->lhs, var), n->rhs), binary(Op::Mul, n->lhs, diff(n->rhs, var)));
        case Op::Div: {
            // (a'b - ab') / b^2
            auto num = binary(Op::Sub, binary(Op::Mul, diff(n->lhs, var), n->rhs), binary(Op::Mul, n->lhs, diff(n->rhs, var)));
            return binary(Op::Div, num, binary(Op::Pow, n->rhs, constant(2.0)));
        }
        case Op::Pow: {
            const auto& a = n->lhs;
            const auto& b = n->rhs;
            auto db = diff(b, var);
            auto da = diff(a, var);
            if (db->op == Op::Const && db->value == 0.0) {
                // b * a^(b-1) * a'
                return binary(Op::Mul, binary(Op::Mul, b, binary(Op::Pow, a, binary(Op::Sub, b, constant(1.0)))), da);
            }
            // a^b * (b' log a + b a'/a)
            auto term = binary(Op::Add, binary(Op::Mul, db, unary(Op::Log, a)), binary(Op::Div, binary(Op::Mul, b, da), a));
            return binary(Op::Mul, n, term);
        }
        case Op::Sin: return binary(Op::Mul, unary(Op::Cos, n->lhs), diff(n->lhs, var));
        case Op::Cos: return unary(Op::Neg, binary(Op::Mul, unary(Op::Sin, n->lhs), diff(n->lhs, var)));
        case Op::Exp: return binary(Op::Mul, n, diff(n->lhs, var));
        case Op::Log: return binary(Op::Div, diff(n->lhs, var), n->lhs);
        case Op::Abs: return binary(Op::Mul, unary(Op::Sign, n->lhs), diff(n->lhs, var));
        case Op::Sqrt: return binary(Op::Div, diff(n->lhs, var), binary(Op::Mul, constant(2.0), n));
        case Op::Cbrt:
            return binary(Op::Div, diff(n->lhs, var), binary(Op::Mul, constant(3.0), binary(Op::Pow, n, constant(2.0))));
        case Op::Sign: return constant(0.0);
    }
    return constant(0.0);
}

int precedence(const NodePtr& n) {
    switch (n->op) {
        case Op::Add:
        case Op::Sub: return 1;
        case Op::Mul:
        case Op::Div: return 2;
        case Op::Neg: return 3;
        case Op::Pow: return 4;
        case Op::Const: return n->value < 0 ? 3 : 5;
        default: return 5;
    }
}

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const char* function_name(Op op) {
    switch (op) {
        case Op::Sin: return "sin";
        case Op::Cos: return "cos";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Abs: return "abs";
        case Op::Sqrt: return "sqrt";
        case Op::Cbrt: return "cbrt";
        case Op::Sign: return "sign";
        default: return "?";
    }
}

std::string print(const NodePtr& n) {
    auto wrap = [](const NodePtr& child, bool need) {
        std::string s = print(child);
        return need ? "(" + s + ")" : s;
    };
    switch (n->op) {
        case Op::Const: return format_number(n->value);
        case Op::Param:
        case Op::Var: return n->name;
        case Op::Neg: return "-" + wrap(n->lhs, precedence(n->lhs) <= 3);
        case Op::Add: return wrap(n->lhs, precedence(n->lhs) < 1) + " + " + wrap(n->rhs, precedence(n->rhs) <= 1);
        case Op::Sub: return wrap(n->lhs, precedence(n->lhs) < 1) + " - " + wrap(n->rhs, precedence(n->rhs) <= 1 || (n->rhs->op == Op::Const && n->rhs->value < 0));
        case Op::Mul: return wrap(n->lhs, precedence(n->lhs) < 2) + "*" + wrap(n->rhs, precedence(n->rhs) <= 2 || precedence(n->rhs) == 3);
        case Op::Div: return wrap(n->lhs, precedence(n->lhs) < 2) + "/" + wrap(n->rhs, precedence(n->rhs) <= 3);
        case Op::Pow: return wrap(n->lhs, precedence(n->lhs) <= 4) + "^" + wrap(n->rhs, precedence(n->rhs) < 5);
        default: return std::string(function_name(n->op)) + "(" + print(n->lhs) + ")";
    }
}

}  // namespace

Expr Expr::derivative(int var, const Symbols&) const { return Expr(diff(root_, var)); }

std::string Expr::to_string() const { return print(root_); }

}  // namespace nonhyp::expr
