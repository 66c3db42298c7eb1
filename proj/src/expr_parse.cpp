#include "dncl/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <map>

namespace dncl::expr {

// ---------------------------------------------------------------------------
// Recursive-descent parser.
//   expr   := term { ('+'|'-') term }
//   term   := factor { ('*'|'/') factor }
//   factor := '-' factor | power
//   power  := primary [ ('**'|'^') factor ]     (right-assoc, '-' ok on rhs)
//   primary:= number | ident | ident '(' expr ')' | '(' expr ')'
// ---------------------------------------------------------------------------
namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

struct Parser {
    const std::string& text;
    size_t pos = 0;
    int dims;

    explicit Parser(const std::string& t, int d) : text(t), dims(d) {}

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    char peek() {
        skip_ws();
        return pos < text.size() ? text[pos] : '\0';
    }

    bool eat(char c) {
        if (peek() == c) {
            ++pos;
            return true;
        }
        return false;
    }

    bool eat_pow() {
        skip_ws();
        if (pos + 1 < text.size() && text[pos] == '*' && text[pos + 1] == '*') {
            pos += 2;
            return true;
        }
        if (pos < text.size() && text[pos] == '^') {
            ++pos;
            return true;
        }
        return false;
    }

    ExprPtr parse_expr() {
        ExprPtr e = parse_term();
        while (true) {
            if (eat('+')) e = Expr::make_op(OpKind::Add, e, parse_term());
            else if (eat('-')) e = Expr::make_op(OpKind::Sub, e, parse_term());
            else return e;
        }
    }

    ExprPtr parse_term() {
        ExprPtr e = parse_factor();
        while (true) {
            skip_ws();
            // '**' is power, not mul-deref
            if (pos + 1 < text.size() && text[pos] == '*' && text[pos + 1] == '*') return e;
            if (eat('*')) e = Expr::make_op(OpKind::Mul, e, parse_factor());
            else if (eat('/')) e = Expr::make_op(OpKind::Div, e, parse_factor());
            else return e;
        }
    }

    ExprPtr parse_factor() {
        if (eat('-')) {
            ExprPtr inner = parse_factor();
            if (inner->tag == Expr::Tag::Const)
                return Expr::make_const(-inner->value, inner->fit);
            return Expr::make_op(OpKind::Mul, Expr::make_const(-1.0), inner);
        }
        return parse_power();
    }

    ExprPtr parse_power() {
        ExprPtr base = parse_primary();
        if (eat_pow()) {
            ExprPtr ex = parse_factor(); // right-assoc; handles x**-2, x**y**z
            return Expr::make_op(OpKind::Pow, base, ex);
        }
        return base;
    }

    ExprPtr parse_primary() {
        skip_ws();
        if (pos >= text.size()) throw ParseError("unexpected end of expression", pos);
        const char c = text[pos];

        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();

        if (c == '(') {
            ++pos;
            ExprPtr e = parse_expr();
            if (!eat(')')) throw ParseError("expected ')'", pos);
            return e;
        }

        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();

        throw ParseError(std::string("unexpected character '") + c + "'", pos);
    }

    ExprPtr parse_number() {
        const char* start = text.c_str() + pos;
        char* end = nullptr;
        const double v = std::strtod(start, &end);
        if (end == start) throw ParseError("malformed number", pos);
        pos += size_t(end - start);
        return Expr::make_const(v);
    }

    ExprPtr parse_ident() {
        const size_t start = pos;
        while (pos < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
            ++pos;
        const std::string name = text.substr(start, pos - start);

        static const std::map<std::string, OpKind> kFuncs = {
            {"sin", OpKind::Sin},       {"cos", OpKind::Cos},
            {"arcsin", OpKind::Arcsin}, {"asin", OpKind::Arcsin},
            {"arccos", OpKind::Arccos}, {"acos", OpKind::Arccos},
            {"exp", OpKind::Exp},       {"log", OpKind::Log},
            {"ln", OpKind::Log},        {"sqrt", OpKind::Sqrt},
        };

        if (auto it = kFuncs.find(name); it != kFuncs.end()) {
            if (!eat('(')) throw ParseError("expected '(' after '" + name + "'", pos);
            ExprPtr arg = parse_expr();
            if (!eat(')')) throw ParseError("expected ')'", pos);
            return Expr::make_op(it->second, arg);
        }

        int var = -1;
        if (name == "x" || name == "x1") var = 0;
        else if (name == "y" || name == "x2") var = 1;
        else if (name == "pi") return Expr::make_const(kPi);

        if (var < 0) throw ParseError("unknown symbol '" + name + "'", start);
        if (var >= dims)
            throw ParseError("variable '" + name + "' needs dimension > " + std::to_string(var) +
                                 " but d=" + std::to_string(dims),
                             start);
        return Expr::make_var(var);
    }
};

} // namespace

ExprPtr parse(const std::string& text, int d) {
    if (d < 1 || d > 2) throw ExprError("dimension must be 1 or 2");
    Parser p(text, d);
    ExprPtr e = p.parse_expr();
    p.skip_ws();
    if (p.pos != text.size()) throw ParseError("trailing input", p.pos);
    return e;
}

// ---------------------------------------------------------------------------
// Printing. Parenthesization is precedence-driven so that
// parse(to_string(t)) evaluates identically to t.
// ---------------------------------------------------------------------------
namespace {

int precedence(const Expr& e) {
    if (e.tag == Expr::Tag::Const) return e.value < 0 ? 0 : 4; // negative literal needs parens
    if (e.tag == Expr::Tag::Var) return 4;
    switch (e.op) {
        case OpKind::Add:
        case OpKind::Sub: return 1;
        case OpKind::Mul:
        case OpKind::Div: return 2;
        case OpKind::Pow: return 3;
        default: return 4; // function call carries its own parens
    }
}

std::string const_repr(double v) {
    if (std::abs(v) < 1e15 && v == std::nearbyint(v)) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.0f", v);
        return buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string wrap(const Expr& e, int min_prec) {
    std::string s = to_string(e);
    if (precedence(e) < min_prec) return "(" + s + ")";
    return s;
}

} // namespace

std::string to_string(const Expr& e) {
    switch (e.tag) {
        case Expr::Tag::Var: return e.var == 0 ? "x" : "y";
        case Expr::Tag::Const: return const_repr(e.value);
        case Expr::Tag::Op: break;
    }
    switch (e.op) {
        case OpKind::Add: return wrap(*e.a, 1) + " + " + wrap(*e.b, 1);
        case OpKind::Sub: return wrap(*e.a, 1) + " - " + wrap(*e.b, 2);
        case OpKind::Mul: return wrap(*e.a, 2) + "*" + wrap(*e.b, 2);
        case OpKind::Div: return wrap(*e.a, 2) + "/" + wrap(*e.b, 3);
        case OpKind::Pow: return wrap(*e.a, 4) + "**" + wrap(*e.b, 4);
        default:
            return std::string(op_name(e.op)) + "(" + to_string(*e.a) + ")";
    }
}

} // namespace dncl::expr
