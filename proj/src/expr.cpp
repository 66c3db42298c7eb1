#include "dncl/expr.hpp"

#include "dncl/kernels.hpp"
#include "dncl/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace dncl::expr {

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------
namespace {
struct OpInfo {
    const char* name;
    int arity;
};
constexpr OpInfo kOpInfo[kNumOps] = {
    {"+", 2},   {"-", 2},      {"*", 2},      {"/", 2},   {"pow", 2},
    {"sin", 1}, {"cos", 1},    {"arcsin", 1}, {"arccos", 1},
    {"exp", 1}, {"log", 1},    {"sqrt", 1},
};
} // namespace

int arity(OpKind k) { return kOpInfo[int(k)].arity; }
const char* op_name(OpKind k) { return kOpInfo[int(k)].name; }

// ---------------------------------------------------------------------------
// Tree basics
// ---------------------------------------------------------------------------
ExprPtr Expr::make_op(OpKind k, ExprPtr lhs, ExprPtr rhs) {
    auto e = std::make_shared<Expr>();
    e->tag = Tag::Op;
    e->op = k;
    e->a = std::move(lhs);
    e->b = std::move(rhs);
    if (!e->a || (arity(k) == 2) != bool(e->b))
        throw ExprError(std::string("arity mismatch constructing ") + op_name(k));
    return e;
}

ExprPtr Expr::make_var(int index) {
    if (index < 0 || index > 1) throw ExprError("variable index out of range");
    auto e = std::make_shared<Expr>();
    e->tag = Tag::Var;
    e->var = index;
    return e;
}

ExprPtr Expr::make_const(double v, bool fit) {
    auto e = std::make_shared<Expr>();
    e->tag = Tag::Const;
    e->value = v;
    e->fit = fit;
    return e;
}

int node_count(const Expr& e) {
    if (e.tag != Expr::Tag::Op) return 1;
    return 1 + node_count(*e.a) + (e.b ? node_count(*e.b) : 0);
}

int depth(const Expr& e) {
    if (e.tag != Expr::Tag::Op) return 1;
    int d = depth(*e.a);
    if (e.b) d = std::max(d, depth(*e.b));
    return 1 + d;
}

bool has_variable(const Expr& e) {
    if (e.tag == Expr::Tag::Var) return true;
    if (e.tag != Expr::Tag::Op) return false;
    return has_variable(*e.a) || (e.b && has_variable(*e.b));
}

int max_var_index(const Expr& e) {
    if (e.tag == Expr::Tag::Var) return e.var;
    if (e.tag != Expr::Tag::Op) return -1;
    int m = max_var_index(*e.a);
    if (e.b) m = std::max(m, max_var_index(*e.b));
    return m;
}

bool tree_equal(const Expr& a, const Expr& b) {
    if (a.tag != b.tag) return false;
    switch (a.tag) {
        case Expr::Tag::Var: return a.var == b.var;
        case Expr::Tag::Const: return a.value == b.value;
        case Expr::Tag::Op:
            if (a.op != b.op) return false;
            if (!tree_equal(*a.a, *b.a)) return false;
            return arity(a.op) == 1 || tree_equal(*a.b, *b.b);
    }
    return false;
}

std::shared_ptr<Expr> clone_mutable(const Expr& e, std::vector<double*>* out_slots) {
    auto c = std::make_shared<Expr>(e);
    if (e.tag == Expr::Tag::Op) {
        auto ca = clone_mutable(*e.a, out_slots);
        c->a = ca;
        if (e.b) c->b = clone_mutable(*e.b, out_slots);
    } else if (e.tag == Expr::Tag::Const && e.fit && out_slots) {
        out_slots->push_back(&c->value);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------
namespace {

void eval_rec(const Expr& e, const double* X, int64_t n, int d,
              double* out, uint8_t* mask) {
    switch (e.tag) {
        case Expr::Tag::Var:
            for (int64_t i = 0; i < n; ++i) out[i] = X[i * d + e.var];
            return;
        case Expr::Tag::Const:
            std::fill(out, out + n, e.value);
            return;
        case Expr::Tag::Op: break;
    }

    std::vector<double> lhs(static_cast<size_t>(n));
    eval_rec(*e.a, X, n, d, lhs.data(), mask);

    const auto& K = kern::active();

    if (arity(e.op) == 1) {
        switch (e.op) {
            case OpKind::Sin:
                for (int64_t i = 0; i < n; ++i) out[i] = std::sin(lhs[i]);
                break;
            case OpKind::Cos:
                for (int64_t i = 0; i < n; ++i) out[i] = std::cos(lhs[i]);
                break;
            case OpKind::Arcsin:
                for (int64_t i = 0; i < n; ++i) {
                    if (std::abs(lhs[i]) > 1.0) { mask[i] = 0; out[i] = 0; }
                    else out[i] = std::asin(lhs[i]);
                }
                break;
            case OpKind::Arccos:
                for (int64_t i = 0; i < n; ++i) {
                    if (std::abs(lhs[i]) > 1.0) { mask[i] = 0; out[i] = 0; }
                    else out[i] = std::acos(lhs[i]);
                }
                break;
            case OpKind::Exp:
                for (int64_t i = 0; i < n; ++i) out[i] = std::exp(lhs[i]);
                break;
            case OpKind::Log:
                for (int64_t i = 0; i < n; ++i) {
                    if (lhs[i] <= 0.0) { mask[i] = 0; out[i] = 0; }
                    else out[i] = std::log(lhs[i]);
                }
                break;
            case OpKind::Sqrt:
                for (int64_t i = 0; i < n; ++i) {
                    if (lhs[i] < 0.0) { mask[i] = 0; out[i] = 0; }
                    else out[i] = std::sqrt(lhs[i]);
                }
                break;
            default: throw ExprError("bad unary op");
        }
    } else {
        std::vector<double> rhs(static_cast<size_t>(n));
        eval_rec(*e.b, X, n, d, rhs.data(), mask);
        switch (e.op) {
            case OpKind::Add: K.vadd(lhs.data(), rhs.data(), out, n); break;
            case OpKind::Sub:
                for (int64_t i = 0; i < n; ++i) out[i] = lhs[i] - rhs[i];
                break;
            case OpKind::Mul: K.vmul(lhs.data(), rhs.data(), out, n); break;
            case OpKind::Div:
                for (int64_t i = 0; i < n; ++i) {
                    if (std::abs(rhs[i]) < kDivGuard) { mask[i] = 0; out[i] = 0; }
                    else out[i] = lhs[i] / rhs[i];
                }
                break;
            case OpKind::Pow:
                for (int64_t i = 0; i < n; ++i) {
                    const double base = lhs[i], ex = rhs[i];
                    if (base > 0.0) {
                        out[i] = std::pow(base, ex);
                    } else if (base == 0.0) {
                        if (ex > 0.0) out[i] = 0.0;
                        else if (ex == 0.0) out[i] = 1.0;
                        else { mask[i] = 0; out[i] = 0; }
                    } else {
                        // negative base: real only for integer exponents
                        const double r = std::nearbyint(ex);
                        if (std::abs(ex - r) < 1e-9 && std::abs(r) < 1e15) {
                            out[i] = std::pow(base, r);
                        } else {
                            mask[i] = 0; out[i] = 0;
                        }
                    }
                }
                break;
            default: throw ExprError("bad binary op");
        }
    }

    for (int64_t i = 0; i < n; ++i) {
        if (mask[i] && (!std::isfinite(out[i]) || std::abs(out[i]) > kEvalOverflow)) {
            mask[i] = 0;
            out[i] = 0;
        }
    }
}

} // namespace

EvalResult evaluate(const Expr& e, const double* X, int64_t n, int d) {
    EvalResult r;
    r.y.assign(size_t(n), 0.0);
    r.valid.assign(size_t(n), 1);
    if (n > 0) eval_rec(e, X, n, d, r.y.data(), r.valid.data());
    return r;
}

EvalResult evaluate(const Expr& e, const std::vector<double>& X, int d) {
    if (d <= 0 || X.size() % size_t(d) != 0) throw ExprError("X size not a multiple of d");
    return evaluate(e, X.data(), int64_t(X.size()) / d, d);
}

// ---------------------------------------------------------------------------
// Simplification + complexity
// ---------------------------------------------------------------------------
namespace {

bool is_const_val(const Expr& e, double v) {
    return e.tag == Expr::Tag::Const && e.value == v;
}

// Fold an all-constant operator node when the result is defined and finite.
ExprPtr try_fold(const Expr& e) {
    if (e.tag != Expr::Tag::Op) return nullptr;
    if (e.a->tag != Expr::Tag::Const) return nullptr;
    if (arity(e.op) == 2 && e.b->tag != Expr::Tag::Const) return nullptr;
    double xs[1] = {0.0};
    EvalResult r = evaluate(e, xs, 1, 1);
    if (!r.valid[0]) return nullptr;
    return Expr::make_const(r.y[0]);
}

ExprPtr simplify_once(const ExprPtr& e, bool& changed) {
    if (e->tag != Expr::Tag::Op) return e;

    ExprPtr a = simplify_once(e->a, changed);
    ExprPtr b = e->b ? simplify_once(e->b, changed) : nullptr;
    ExprPtr cur = (a == e->a && b == e->b) ? e : Expr::make_op(e->op, a, b);

    if (ExprPtr folded = try_fold(*cur)) {
        changed = true;
        return folded;
    }

    const Expr& c = *cur;
    switch (c.op) {
        case OpKind::Mul:
            if (is_const_val(*c.a, 1.0)) { changed = true; return c.b; }
            if (is_const_val(*c.b, 1.0)) { changed = true; return c.a; }
            // mul(-1, mul(-1, e)) -> e
            if (is_const_val(*c.a, -1.0) && c.b->tag == Expr::Tag::Op &&
                c.b->op == OpKind::Mul && is_const_val(*c.b->a, -1.0)) {
                changed = true;
                return c.b->b;
            }
            break;
        case OpKind::Add:
            if (is_const_val(*c.a, 0.0)) { changed = true; return c.b; }
            if (is_const_val(*c.b, 0.0)) { changed = true; return c.a; }
            break;
        case OpKind::Sub:
            if (is_const_val(*c.b, 0.0)) { changed = true; return c.a; }
            // sub(0, sub(0, e)) -> e
            if (is_const_val(*c.a, 0.0) && c.b->tag == Expr::Tag::Op &&
                c.b->op == OpKind::Sub && is_const_val(*c.b->a, 0.0)) {
                changed = true;
                return c.b->b;
            }
            break;
        case OpKind::Div:
            if (tree_equal(*c.a, *c.b)) { changed = true; return Expr::make_const(1.0); }
            break;
        case OpKind::Pow:
            if (is_const_val(*c.b, 1.0)) { changed = true; return c.a; }
            break;
        default: break;
    }
    return cur;
}

} // namespace

ExprPtr simplify(ExprPtr e) {
    for (int pass = 0; pass < 20; ++pass) {
        bool changed = false;
        e = simplify_once(e, changed);
        if (!changed) break;
    }
    return e;
}

int complexity(const Expr& e, bool simplify_first) {
    if (!simplify_first) return node_count(e);
    ExprPtr copy = clone_mutable(e, nullptr);
    return node_count(*simplify(copy));
}

// ---------------------------------------------------------------------------
// Constant encoding
// ---------------------------------------------------------------------------
ConstantCode encode_constant(double c) {
    if (!std::isfinite(c)) throw ExprError("cannot encode non-finite constant");
    const double r = std::nearbyint(c);
    if (std::abs(c - r) <= 1e-12 * std::max(1.0, std::abs(c)) && std::abs(r) <= 5.0) {
        // integers -5..5 use dedicated vocabulary tokens; mantissa/exponent
        // still round-trip the value
        if (r == 0.0) return {0.0, 0, true};
        return {r / 10.0, 1, true};
    }
    int e = int(std::floor(std::log10(std::abs(c)))) + 1;
    double m = c / std::pow(10.0, e);
    if (std::abs(m) >= 1.0) { m /= 10.0; e += 1; }
    if (std::abs(m) < 0.1) { m *= 10.0; e -= 1; }
    if (e < -10 || e > 10) throw ExprError("constant exponent out of range: " + util::fmt_g(c));
    return {m, e, false};
}

double decode_constant(const ConstantCode& cc) {
    return cc.mantissa * std::pow(10.0, cc.exponent);
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------
namespace vocab {

int op_token(OpKind k) { return kOpBase + int(k); }
int var_token(int index) { return kVarBase + index; }

int int_token(int value) {
    if (value < -5 || value > 5) throw ExprError("small-int token out of range");
    return kIntBase + value + 5;
}

int const_token(int expo) {
    if (expo < -10 || expo > 10) throw ExprError("exponent token out of range");
    return kConstBase + expo + 10;
}

bool is_op(int id) { return id >= kOpBase && id < kOpBase + kNumOps; }
bool is_var(int id) { return id >= kVarBase && id < kVarBase + 2; }
bool is_int(int id) { return id >= kIntBase && id < kIntBase + 11; }
bool is_const(int id) { return id >= kConstBase && id < kConstBase + 21; }

OpKind op_of(int id) { return OpKind(id - kOpBase); }
int var_index(int id) { return id - kVarBase; }
int int_value(int id) { return id - kIntBase - 5; }
int const_exponent(int id) { return id - kConstBase - 10; }

int token_arity(int id) {
    if (is_op(id)) return arity(op_of(id));
    if (is_var(id) || is_int(id) || is_const(id)) return 0;
    throw ExprError("token has no arity: id " + std::to_string(id));
}

std::string token_name(int id) {
    if (id == kPad) return "<pad>";
    if (id == kBos) return "<bos>";
    if (is_op(id)) return op_name(op_of(id));
    if (is_var(id)) return var_index(id) == 0 ? "x" : "y";
    if (is_int(id)) return std::to_string(int_value(id));
    if (is_const(id)) return "C" + std::to_string(const_exponent(id));
    throw ExprError("bad token id " + std::to_string(id));
}

int token_from_name(const std::string& name) {
    for (int id = 0; id < kSize; ++id)
        if (token_name(id) == name) return id;
    throw ExprError("unknown token name: " + name);
}

uint64_t vocab_hash() {
    std::string all;
    for (int id = 0; id < kSize; ++id) {
        all += token_name(id);
        all += '\x1f';
    }
    return util::fnv1a(all);
}

} // namespace vocab

// ---------------------------------------------------------------------------
// Pre-order tokenization
// ---------------------------------------------------------------------------
uint64_t TokenSequence::skeleton_hash() const {
    std::string bytes;
    bytes.reserve(symbols.size() * 2);
    for (int s : symbols) {
        bytes += char(s & 0xff);
        bytes += char((s >> 8) & 0xff);
    }
    return util::fnv1a(bytes);
}

namespace {

void preorder_rec(const Expr& e, TokenSequence& out) {
    switch (e.tag) {
        case Expr::Tag::Op:
            out.symbols.push_back(vocab::op_token(e.op));
            out.mantissas.push_back(0.0);
            out.exponents.push_back(0);
            preorder_rec(*e.a, out);
            if (e.b) preorder_rec(*e.b, out);
            return;
        case Expr::Tag::Var:
            out.symbols.push_back(vocab::var_token(e.var));
            out.mantissas.push_back(0.0);
            out.exponents.push_back(0);
            return;
        case Expr::Tag::Const: {
            const ConstantCode cc = encode_constant(e.value);
            if (cc.is_small_int) {
                out.symbols.push_back(vocab::int_token(int(std::nearbyint(e.value))));
                out.mantissas.push_back(0.0);
                out.exponents.push_back(0);
            } else {
                out.symbols.push_back(vocab::const_token(cc.exponent));
                out.mantissas.push_back(cc.mantissa);
                out.exponents.push_back(cc.exponent);
            }
            return;
        }
    }
}

} // namespace

TokenSequence to_preorder(const Expr& e, int max_expr_len) {
    TokenSequence out;
    preorder_rec(e, out);
    if (int(out.size()) > max_expr_len)
        throw ExprError("pre-order length " + std::to_string(out.size()) +
                        " exceeds max_expr_len " + std::to_string(max_expr_len));
    return out;
}

namespace {

ExprPtr from_preorder_rec(const TokenSequence& seq, size_t& pos) {
    if (pos >= seq.size()) throw ExprError("invalid traversal: arity deficit");
    const int id = seq.symbols[pos];
    const size_t here = pos++;
    if (vocab::is_op(id)) {
        const OpKind k = vocab::op_of(id);
        ExprPtr a = from_preorder_rec(seq, pos);
        ExprPtr b = arity(k) == 2 ? from_preorder_rec(seq, pos) : nullptr;
        return Expr::make_op(k, a, b);
    }
    if (vocab::is_var(id)) return Expr::make_var(vocab::var_index(id));
    if (vocab::is_int(id)) return Expr::make_const(double(vocab::int_value(id)));
    if (vocab::is_const(id)) {
        const int expo = vocab::const_exponent(id);
        ConstantCode cc{seq.mantissas[here], expo, false};
        if (expo < -10 || expo > 10) throw ExprError("exponent out of range");
        return Expr::make_const(decode_constant(cc), /*fit=*/true);
    }
    throw ExprError("invalid traversal: token " + std::to_string(id) + " not allowed");
}

} // namespace

ExprPtr from_preorder(const TokenSequence& seq) {
    if (seq.symbols.empty()) throw ExprError("invalid traversal: empty sequence");
    if (seq.mantissas.size() != seq.size() || seq.exponents.size() != seq.size())
        throw ExprError("token sequence arrays misaligned");
    size_t pos = 0;
    ExprPtr e = from_preorder_rec(seq, pos);
    if (pos != seq.size()) throw ExprError("invalid traversal: arity surplus");
    return e;
}

bool arity_valid(const std::vector<int>& symbols) {
    int64_t need = 1;
    for (size_t i = 0; i < symbols.size(); ++i) {
        if (need <= 0) return false;
        int a;
        try {
            a = vocab::token_arity(symbols[i]);
        } catch (const ExprError&) {
            return false;
        }
        need += a - 1;
    }
    return need == 0;
}

// ---------------------------------------------------------------------------
// Domains + equivalence
// ---------------------------------------------------------------------------
namespace {

bool wants_positive_domain(const Expr& e) {
    if (e.tag == Expr::Tag::Op) {
        if (e.op == OpKind::Log || e.op == OpKind::Sqrt) return true;
        if (e.op == OpKind::Pow) {
            const Expr& ex = *e.b;
            const bool integer_const = ex.tag == Expr::Tag::Const &&
                std::abs(ex.value - std::nearbyint(ex.value)) < 1e-9;
            if (!integer_const) return true;
        }
        if (wants_positive_domain(*e.a)) return true;
        if (e.b && wants_positive_domain(*e.b)) return true;
    }
    return false;
}

} // namespace

Domain default_domain(const Expr& e, int d) {
    Domain dom;
    if (wants_positive_domain(e)) {
        for (int k = 0; k < d; ++k) {
            dom.lo[k] = 0.0;
            dom.hi[k] = 2.0;
        }
    }
    return dom;
}

double halton(int64_t index, int base) {
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= base;
        r += f * double(index % base);
        index /= base;
    }
    return r;
}

bool equivalent(const Expr& a, const Expr& b, int d) {
    constexpr int kPoints = 256;
    Domain da = default_domain(a, d), db = default_domain(b, d);
    Domain dom;
    for (int k = 0; k < d; ++k) {
        // intersect the two domain conventions so the test stays symmetric
        dom.lo[k] = std::max(da.lo[k], db.lo[k]);
        dom.hi[k] = std::min(da.hi[k], db.hi[k]);
        if (dom.lo[k] >= dom.hi[k]) { dom.lo[k] = 0.0; dom.hi[k] = 2.0; }
    }

    std::vector<double> X(size_t(kPoints) * d);
    const int bases[2] = {2, 3};
    for (int64_t i = 0; i < kPoints; ++i)
        for (int k = 0; k < d; ++k)
            X[i * d + k] = dom.lo[k] + (dom.hi[k] - dom.lo[k]) * halton(i + 1, bases[k]);

    EvalResult ra = evaluate(a, X.data(), kPoints, d);
    EvalResult rb = evaluate(b, X.data(), kPoints, d);

    int64_t both = 0;
    for (int i = 0; i < kPoints; ++i) {
        if (!ra.valid[i] || !rb.valid[i]) continue;
        ++both;
        if (std::abs(ra.y[i] - rb.y[i]) > 1e-6 * (1.0 + std::abs(rb.y[i]))) return false;
    }
    return both >= int64_t(std::ceil(0.9 * kPoints));
}

} // namespace dncl::expr
