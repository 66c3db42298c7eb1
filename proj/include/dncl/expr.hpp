#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dncl/rng.hpp"

namespace dncl::expr {

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------
enum class OpKind : uint8_t {
    Add, Sub, Mul, Div, Pow,          // binary
    Sin, Cos, Arcsin, Arccos, Exp, Log, Sqrt, // unary
};
constexpr int kNumOps = 12;

int arity(OpKind k);
const char* op_name(OpKind k);

// ---------------------------------------------------------------------------
// Expression tree. Immutable, shared subtrees are fine: every operation on
// trees is pure.
// ---------------------------------------------------------------------------
struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    enum class Tag : uint8_t { Op, Var, Const };

    Tag tag;
    OpKind op{};       // Tag::Op
    int var = 0;       // Tag::Var, 0-based, < d
    double value = 0;  // Tag::Const
    bool fit = false;  // Tag::Const: a slot constant refinement may adjust
    ExprPtr a, b;

    static ExprPtr make_op(OpKind k, ExprPtr lhs, ExprPtr rhs = nullptr);
    static ExprPtr make_var(int index);
    static ExprPtr make_const(double v, bool fit = false);
};

struct ExprError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int node_count(const Expr& e);
int depth(const Expr& e);
bool has_variable(const Expr& e);
int max_var_index(const Expr& e); // -1 when no variable
bool tree_equal(const Expr& a, const Expr& b);

// Deep copy with fresh Const nodes; `out_slots` collects pointers to the
// fit-flagged constants of the copy so a refiner can write through them.
std::shared_ptr<Expr> clone_mutable(const Expr& e, std::vector<double*>* out_slots);

// ---------------------------------------------------------------------------
// Evaluation. Domain violations are reported through the mask, never thrown:
// log/sqrt of out-of-domain arguments, |denominator| < 1e-12, arcsin/arccos
// outside [-1,1], pow with non-real result, any intermediate with magnitude
// above 1e30 or non-finite.
// ---------------------------------------------------------------------------
constexpr double kEvalOverflow = 1e30;
constexpr double kDivGuard = 1e-12;

struct EvalResult {
    std::vector<double> y;
    std::vector<uint8_t> valid;
};

// X is n x d row-major.
EvalResult evaluate(const Expr& e, const double* X, int64_t n, int d);
EvalResult evaluate(const Expr& e, const std::vector<double>& X, int d);

// ---------------------------------------------------------------------------
// Complexity (SRBench-style): number of operator, variable and constant
// nodes; sqrt counts as an operator (stands in for pow). With simplify=true
// the deterministic rewrite set below runs to fixpoint first.
// ---------------------------------------------------------------------------
int complexity(const Expr& e, bool simplify_first);

// Rewrites: constant folding, x*1 -> x, x+0 -> x, x/x -> 1, double negation
// (mul(-1, mul(-1, e)) and sub(0, sub(0, e))), pow(x,1) -> x. At most 20
// passes.
ExprPtr simplify(ExprPtr e);

// ---------------------------------------------------------------------------
// Constant encoding: C ~ mantissa * 10^exponent with mantissa in [-1, 1] and
// integer exponent in [-10, 10]; integers in [-5, 5] flagged for the
// dedicated vocabulary tokens.
// ---------------------------------------------------------------------------
struct ConstantCode {
    double mantissa = 0;
    int exponent = 0;
    bool is_small_int = false;
};

ConstantCode encode_constant(double c); // throws ExprError when exponent leaves [-10, 10]
double decode_constant(const ConstantCode& cc);

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------
namespace vocab {

constexpr int kPad = 0;
constexpr int kBos = 1;
constexpr int kOpBase = 2;                  // 12 operators
constexpr int kVarBase = kOpBase + kNumOps; // x, y
constexpr int kIntBase = kVarBase + 2;      // integers -5..5
constexpr int kConstBase = kIntBase + 11;   // exponent tokens C-10..C10
constexpr int kSize = kConstBase + 21;

int op_token(OpKind k);
int var_token(int index);
int int_token(int value);    // value in [-5, 5]
int const_token(int expo);   // expo in [-10, 10]

bool is_op(int id);
bool is_var(int id);
bool is_int(int id);
bool is_const(int id);

OpKind op_of(int id);
int var_index(int id);
int int_value(int id);
int const_exponent(int id);

// PAD/BOS have no arity; operators theirs; leaves 0.
int token_arity(int id);

std::string token_name(int id);
int token_from_name(const std::string& name); // throws ExprError on unknown
uint64_t vocab_hash();

} // namespace vocab

// ---------------------------------------------------------------------------
// Pre-order token sequence with aligned constant payloads. mantissas and
// exponents are nonzero only at const-token positions.
// ---------------------------------------------------------------------------
struct TokenSequence {
    std::vector<int> symbols;
    std::vector<double> mantissas;
    std::vector<int> exponents;

    size_t size() const { return symbols.size(); }
    uint64_t skeleton_hash() const; // symbols only
};

TokenSequence to_preorder(const Expr& e, int max_expr_len);
ExprPtr from_preorder(const TokenSequence& seq);

// Running-arity validity: need starts at 1, each token adds arity-1, must
// reach exactly 0 at the end and never before.
bool arity_valid(const std::vector<int>& symbols);

// ---------------------------------------------------------------------------
// Sampling domains. Benchmarks and corpus generation default to [-1,1]^d,
// or [0,2]^d when the tree contains log, sqrt, or pow with a non-integer /
// non-constant exponent.
// ---------------------------------------------------------------------------
struct Domain {
    double lo[2] = {-1.0, -1.0};
    double hi[2] = {1.0, 1.0};
};

Domain default_domain(const Expr& e, int d);

// ---------------------------------------------------------------------------
// Numeric equivalence over 256 quasi-random (Halton) points on the shared
// default domain: |a(X)-b(X)| <= 1e-6 * (1+|b(X)|) wherever both are valid,
// and both valid on at least 90% of the points.
// ---------------------------------------------------------------------------
bool equivalent(const Expr& a, const Expr& b, int d);

// Halton sequence point i (1-based) in the given base, in [0,1).
double halton(int64_t index, int base);

// ---------------------------------------------------------------------------
// Parsing / printing (infix; '**' or '^' for power, call syntax unaries,
// variables x and y, 'pi' literal).
// ---------------------------------------------------------------------------
struct ParseError : ExprError {
    size_t position;
    ParseError(const std::string& msg, size_t pos)
        : ExprError(msg + " (at position " + std::to_string(pos) + ")"), position(pos) {}
};

ExprPtr parse(const std::string& text, int d);
std::string to_string(const Expr& e);

// ---------------------------------------------------------------------------
// Random expression sampling (recursive slot expansion, Symformer-flavoured).
// ---------------------------------------------------------------------------
struct GrammarConfig {
    int dims = 1;
    int max_depth = 8;      // nodes on the deepest root-to-leaf path
    int max_expr_len = 50;
    int min_ops = 2;
    int max_ops = 12;
    int unary_chain_limit = 2;
    double const_prob = 0.3;
    double small_int_prob = 0.5;
    // weight per OpKind, Add..Sqrt order
    std::vector<double> op_weights = {3.0, 2.0, 3.0, 1.0, 0.75, 1.0, 1.0, 0.2, 0.2, 0.5, 0.5, 0.5};
};

// Deterministic given rng. Throws ExprError after 100 rejected candidates.
ExprPtr sample_expression(const GrammarConfig& cfg, Rng& rng);

} // namespace dncl::expr
