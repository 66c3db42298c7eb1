#include "dncl/expr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dncl::expr {

// Slot-expansion sampler: draw a target operator count, grow the tree by
// turning uniformly chosen open slots into weighted operators (respecting
// the depth cap and the unary-chain limit), then fill the remaining slots
// with leaves. Gives a roughly uniform size spread instead of the heavy
// small-tree bias of naive recursive descent.
namespace {

struct Slot {
    Expr* parent = nullptr; // null for root
    int child = 0;          // 0 = a, 1 = b
    int depth = 1;          // node depth, root = 1
    int unary_chain = 0;    // consecutive unary ancestors
};

struct Builder {
    const GrammarConfig& cfg;
    Rng& rng;
    std::shared_ptr<Expr> root;
    std::vector<Slot> open;
    int ops_used = 0;

    Builder(const GrammarConfig& c, Rng& r) : cfg(c), rng(r) {}

    Expr* place(const Slot& s, std::shared_ptr<Expr> node) {
        Expr* raw = node.get();
        if (!s.parent) root = std::move(node);
        else if (s.child == 0) s.parent->a = std::move(node);
        else s.parent->b = std::move(node);
        return raw;
    }

    OpKind choose_op(bool allow_unary) {
        double total = 0.0;
        for (int k = 0; k < kNumOps; ++k) {
            if (!allow_unary && arity(OpKind(k)) == 1) continue;
            total += cfg.op_weights[size_t(k)];
        }
        double t = rng.uniform() * total;
        for (int k = 0; k < kNumOps; ++k) {
            if (!allow_unary && arity(OpKind(k)) == 1) continue;
            t -= cfg.op_weights[size_t(k)];
            if (t <= 0.0) return OpKind(k);
        }
        return OpKind::Add;
    }

    double choose_constant() {
        if (rng.uniform() < cfg.small_int_prob) {
            // integers -5..5 without 0 (a zero leaf folds its parent away)
            const int opts[10] = {-5, -4, -3, -2, -1, 1, 2, 3, 4, 5};
            return double(opts[rng.uniform_int(10)]);
        }
        double m;
        do {
            m = rng.uniform(-1.0, 1.0);
        } while (std::abs(m) < 1e-4);
        const int expo = int(rng.uniform_int(5)) - 2; // 10^{-2..2}
        return m * std::pow(10.0, expo);
    }

    std::shared_ptr<Expr> leaf() {
        auto e = std::make_shared<Expr>();
        if (rng.uniform() < cfg.const_prob) {
            e->tag = Expr::Tag::Const;
            e->value = choose_constant();
        } else {
            e->tag = Expr::Tag::Var;
            e->var = int(rng.uniform_int(uint64_t(cfg.dims)));
        }
        return e;
    }

    std::shared_ptr<Expr> build(int target_ops) {
        root.reset();
        open.clear();
        open.push_back(Slot{});
        ops_used = 0;

        while (ops_used < target_ops) {
            // slots that can still hold an operator (children fit the depth cap)
            std::vector<size_t> expandable;
            for (size_t i = 0; i < open.size(); ++i)
                if (open[i].depth + 1 <= cfg.max_depth) expandable.push_back(i);
            if (expandable.empty()) break;

            const size_t pick = expandable[rng.uniform_int(expandable.size())];
            const Slot s = open[pick];
            open.erase(open.begin() + ptrdiff_t(pick));

            const bool allow_unary = s.unary_chain < cfg.unary_chain_limit;
            const OpKind k = choose_op(allow_unary);

            auto node = std::make_shared<Expr>();
            node->tag = Expr::Tag::Op;
            node->op = k;
            Expr* raw = place(s, std::move(node));
            ++ops_used;

            const int chain = arity(k) == 1 ? s.unary_chain + 1 : 0;
            open.push_back(Slot{raw, 0, s.depth + 1, chain});
            if (arity(k) == 2) open.push_back(Slot{raw, 1, s.depth + 1, chain});
        }

        for (const Slot& s : open) place(s, leaf());
        open.clear();
        return root;
    }
};

bool acceptable(const Expr& e, const GrammarConfig& cfg) {
    if (!has_variable(e)) return false;           // also rejects const-foldable roots
    if (max_var_index(e) >= cfg.dims) return false;
    if (depth(e) > cfg.max_depth) return false;
    try {
        TokenSequence seq = to_preorder(e, cfg.max_expr_len);
        if (!arity_valid(seq.symbols)) return false;
    } catch (const ExprError&) {
        return false;
    }
    return true;
}

} // namespace

ExprPtr sample_expression(const GrammarConfig& cfg, Rng& rng) {
    if (cfg.dims < 1 || cfg.dims > 2) throw ExprError("grammar dims must be 1 or 2");
    if (cfg.op_weights.size() != size_t(kNumOps)) throw ExprError("need one weight per operator");

    Builder b(cfg, rng);
    for (int attempt = 0; attempt < 100; ++attempt) {
        const int span = std::max(0, cfg.max_ops - cfg.min_ops);
        const int target = cfg.min_ops + int(rng.uniform_int(uint64_t(span) + 1));
        std::shared_ptr<Expr> e = b.build(target);
        if (e && acceptable(*e, cfg)) return e;
    }
    throw ExprError("expression sampling budget exhausted (100 rejections)");
}

} // namespace dncl::expr
