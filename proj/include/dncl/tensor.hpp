#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dncl/rng.hpp"

namespace dncl::tensor {

struct TensorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Rank <= 3, row-major. Rank-3 activations are (batch, tokens, features).
struct Shape {
    int64_t dim[3] = {1, 1, 1};
    int rank = 1;

    int64_t numel() const { return dim[0] * dim[1] * dim[2]; }
    int64_t last() const { return dim[rank - 1]; }
    std::string str() const;
    bool operator==(const Shape& o) const {
        if (rank != o.rank) return false;
        for (int i = 0; i < rank; ++i)
            if (dim[i] != o.dim[i]) return false;
        return true;
    }
};

Shape make_shape(int64_t a);
Shape make_shape(int64_t a, int64_t b);
Shape make_shape(int64_t a, int64_t b, int64_t c);

// A trainable tensor living outside any tape, with Adam state.
struct Parameter {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> m, v; // Adam moments, lazily sized

    Parameter() = default;
    Parameter(std::string n, Shape s, std::vector<double> init)
        : name(std::move(n)), shape(s), value(std::move(init)) {}
    int64_t numel() const { return shape.numel(); }
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction, t counted from 1. Deterministic.
void adam_step(Parameter& p, const double* grad, const AdamConfig& cfg, int64_t t);

// Handle into a tape.
struct T {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// One forward graph. Nodes append in topological order, so backward() is a
// single reverse sweep; gradients accumulate additively across fan-out.
class Tape {
public:
    // --- leaves -----------------------------------------------------------
    T input(const double* data, Shape s, bool requires_grad);
    T constant(std::vector<double> data, Shape s);
    T constant_fill(double v, Shape s);
    // Memoized per tape: the second request for the same Parameter returns
    // the same node, which is what parameter sharing means here.
    T param(Parameter& p);

    // --- arithmetic -------------------------------------------------------
    // a rank-2 (M,K) or rank-3 (B,M,K) folded over the batch; b rank-2.
    // Transpose flags only for the rank-2 x rank-2 case.
    T matmul(T a, T b, bool trans_a = false, bool trans_b = false);
    T bmm(T a, T b, bool trans_b = false); // both rank-3, per-batch matmul
    T add(T a, T b);
    T sub(T a, T b);
    T add_rowvec(T a, T bias); // bias rank-1 over the last dim
    T mul(T a, T b);
    T div(T a, T b);
    T scale(T a, double s);
    T exp_(T a);
    T log_(T a);
    T tanh_(T a);
    T relu_(T a);

    // --- shape / structure --------------------------------------------------
    T transpose2d(T a);
    T concat_axis1(T a, T b);                       // rank-3
    T slice_axis0(T a, int64_t begin, int64_t end); // leading axis
    T split_heads(T x, int64_t heads);              // (B,n,H*dh) -> (B*H,n,dh)
    T merge_heads(T x, int64_t heads);              // (B*H,n,dh) -> (B,n,H*dh)
    T broadcast_rows(T p, int64_t batch);           // (m,h) -> (B,m,h)
    T mean_axis1(T a);                              // (B,m,h) -> (B,h)

    // --- normalization / activation over rows -------------------------------
    T softmax_last(T a);
    T log_softmax_last(T a);
    T layer_norm(T x, T gamma, T beta, double eps = 1e-5);
    T l2_normalize_rows(T a, double eps = 1e-12);

    // --- lookups, masking, regularization -----------------------------------
    T embedding(T table, const std::vector<int>& ids, int64_t batch, int64_t len);
    // mask: 1 = replace with `value`. Size either numel or rows*cols of the
    // trailing two dims (broadcast over the leading axis).
    T masked_fill(T a, const std::vector<uint8_t>& mask, double value);
    T dropout(T a, double p, bool training, Rng& rng);

    // --- reductions / losses -------------------------------------------------
    T sum_all(T a); // scalar
    // logits (N,C) or (B,L,C) folded; labels/weights length N. Weight 0
    // excludes a position; loss is the weighted mean of smoothed CE.
    T ce_loss(T logits, const std::vector<int>& labels,
              const std::vector<double>& weights, double smoothing);

    // softmax(Q Kt / sqrt(dh)) V over rank-3 (G,n,dh)x(G,s,dh)x(G,s,dv);
    // mask (n*s or G*n*s), 1 = blocked.
    T scaled_dot_attention(T q, T k, T v, const std::vector<uint8_t>* mask);

    // --- driver ----------------------------------------------------------------
    void backward(T loss); // throws if called twice
    void reset_backward_flag() { backward_done_ = false; }

    const std::vector<double>& val(T t) const { return node(t.id).val; }
    const std::vector<double>& grad(T t) const;
    Shape shape(T t) const { return node(t.id).shape; }
    bool requires_grad(T t) const { return node(t.id).rg; }
    size_t node_count() const { return nodes_.size(); }

    const std::vector<std::pair<Parameter*, T>>& param_bindings() const {
        return bindings_;
    }

private:
    struct Node {
        Shape shape;
        std::vector<double> val;
        std::vector<double> grad;
        bool rg = false;
        std::function<void(Tape&)> back; // null for leaves
    };

    int new_node(Shape s, bool rg);
    Node& node(int id) { return nodes_[size_t(id)]; }
    const Node& node(int id) const { return nodes_[size_t(id)]; }
    // grad buffer of id, or nullptr if that node does not require grad
    double* gptr(int id);
    void ensure_grad(int id);

    std::deque<Node> nodes_;
    std::vector<std::pair<Parameter*, T>> bindings_;
    bool backward_done_ = false;
};

} // namespace dncl::tensor
