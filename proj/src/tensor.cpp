#include "dncl/tensor.hpp"

#include "dncl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

namespace dncl::tensor {

std::string Shape::str() const {
    std::string s = "(";
    for (int i = 0; i < rank; ++i) {
        if (i) s += ",";
        s += std::to_string(dim[i]);
    }
    return s + ")";
}

Shape make_shape(int64_t a) {
    Shape s;
    s.rank = 1;
    s.dim[0] = a;
    return s;
}
Shape make_shape(int64_t a, int64_t b) {
    Shape s;
    s.rank = 2;
    s.dim[0] = a;
    s.dim[1] = b;
    return s;
}
Shape make_shape(int64_t a, int64_t b, int64_t c) {
    Shape s;
    s.rank = 3;
    s.dim[0] = a;
    s.dim[1] = b;
    s.dim[2] = c;
    return s;
}

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw TensorError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

} // namespace

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------
void adam_step(Parameter& p, const double* grad, const AdamConfig& cfg, int64_t t) {
    const size_t n = size_t(p.numel());
    if (p.m.size() != n) p.m.assign(n, 0.0);
    if (p.v.size() != n) p.v.assign(n, 0.0);
    if (t < 1) throw TensorError("adam step count must be >= 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
        p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = p.m[i] / bc1;
        const double vhat = p.v[i] / bc2;
        p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

// ---------------------------------------------------------------------------
// Tape plumbing
// ---------------------------------------------------------------------------
int Tape::new_node(Shape s, bool rg) {
    Node n;
    n.shape = s;
    n.rg = rg;
    n.val.assign(size_t(s.numel()), 0.0);
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
}

void Tape::ensure_grad(int id) {
    Node& n = node(id);
    if (n.rg && n.grad.empty()) n.grad.assign(n.val.size(), 0.0);
}

double* Tape::gptr(int id) {
    Node& n = node(id);
    if (!n.rg) return nullptr;
    if (n.grad.empty()) n.grad.assign(n.val.size(), 0.0);
    return n.grad.data();
}

const std::vector<double>& Tape::grad(T t) const {
    const Node& n = node(t.id);
    if (!n.rg) throw TensorError("node does not require grad");
    if (n.grad.empty()) throw TensorError("grad not populated; call backward first");
    return n.grad;
}

void Tape::backward(T loss) {
    if (backward_done_) throw TensorError("backward called twice without reset");
    backward_done_ = true;
    Node& l = node(loss.id);
    if (l.shape.numel() != 1) throw TensorError("backward needs a scalar loss");
    if (!l.rg) throw TensorError("loss does not depend on any parameter");
    ensure_grad(loss.id);
    l.grad[0] = 1.0;
    for (int id = int(nodes_.size()) - 1; id >= 0; --id) {
        Node& n = node(id);
        if (n.rg && n.back && !n.grad.empty()) n.back(*this);
    }
}

// ---------------------------------------------------------------------------
// Leaves
// ---------------------------------------------------------------------------
T Tape::input(const double* data, Shape s, bool requires_grad) {
    const int id = new_node(s, requires_grad);
    std::memcpy(node(id).val.data(), data, size_t(s.numel()) * sizeof(double));
    return T{id};
}

T Tape::constant(std::vector<double> data, Shape s) {
    if (int64_t(data.size()) != s.numel())
        throw TensorError("constant data length does not match shape " + s.str());
    const int id = new_node(s, false);
    node(id).val = std::move(data);
    return T{id};
}

T Tape::constant_fill(double v, Shape s) {
    const int id = new_node(s, false);
    std::fill(node(id).val.begin(), node(id).val.end(), v);
    return T{id};
}

T Tape::param(Parameter& p) {
    for (const auto& [pp, t] : bindings_)
        if (pp == &p) return t;
    T t = input(p.value.data(), p.shape, true);
    bindings_.emplace_back(&p, t);
    return t;
}

// ---------------------------------------------------------------------------
// Matmul family
// ---------------------------------------------------------------------------
T Tape::matmul(T ta, T tb, bool trans_a, bool trans_b) {
    const Shape sa = shape(ta), sb = shape(tb);
    if (sb.rank != 2) shape_fail("matmul: rhs must be rank-2", sa, sb);

    if (sa.rank == 3) {
        if (trans_a || trans_b) throw TensorError("matmul: transpose flags need rank-2 operands");
        const int64_t B = sa.dim[0], M = sa.dim[1], K = sa.dim[2], N = sb.dim[1];
        if (sb.dim[0] != K) shape_fail("matmul", sa, sb);
        const int id = new_node(make_shape(B, M, N), requires_grad(ta) || requires_grad(tb));
        kern::active().gemm_nn(node(ta.id).val.data(), node(tb.id).val.data(),
                               node(id).val.data(), B * M, K, N, false);
        node(id).back = [id, a = ta.id, b = tb.id, B, M, K, N](Tape& tp) {
            const double* g = tp.node(id).grad.data();
            if (double* ga = tp.gptr(a))
                kern::active().gemm_nt(g, tp.node(b).val.data(), ga, B * M, N, K, true);
            if (double* gb = tp.gptr(b))
                kern::active().gemm_tn(tp.node(a).val.data(), g, gb, K, B * M, N, true);
        };
        return T{id};
    }

    if (sa.rank != 2) shape_fail("matmul: lhs must be rank-2 or rank-3", sa, sb);
    if (trans_a && trans_b) throw TensorError("matmul: trans_a && trans_b unsupported");

    int64_t M, K, N;
    if (!trans_a && !trans_b) {
        M = sa.dim[0]; K = sa.dim[1]; N = sb.dim[1];
        if (sb.dim[0] != K) shape_fail("matmul", sa, sb);
    } else if (!trans_a && trans_b) {
        M = sa.dim[0]; K = sa.dim[1]; N = sb.dim[0];
        if (sb.dim[1] != K) shape_fail("matmul^T", sa, sb);
    } else {
        K = sa.dim[0]; M = sa.dim[1]; N = sb.dim[1];
        if (sb.dim[0] != K) shape_fail("^Tmatmul", sa, sb);
    }

    const int id = new_node(make_shape(M, N), requires_grad(ta) || requires_grad(tb));
    const double* A = node(ta.id).val.data();
    const double* Bv = node(tb.id).val.data();
    double* C = node(id).val.data();
    if (!trans_a && !trans_b) kern::active().gemm_nn(A, Bv, C, M, K, N, false);
    else if (trans_b) kern::active().gemm_nt(A, Bv, C, M, K, N, false);
    else kern::active().gemm_tn(A, Bv, C, M, K, N, false);

    node(id).back = [id, a = ta.id, b = tb.id, trans_a, trans_b, M, K, N](Tape& tp) {
        const double* g = tp.node(id).grad.data();
        const double* A = tp.node(a).val.data();
        const double* B = tp.node(b).val.data();
        double* ga = tp.gptr(a);
        double* gb = tp.gptr(b);
        const auto& kn = kern::active();
        if (!trans_a && !trans_b) {
            if (ga) kn.gemm_nt(g, B, ga, M, N, K, true);
            if (gb) kn.gemm_tn(A, g, gb, K, M, N, true);
        } else if (trans_b) { // C = A * B^T, B is (N,K)
            if (ga) kn.gemm_nn(g, B, ga, M, N, K, true);
            if (gb) kn.gemm_tn(g, A, gb, N, M, K, true);
        } else { // C = A^T * B, A is (K,M)
            if (ga) kn.gemm_nt(B, g, ga, K, N, M, true);
            if (gb) kn.gemm_nn(A, g, gb, K, M, N, true);
        }
    };
    return T{id};
}

T Tape::bmm(T ta, T tb, bool trans_b) {
    const Shape sa = shape(ta), sb = shape(tb);
    if (sa.rank != 3 || sb.rank != 3 || sa.dim[0] != sb.dim[0]) shape_fail("bmm", sa, sb);
    const int64_t G = sa.dim[0], M = sa.dim[1], K = sa.dim[2];
    const int64_t N = trans_b ? sb.dim[1] : sb.dim[2];
    if ((trans_b ? sb.dim[2] : sb.dim[1]) != K) shape_fail("bmm", sa, sb);

    const int id = new_node(make_shape(G, M, N), requires_grad(ta) || requires_grad(tb));
    const auto& kn = kern::active();
    for (int64_t g = 0; g < G; ++g) {
        const double* A = node(ta.id).val.data() + g * M * K;
        const double* B = node(tb.id).val.data() + g * (trans_b ? N * K : K * N);
        double* C = node(id).val.data() + g * M * N;
        if (trans_b) kn.gemm_nt(A, B, C, M, K, N, false);
        else kn.gemm_nn(A, B, C, M, K, N, false);
    }

    node(id).back = [id, a = ta.id, b = tb.id, trans_b, G, M, K, N](Tape& tp) {
        const auto& kn = kern::active();
        double* ga = tp.gptr(a);
        double* gb = tp.gptr(b);
        for (int64_t g = 0; g < G; ++g) {
            const double* gr = tp.node(id).grad.data() + g * M * N;
            const double* A = tp.node(a).val.data() + g * M * K;
            const double* B = tp.node(b).val.data() + g * (trans_b ? N * K : K * N);
            if (!trans_b) {
                if (ga) kn.gemm_nt(gr, B, ga + g * M * K, M, N, K, true);
                if (gb) kn.gemm_tn(A, gr, gb + g * K * N, K, M, N, true);
            } else {
                if (ga) kn.gemm_nn(gr, B, ga + g * M * K, M, N, K, true);
                if (gb) kn.gemm_tn(gr, A, gb + g * N * K, N, M, K, true);
            }
        }
    };
    return T{id};
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------
T Tape::add(T ta, T tb) {
    if (!(shape(ta) == shape(tb))) shape_fail("add", shape(ta), shape(tb));
    const int id = new_node(shape(ta), requires_grad(ta) || requires_grad(tb));
    const int64_t n = shape(ta).numel();
    kern::active().vadd(node(ta.id).val.data(), node(tb.id).val.data(), node(id).val.data(), n);
    node(id).back = [id, a = ta.id, b = tb.id, n](Tape& tp) {
        const double* g = tp.node(id).grad.data();
        if (double* ga = tp.gptr(a)) kern::active().axpy(1.0, g, ga, n);
        if (double* gb = tp.gptr(b)) kern::active().axpy(1.0, g, gb, n);
    };
    return T{id};
}

T Tape::sub(T ta, T tb) {
    if (!(shape(ta) == shape(tb))) shape_fail("sub", shape(ta), shape(tb));
    const int id = new_node(shape(ta), requires_grad(ta) || requires_grad(tb));
    const int64_t n = shape(ta).numel();
    const double* a = node(ta.id).val.data();
    const double* b = node(tb.id).val.data();
    double* o = node(id).val.data();
    for (int64_t i = 0; i < n; ++i) o[i] = a[i] - b[i];
    node(id).back = [id, a = ta.id, b = tb.id, n](Tape& tp) {
        const double* g = tp.node(id).grad.data();
        if (double* ga = tp.gptr(a)) kern::active().axpy(1.0, g, ga, n);
        if (double* gb = tp.gptr(b)) kern::active().axpy(-1.0, g, gb, n);
    };
    return T{id};
}

T Tape::add_rowvec(T ta, T tbias) {
    const Shape sa = shape(ta), sb = shape(tbias);
    if (sb.rank != 1 || sb.dim[0] != sa.last()) shape_fail("add_rowvec", sa, sb);
    const int64_t C = sa.last(), rows = sa.numel() / C;
    const int id = new_node(sa, requires_grad(ta) || requires_grad(tbias));
    const double* a = node(ta.id).val.data();
    const double* b = node(tbias.id).val.data();
    double* o = node(id).val.data();
    for (int64_t r = 0; r < rows; ++r) kern::active().vadd(a + r * C, b, o + r * C, C);
    node(id).back = [id, a = ta.id, b = tbias.id, rows, C](Tape& tp) {
        const double* g = tp.node(id).grad.data();
        if (double* ga = tp.gptr(a)) kern::active().axpy(1.0, g, ga, rows * C);
        if (double* gb = tp.gptr(b))
            for (int64_t r = 0; r < rows; ++r) kern::active().axpy(1.0, g + r * C, gb, C);
    };
    return T{id};
}

T Tape::mul(T ta, T tb) {
    if (!(shape(ta) == shape(tb))) shape_fail("mul", shape(ta), shape(tb));
    const int id = new_node(shape(ta), requires_grad(ta) || requires_grad(tb));
    const int64_t n = shape(ta).numel();
    kern::active().vmul(node(ta.id).val.data(), node(tb.id).val.data(), node(id).val.data(), n);
    node(id).back = [id, a = ta.id, b = tb.id, n](Tape& tp) {
        const double* g = tp.node(id).grad.data();
        if (double* ga = tp.gptr(a)) {
            const double* bv = tp.node(b).val.data();
            for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
        }
        if (double* gb = tp.gptr(b)) {
            const double* av = tp.node(a).val.data();
            for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
        }
    };
    return T{id};
}

T Tape::div(T ta, T tb) {
    if (!(shape(ta) == shape(tb))) shape_fail("div", shape(ta), shape(tb));
    const int id = new_node(shape(ta), requires_grad(ta) || requires_grad(tb));
    const int64_t n = shape(ta).numel();
    const double* a = node(ta.id).val.data();
    const double* b = node(tb.id).val.data();
    double* o = node(id).val.data();
    for (int64_t i = 0; i < n; ++i) o[i] = a[i] / b[i];
    node(id).back = [id, a = ta.id, b = tb.id, n](Tape& tp) {
        const double* g = tp.node(id).grad.data();
        const double* av = tp.node(a).val.data();
        const double* bv = tp.node(b).val.data();
        if (double* ga = tp.gptr(a))
            for (int64_t i = 0; i < n; ++i) ga[i] += g[i] / bv[i];
        if (double* gb = tp.gptr(b))
            for (int64_t i = 0; i < n; ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
    };
    return T{id};
}

T Tape::scale(T ta, double s) {
    const int id = new_node(shape(ta), requires_grad(ta));
    const int64_t n = shape(ta).numel();
    kern::active().vscale(node(ta.id).val.data(), s, node(id).val.data(), n);
    node(id).back = [id, a = ta.id, s, n](Tape& tp) {
        if (double* ga = tp.gptr(a))
            kern::active().axpy(s, tp.node(id).grad.data(), ga, n);
    };
    return T{id};
}

T Tape::exp_(T ta) {
    const int id = new_node(shape(ta), requires_grad(ta));
    const int64_t n = shape(ta).numel();
    const double* a = node(ta.id).val.data();
    double* o = node(id).val.data();
    for (int64_t i = 0; i < n; ++i) o[i] = std::exp(a[i]);
    node(id).back = [id, a = ta.id, n](Tape& tp) {
        if (double* ga = tp.gptr(a)) {
            const double* g = tp.node(id).grad.data();
            const double* ov = tp.node(id).val.data();
            for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * ov[i];
        }
    };
    return T{id};
}

T Tape::log_(T ta) {
    const int id = new_node(shape(ta), requires_grad(ta));
    const int64_t n = shape(ta).numel();
    const double* a = node(ta.id).val.data();
    double* o = node(id).val.data();
    for (int64_t i = 0; i < n; ++i) o[i] = std::log(a[i]);
    node(id).back = [id, a = ta.id, n](Tape& tp) {
        if (double* ga = tp.gptr(a)) {
            const double* g = tp.node(id).grad.data();
            const double* av = tp.node(a).val.data();
            for (int64_t i = 0; i < n; ++i) ga[i] += g[i] / av[i];
        }
    };
    return T{id};
}

T Tape::tanh_(T ta) {
    const int id = new_node(shape(ta), requires_grad(ta));
    const int64_t n = shape(ta).numel();
    const double* a = node(ta.id).val.data();
    double* o = node(id).val.data();
    for (int64_t i = 0; i < n; ++i) o[i] = std::tanh(a[i]);
    node(id).back = [id, a = ta.id, n](Tape& tp) {
        if (double* ga = tp.gptr(a)) {
            const double* g = tp.node(id).grad.data();
            const double* ov = tp.node(id).val.data();
            for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * (1.0 - ov[i] * ov[i]);
        }
    };
    return T{id};
}

T Tape::relu_(T ta) {
    const int id = new_node(shape(ta), requires_grad(ta));
    const int64_t n = shape(ta).numel();
    const double* a = node(ta.id).val.data();
    double* o = node(id).val.data();
    for (int64_t i = 0; i < n; ++i) o[i] = a[i] > 0.0 ? a[i] : 0.0;
    node(id).back = [id, a = ta.id, n](Tape& tp) {
        if (double* ga = tp.gptr(a)) {
            const double* g = tp.node(id).grad.data();
            const double* av = tp.node(a).val.data();
            for (int64_t i = 0; i < n; ++i)
                if (av[i] > 0.0) ga[i] += g[i];
        }
    };
    return T{id};
}

// ---------------------------------------------------------------------------
// Structure
// ---------------------------------------------------------------------------
T Tape::transpose2d(T ta) {
    const Shape s = shape(ta);
    if (s.rank != 2) throw TensorError("transpose2d needs rank-2, got " + s.str());
    const int64_t M = s.dim[0], N = s.dim[1];
    const int id = new_node(make_shape(N, M), requires_grad(ta));
    const double* a = node(ta.id).val.data();
    double* o = node(id).val.data();
    for (int64_t i = 0; i < M; ++i)
        for (int64_t j = 0; j < N; ++j) o[j * M + i] = a[i * N + j];
    node(id).back = [id, a = ta.id, M, N](Tape& tp) {
        if (double* ga = tp.gptr(a)) {
            const double* g = tp.node(id).grad.data();
            for (int64_t j = 0; j < N; ++j)
                for (int64_t i = 0; i < M; ++i) ga[i * N + j] += g[j * M + i];
        }
    };
    return T{id};
}

T Tape::concat_axis1(T ta, T tb) {
    const Shape sa = shape(ta), sb = shape(tb);
    if (sa.rank != 3 || sb.rank != 3 || sa.dim[0] != sb.dim[0] || sa.dim[2] != sb.dim[2])
        shape_fail("concat_axis1", sa, sb);
    const int64_t B = sa.dim[0], m1 = sa.dim[1], m2 = sb.dim[1], H = sa.dim[2];
    const int id = new_node(make_shape(B, m1 + m2, H), requires_grad(ta) || requires_grad(tb));
    const double* a = node(ta.id).val.data();
    const double* b = node(tb.id).val.data();
    double* o = node(id).val.data();
    for (int64_t bb = 0; bb < B; ++bb) {
        std::memcpy(o + bb * (m1 + m2) * H, a + bb * m1 * H, size_t(m1 * H) * sizeof(double));
        std::memcpy(o + bb * (m1 + m2) * H + m1 * H, b + bb * m2 * H,
                    size_t(m2 * H) * sizeof(double));
    }
    node(id).back = [id, a = ta.id, b = tb.id, B, m1, m2, H](Tape& tp) {
        const double* g = tp.node(id).grad.data();
        if (double* ga = tp.gptr(a))
            for (int64_t bb = 0; bb < B; ++bb)
                kern::active().axpy(1.0, g + bb * (m1 + m2) * H, ga + bb * m1 * H, m1 * H);
        if (double* gb = tp.gptr(b))
            for (int64_t bb = 0; bb < B; ++bb)
                kern::active().axpy(1.0, g + bb * (m1 + m2) * H + m1 * H, gb + bb * m2 * H,
                                    m2 * H);
    };
    return T{id};
}

T Tape::slice_axis0(T ta, int64_t begin, int64_t end) {
    const Shape s = shape(ta);
    if (begin < 0 || end > s.dim[0] || begin >= end)
        throw TensorError("slice_axis0: bad range on " + s.str());
    const int64_t inner = s.numel() / s.dim[0];
    Shape os = s;
    os.dim[0] = end - begin;
    const int id = new_node(os, requires_grad(ta));
    std::memcpy(node(id).val.data(), node(ta.id).val.data() + begin * inner,
                size_t((end - begin) * inner) * sizeof(double));
    node(id).back = [id, a = ta.id, begin, inner, len = end - begin](Tape& tp) {
        if (double* ga = tp.gptr(a))
            kern::active().axpy(1.0, tp.node(id).grad.data(), ga + begin * inner, len * inner);
    };
    return T{id};
}

T Tape::split_heads(T tx, int64_t heads) {
    const Shape s = shape(tx);
    if (s.rank != 3 || s.dim[2] % heads != 0)
        throw TensorError("split_heads: bad shape " + s.str());
    const int64_t B = s.dim[0], n = s.dim[1], dh = s.dim[2] / heads;
    const int id = new_node(make_shape(B * heads, n, dh), requires_grad(tx));
    const double* x = node(tx.id).val.data();
    double* o = node(id).val.data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t h = 0; h < heads; ++h)
            for (int64_t i = 0; i < n; ++i)
                std::memcpy(o + ((b * heads + h) * n + i) * dh,
                            x + (b * n + i) * heads * dh + h * dh, size_t(dh) * sizeof(double));
    node(id).back = [id, a = tx.id, B, heads, n, dh](Tape& tp) {
        if (double* ga = tp.gptr(a)) {
            const double* g = tp.node(id).grad.data();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t h = 0; h < heads; ++h)
                    for (int64_t i = 0; i < n; ++i)
                        kern::active().axpy(1.0, g + ((b * heads + h) * n + i) * dh,
                                            ga + (b * n + i) * heads * dh + h * dh, dh);
        }
    };
    return T{id};
}

T Tape::merge_heads(T tx, int64_t heads) {
    const Shape s = shape(tx);
    if (s.rank != 3 || s.dim[0] % heads != 0)
        throw TensorError("merge_heads: bad shape " + s.str());
    const int64_t B = s.dim[0] / heads, n = s.dim[1], dh = s.dim[2];
    const int id = new_node(make_shape(B, n, heads * dh), requires_grad(tx));
    const double* x = node(tx.id).val.data();
    double* o = node(id).val.data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t h = 0; h < heads; ++h)
            for (int64_t i = 0; i < n; ++i)
                std::memcpy(o + (b * n + i) * heads * dh + h * dh,
                            x + ((b * heads + h) * n + i) * dh, size_t(dh) * sizeof(double));
    node(id).back = [id, a = tx.id, B, heads, n, dh](Tape& tp) {
        if (double* ga = tp.gptr(a)) {
            const double* g = tp.node(id).grad.data();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t h = 0; h < heads; ++h)
                    for (int64_t i = 0; i < n; ++i)
                        kern::active().axpy(1.0, g + (b * n + i) * heads * dh + h * dh,
                                            ga + ((b * heads + h) * n + i) * dh, dh);
        }
    };
    return T{id};
}

T Tape::broadcast_rows(T tp_, int64_t batch) {
    const Shape s = shape(tp_);
    if (s.rank != 2) throw TensorError("broadcast_rows needs rank-2, got " + s.str());
    const int64_t m = s.dim[0], h = s.dim[1];
    const int id = new_node(make_shape(batch, m, h), requires_grad(tp_));
    const double* p = node(tp_.id).val.data();
    double* o = node(id).val.data();
    for (int64_t b = 0; b < batch; ++b)
        std::memcpy(o + b * m * h, p, size_t(m * h) * sizeof(double));
    node(id).back = [id, a = tp_.id, batch, mh = m * h](Tape& tp) {
        if (double* ga = tp.gptr(a)) {
            const double* g = tp.node(id).grad.data();
            for (int64_t b = 0; b < batch; ++b) kern::active().axpy(1.0, g + b * mh, ga, mh);
        }
    };
    return T{id};
}

T Tape::mean_axis1(T ta) {
    const Shape s = shape(ta);
    if (s.rank != 3) throw TensorError("mean_axis1 needs rank-3, got " + s.str());
    const int64_t B = s.dim[0], m = s.dim[1], h = s.dim[2];
    const int id = new_node(make_shape(B, h), requires_grad(ta));
    const double* a = node(ta.id).val.data();
    double* o = node(id).val.data();
    const double inv = 1.0 / double(m);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < m; ++i)
            kern::active().axpy(inv, a + (b * m + i) * h, o + b * h, h);
    node(id).back = [id, a = ta.id, B, m, h, inv](Tape& tp) {
        if (double* ga = tp.gptr(a)) {
            const double* g = tp.node(id).grad.data();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < m; ++i)
                    kern::active().axpy(inv, g + b * h, ga + (b * m + i) * h, h);
        }
    };
    return T{id};
}

// ---------------------------------------------------------------------------
// Row-wise normalizations
// ---------------------------------------------------------------------------
T Tape::softmax_last(T ta) {
    const Shape s = shape(ta);
    const int64_t C = s.last(), rows = s.numel() / C;
    const int id = new_node(s, requires_grad(ta));
    const double* a = node(ta.id).val.data();
    double* o = node(id).val.data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = a + r * C;
        double* y = o + r * C;
        double mx = x[0];
        for (int64_t c = 1; c < C; ++c) mx = std::max(mx, x[c]);
        double sum = 0.0;
        for (int64_t c = 0; c < C; ++c) {
            y[c] = std::exp(x[c] - mx);
            sum += y[c];
        }
        const double inv = 1.0 / sum;
        for (int64_t c = 0; c < C; ++c) y[c] *= inv;
    }
    node(id).back = [id, a = ta.id, rows, C](Tape& tp) {
        if (double* ga = tp.gptr(a)) {
            const double* g = tp.node(id).grad.data();
            const double* p = tp.node(id).val.data();
            for (int64_t r = 0; r < rows; ++r) {
                const double dot = kern::active().dot(g + r * C, p + r * C, C);
                for (int64_t c = 0; c < C; ++c)
                    ga[r * C + c] += (g[r * C + c] - dot) * p[r * C + c];
            }
        }
    };
    return T{id};
}

T Tape::log_softmax_last(T ta) {
    const Shape s = shape(ta);
    const int64_t C = s.last(), rows = s.numel() / C;
    const int id = new_node(s, requires_grad(ta));
    const double* a = node(ta.id).val.data();
    double* o = node(id).val.data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = a + r * C;
        double* y = o + r * C;
        double mx = x[0];
        for (int64_t c = 1; c < C; ++c) mx = std::max(mx, x[c]);
        double sum = 0.0;
        for (int64_t c = 0; c < C; ++c) sum += std::exp(x[c] - mx);
        const double lse = mx + std::log(sum);
        for (int64_t c = 0; c < C; ++c) y[c] = x[c] - lse;
    }
    node(id).back = [id, a = ta.id, rows, C](Tape& tp) {
        if (double* ga = tp.gptr(a)) {
            const double* g = tp.node(id).grad.data();
            const double* lp = tp.node(id).val.data();
            for (int64_t r = 0; r < rows; ++r) {
                const double gs = kern::active().vsum(g + r * C, C);
                for (int64_t c = 0; c < C; ++c)
                    ga[r * C + c] += g[r * C + c] - std::exp(lp[r * C + c]) * gs;
            }
        }
    };
    return T{id};
}

T Tape::layer_norm(T tx, T tgamma, T tbeta, double eps) {
    const Shape s = shape(tx);
    const int64_t C = s.last(), rows = s.numel() / C;
    const Shape sg = shape(tgamma), sb = shape(tbeta);
    if (sg.rank != 1 || sg.dim[0] != C || sb.rank != 1 || sb.dim[0] != C)
        shape_fail("layer_norm", s, sg);

    const int id = new_node(s, requires_grad(tx) || requires_grad(tgamma) || requires_grad(tbeta));
    auto norm = std::make_shared<std::vector<double>>(size_t(s.numel()));
    auto inv_std = std::make_shared<std::vector<double>>(size_t(rows));

    const double* x = node(tx.id).val.data();
    const double* gm = node(tgamma.id).val.data();
    const double* bt = node(tbeta.id).val.data();
    double* o = node(id).val.data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x + r * C;
        const double mean = kern::active().vsum(xr, C) / double(C);
        double var = 0.0;
        for (int64_t c = 0; c < C; ++c) {
            const double d = xr[c] - mean;
            var += d * d;
        }
        var /= double(C);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[size_t(r)] = is;
        for (int64_t c = 0; c < C; ++c) {
            const double yn = (xr[c] - mean) * is;
            (*norm)[size_t(r * C + c)] = yn;
            o[r * C + c] = yn * gm[c] + bt[c];
        }
    }

    node(id).back = [id, xi = tx.id, gi = tgamma.id, bi = tbeta.id, rows, C, norm,
                     inv_std](Tape& tp) {
        const double* g = tp.node(id).grad.data();
        const double* gm = tp.node(gi).val.data();
        double* gx = tp.gptr(xi);
        double* gg = tp.gptr(gi);
        double* gb = tp.gptr(bi);
        for (int64_t r = 0; r < rows; ++r) {
            const double* gr = g + r * C;
            const double* yn = norm->data() + r * C;
            if (gg || gb) {
                for (int64_t c = 0; c < C; ++c) {
                    if (gg) gg[c] += gr[c] * yn[c];
                    if (gb) gb[c] += gr[c];
                }
            }
            if (gx) {
                double m1 = 0.0, m2 = 0.0;
                for (int64_t c = 0; c < C; ++c) {
                    const double dyh = gr[c] * gm[c];
                    m1 += dyh;
                    m2 += dyh * yn[c];
                }
                m1 /= double(C);
                m2 /= double(C);
                const double is = (*inv_std)[size_t(r)];
                for (int64_t c = 0; c < C; ++c) {
                    const double dyh = gr[c] * gm[c];
                    gx[r * C + c] += is * (dyh - m1 - yn[c] * m2);
                }
            }
        }
    };
    return T{id};
}

T Tape::l2_normalize_rows(T ta, double eps) {
    const Shape s = shape(ta);
    if (s.rank != 2) throw TensorError("l2_normalize_rows needs rank-2, got " + s.str());
    const int64_t R = s.dim[0], C = s.dim[1];
    const int id = new_node(s, requires_grad(ta));
    auto inv_norm = std::make_shared<std::vector<double>>(size_t(R));
    const double* a = node(ta.id).val.data();
    double* o = node(id).val.data();
    for (int64_t r = 0; r < R; ++r) {
        const double nrm = std::sqrt(kern::active().vsumsq(a + r * C, C) + eps);
        (*inv_norm)[size_t(r)] = 1.0 / nrm;
        kern::active().vscale(a + r * C, 1.0 / nrm, o + r * C, C);
    }
    node(id).back = [id, ai = ta.id, R, C, inv_norm](Tape& tp) {
        if (double* ga = tp.gptr(ai)) {
            const double* g = tp.node(id).grad.data();
            const double* y = tp.node(id).val.data();
            for (int64_t r = 0; r < R; ++r) {
                const double in = (*inv_norm)[size_t(r)];
                const double yd = kern::active().dot(y + r * C, g + r * C, C);
                for (int64_t c = 0; c < C; ++c)
                    ga[r * C + c] += in * (g[r * C + c] - y[r * C + c] * yd);
            }
        }
    };
    return T{id};
}

// ---------------------------------------------------------------------------
// Lookup / masking / dropout
// ---------------------------------------------------------------------------
T Tape::embedding(T table, const std::vector<int>& ids, int64_t batch, int64_t len) {
    const Shape st = shape(table);
    if (st.rank != 2) throw TensorError("embedding table must be rank-2, got " + st.str());
    if (int64_t(ids.size()) != batch * len) throw TensorError("embedding: ids length mismatch");
    const int64_t V = st.dim[0], H = st.dim[1];
    for (int idx : ids)
        if (idx < 0 || idx >= V) throw TensorError("embedding: id out of range");
    const int id = new_node(make_shape(batch, len, H), requires_grad(table));
    const double* tb = node(table.id).val.data();
    double* o = node(id).val.data();
    for (size_t i = 0; i < ids.size(); ++i)
        std::memcpy(o + int64_t(i) * H, tb + int64_t(ids[i]) * H, size_t(H) * sizeof(double));
    node(id).back = [id, ti = table.id, ids, H](Tape& tp) {
        if (double* gt = tp.gptr(ti)) {
            const double* g = tp.node(id).grad.data();
            for (size_t i = 0; i < ids.size(); ++i)
                kern::active().axpy(1.0, g + int64_t(i) * H, gt + int64_t(ids[i]) * H, H);
        }
    };
    return T{id};
}

T Tape::masked_fill(T ta, const std::vector<uint8_t>& mask, double value) {
    const Shape s = shape(ta);
    const int64_t n = s.numel();
    const int64_t tail = s.rank >= 2 ? s.dim[s.rank - 1] * s.dim[s.rank - 2] : s.dim[0];
    if (int64_t(mask.size()) != n && int64_t(mask.size()) != tail)
        throw TensorError("masked_fill: mask size " + std::to_string(mask.size()) +
                          " matches neither numel nor trailing dims of " + s.str());
    const bool broadcast = int64_t(mask.size()) != n;
    const int id = new_node(s, requires_grad(ta));
    const double* a = node(ta.id).val.data();
    double* o = node(id).val.data();
    for (int64_t i = 0; i < n; ++i) {
        const bool blocked = mask[size_t(broadcast ? i % tail : i)] != 0;
        o[i] = blocked ? value : a[i];
    }
    node(id).back = [id, ai = ta.id, mask, broadcast, tail, n](Tape& tp) {
        if (double* ga = tp.gptr(ai)) {
            const double* g = tp.node(id).grad.data();
            for (int64_t i = 0; i < n; ++i)
                if (mask[size_t(broadcast ? i % tail : i)] == 0) ga[i] += g[i];
        }
    };
    return T{id};
}

T Tape::dropout(T ta, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw TensorError("dropout p must be in [0,1)");
    if (!training || p == 0.0) return ta; // exact identity in eval mode
    const Shape s = shape(ta);
    const int64_t n = s.numel();
    auto keep = std::make_shared<std::vector<uint8_t>>(size_t(n));
    for (int64_t i = 0; i < n; ++i) (*keep)[size_t(i)] = rng.uniform() >= p ? 1 : 0;
    const double scale = 1.0 / (1.0 - p);
    const int id = new_node(s, requires_grad(ta));
    const double* a = node(ta.id).val.data();
    double* o = node(id).val.data();
    for (int64_t i = 0; i < n; ++i) o[i] = (*keep)[size_t(i)] ? a[i] * scale : 0.0;
    node(id).back = [id, ai = ta.id, keep, scale, n](Tape& tp) {
        if (double* ga = tp.gptr(ai)) {
            const double* g = tp.node(id).grad.data();
            for (int64_t i = 0; i < n; ++i)
                if ((*keep)[size_t(i)]) ga[i] += g[i] * scale;
        }
    };
    return T{id};
}

// ---------------------------------------------------------------------------
// Reductions / losses
// ---------------------------------------------------------------------------
T Tape::sum_all(T ta) {
    const int64_t n = shape(ta).numel();
    const int id = new_node(make_shape(1), requires_grad(ta));
    node(id).val[0] = kern::active().vsum(node(ta.id).val.data(), n);
    node(id).back = [id, ai = ta.id, n](Tape& tp) {
        if (double* ga = tp.gptr(ai)) {
            const double g = tp.node(id).grad[0];
            for (int64_t i = 0; i < n; ++i) ga[i] += g;
        }
    };
    return T{id};
}

T Tape::ce_loss(T logits, const std::vector<int>& labels,
                const std::vector<double>& weights, double smoothing) {
    const Shape s = shape(logits);
    const int64_t C = s.last(), N = s.numel() / C;
    if (int64_t(labels.size()) != N || int64_t(weights.size()) != N)
        throw TensorError("ce_loss: labels/weights length must be " + std::to_string(N));
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    if (wsum <= 0.0) throw TensorError("ce_loss: total weight is zero");
    for (int64_t i = 0; i < N; ++i)
        if (weights[size_t(i)] != 0.0 && (labels[size_t(i)] < 0 || labels[size_t(i)] >= C))
            throw TensorError("ce_loss: label out of range");

    auto probs = std::make_shared<std::vector<double>>(size_t(N * C));
    const double* x = node(logits.id).val.data();
    double loss = 0.0;
    for (int64_t i = 0; i < N; ++i) {
        const double* xr = x + i * C;
        double mx = xr[0];
        for (int64_t c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
        double sum = 0.0;
        for (int64_t c = 0; c < C; ++c) sum += std::exp(xr[c] - mx);
        const double lse = mx + std::log(sum);
        const double w = weights[size_t(i)];
        double row_loss = 0.0;
        for (int64_t c = 0; c < C; ++c) {
            const double lp = xr[c] - lse;
            (*probs)[size_t(i * C + c)] = std::exp(lp);
            const double t = (c == labels[size_t(i)] ? 1.0 - smoothing : 0.0) + smoothing / double(C);
            row_loss -= t * lp;
        }
        loss += w * row_loss;
    }

    const int id = new_node(make_shape(1), requires_grad(logits));
    node(id).val[0] = loss / wsum;
    node(id).back = [id, li = logits.id, probs, labels, weights, smoothing, wsum, N, C](Tape& tp) {
        if (double* gl = tp.gptr(li)) {
            const double go = tp.node(id).grad[0];
            for (int64_t i = 0; i < N; ++i) {
                const double w = weights[size_t(i)];
                if (w == 0.0) continue;
                const double f = go * w / wsum;
                for (int64_t c = 0; c < C; ++c) {
                    const double t =
                        (c == labels[size_t(i)] ? 1.0 - smoothing : 0.0) + smoothing / double(C);
                    gl[i * C + c] += f * ((*probs)[size_t(i * C + c)] - t);
                }
            }
        }
    };
    return T{id};
}

T Tape::scaled_dot_attention(T q, T k, T v, const std::vector<uint8_t>* mask) {
    const Shape sq = shape(q);
    if (sq.rank != 3) throw TensorError("attention expects rank-3 q, got " + sq.str());
    const double inv_sqrt = 1.0 / std::sqrt(double(sq.dim[2]));
    T scores = scale(bmm(q, k, /*trans_b=*/true), inv_sqrt);
    if (mask) scores = masked_fill(scores, *mask, -1e9);
    return bmm(softmax_last(scores), v);
}

} // namespace dncl::tensor
