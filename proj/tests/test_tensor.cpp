#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dncl/checkpoint.hpp"
#include "dncl/util.hpp"
#include "dncl/tensor.hpp"

#include <cmath>
#include <functional>

using namespace dncl;
using namespace dncl::tensor;

namespace {

std::vector<double> randu(Rng& rng, int64_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Central finite differences against the analytic gradient, every coordinate.
void check_grads(std::vector<double> theta, Shape s,
                 const std::function<T(Tape&, T)>& make_loss,
                 double h = 1e-5, double tol = 1e-6) {
    Tape tape;
    T x = tape.input(theta.data(), s, true);
    T loss = make_loss(tape, x);
    tape.backward(loss);
    const std::vector<double> analytic = tape.grad(x);

    for (size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + h;
        Tape tp;
        double lp = tp.val(make_loss(tp, tp.input(theta.data(), s, true)))[0];
        theta[i] = keep - h;
        Tape tm;
        double lm = tm.val(make_loss(tm, tm.input(theta.data(), s, true)))[0];
        theta[i] = keep;
        const double fd = (lp - lm) / (2.0 * h);
        const double err = std::abs(fd - analytic[i]);
        const bool ok = err <= tol * std::max({std::abs(fd), std::abs(analytic[i]), 1.0});
        if (!ok) {
            CAPTURE(i);
            CAPTURE(fd);
            CAPTURE(analytic[i]);
            CHECK(ok);
        }
    }
}

} // namespace

TEST_CASE("forward values: softmax symmetry, matmul identity, layer_norm constant row") {
    Tape t;
    T z = t.constant({0.0, 0.0, 0.0}, make_shape(1, 3));
    auto sm = t.val(t.softmax_last(z));
    for (double v : sm) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

    Rng rng(1);
    auto A = randu(rng, 9);
    Tape t2;
    T a = t2.constant(A, make_shape(3, 3));
    T eye = t2.constant({1, 0, 0, 0, 1, 0, 0, 0, 1}, make_shape(3, 3));
    auto out = t2.val(t2.matmul(eye, a));
    for (int i = 0; i < 9; ++i) CHECK(out[size_t(i)] == doctest::Approx(A[size_t(i)]).epsilon(1e-13));

    Tape t3;
    T c = t3.constant({5.0, 5.0, 5.0, 5.0}, make_shape(1, 4));
    T gamma = t3.constant({1, 1, 1, 1}, make_shape(4));
    T beta = t3.constant({0, 0, 0, 0}, make_shape(4));
    auto ln = t3.val(t3.layer_norm(c, gamma, beta));
    for (double v : ln) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and survive logits in [-50, 50]") {
    Rng rng(2);
    Tape t;
    auto vals = randu(rng, 8 * 16, -50.0, 50.0);
    T x = t.constant(vals, make_shape(8, 16));
    auto p = t.val(t.softmax_last(x));
    for (int r = 0; r < 8; ++r) {
        double s = 0.0;
        for (int c = 0; c < 16; ++c) {
            const double v = p[size_t(r * 16 + c)];
            CHECK(std::isfinite(v));
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
    auto lp = t.val(t.log_softmax_last(x));
    for (double v : lp) CHECK(std::isfinite(v));
}

TEST_CASE("backward basics: sum and half-sum-of-squares") {
    Rng rng(3);
    auto w = randu(rng, 12);
    Tape t;
    T x = t.input(w.data(), make_shape(3, 4), true);
    t.backward(t.sum_all(x));
    for (double g : t.grad(x)) CHECK(g == 1.0);

    Tape t2;
    T x2 = t2.input(w.data(), make_shape(3, 4), true);
    t2.backward(t2.scale(t2.sum_all(t2.mul(x2, x2)), 0.5));
    const auto& g2 = t2.grad(x2);
    for (size_t i = 0; i < w.size(); ++i) CHECK(g2[i] == doctest::Approx(w[i]).epsilon(1e-12));
}

TEST_CASE("backward called twice throws") {
    std::vector<double> w{1.0, 2.0};
    Tape t;
    T x = t.input(w.data(), make_shape(2), true);
    T loss = t.sum_all(x);
    t.backward(loss);
    CHECK_THROWS_AS(t.backward(loss), TensorError);
}

TEST_CASE("gradients: elementwise and structural ops") {
    Rng rng(4);

    check_grads(randu(rng, 12, 0.2, 2.0), make_shape(3, 4), [](Tape& t, T x) {
        return t.sum_all(t.log_(t.exp_(t.tanh_(x))));
    });

    check_grads(randu(rng, 12), make_shape(3, 4), [&](Tape& t, T x) {
        T y = t.constant(std::vector<double>{1, -2, 3, -4, 5, -6, 7, -8, 9, 1, 2, 3},
                         make_shape(3, 4));
        return t.sum_all(t.mul(t.add(x, y), t.sub(x, y)));
    });

    check_grads(randu(rng, 12, 0.5, 1.5), make_shape(3, 4), [](Tape& t, T x) {
        T d = t.constant_fill(2.5, make_shape(3, 4));
        return t.sum_all(t.div(d, x));
    });

    check_grads(randu(rng, 8), make_shape(2, 4), [](Tape& t, T x) {
        return t.sum_all(t.relu_(x));
    });

    check_grads(randu(rng, 6), make_shape(2, 3), [](Tape& t, T x) {
        return t.sum_all(t.mul(t.transpose2d(x), t.transpose2d(x)));
    });

    check_grads(randu(rng, 24), make_shape(2, 3, 4), [](Tape& t, T x) {
        T other = t.constant_fill(0.5, make_shape(2, 2, 4));
        T cat = t.concat_axis1(x, other);
        return t.sum_all(t.mul(cat, cat));
    });

    check_grads(randu(rng, 24), make_shape(4, 3, 2), [](Tape& t, T x) {
        T sl = t.slice_axis0(x, 1, 3);
        return t.sum_all(t.mul(sl, sl));
    });

    check_grads(randu(rng, 24), make_shape(2, 3, 4), [](Tape& t, T x) {
        T sp = t.split_heads(x, 2);
        T back = t.merge_heads(sp, 2);
        return t.sum_all(t.mul(back, sp.valid() ? back : back));
    });

    check_grads(randu(rng, 6), make_shape(2, 3), [](Tape& t, T x) {
        T b = t.broadcast_rows(x, 4);
        return t.sum_all(t.mul(b, b));
    });

    check_grads(randu(rng, 24), make_shape(2, 3, 4), [](Tape& t, T x) {
        T m = t.mean_axis1(x);
        return t.sum_all(t.mul(m, m));
    });
}

TEST_CASE("gradients: matmul variants") {
    Rng rng(5);
    const auto W = randu(rng, 12);

    check_grads(randu(rng, 6), make_shape(2, 3), [&](Tape& t, T x) {
        T w = t.constant(W, make_shape(3, 4));
        return t.sum_all(t.matmul(x, w));
    });
    // rank-3 folded
    check_grads(randu(rng, 12), make_shape(2, 2, 3), [&](Tape& t, T x) {
        T w = t.constant(W, make_shape(3, 4));
        T y = t.matmul(x, w);
        return t.sum_all(t.mul(y, y));
    });
    // trans_b (the InfoNCE similarity shape)
    const auto K1 = randu(rng, 12);
    check_grads(randu(rng, 8), make_shape(2, 4), [&](Tape& t, T x) {
        T k = t.constant(K1, make_shape(3, 4));
        T sim = t.matmul(x, k, false, true);
        return t.sum_all(t.mul(sim, sim));
    });
    // trans_a
    const auto B1 = randu(rng, 12);
    check_grads(randu(rng, 8), make_shape(4, 2), [&](Tape& t, T x) {
        T b = t.constant(B1, make_shape(4, 3));
        T y = t.matmul(x, b, true, false);
        return t.sum_all(t.mul(y, y));
    });
    // bmm both directions
    const auto K2 = randu(rng, 40);
    check_grads(randu(rng, 24), make_shape(2, 3, 4), [&](Tape& t, T x) {
        T k = t.constant(K2, make_shape(2, 4, 5));
        T y = t.bmm(x, k);
        return t.sum_all(t.mul(y, y));
    });
    check_grads(randu(rng, 24), make_shape(2, 3, 4), [&](Tape& t, T x) {
        T k = t.constant(K2, make_shape(2, 5, 4));
        T y = t.bmm(x, k, true);
        return t.sum_all(t.mul(y, y));
    });
}

TEST_CASE("gradients: softmax, log_softmax, layer_norm, l2_normalize, masked_fill") {
    Rng rng(6);

    check_grads(randu(rng, 12, -3, 3), make_shape(3, 4), [](Tape& t, T x) {
        T p = t.softmax_last(x);
        T w = t.constant({0.1, 0.7, 0.2, -0.4, 0.3, 0.2, 0.1, 0.5, -0.2, 0.6, 0.4, 0.9},
                         make_shape(3, 4));
        return t.sum_all(t.mul(p, w));
    });

    check_grads(randu(rng, 12, -3, 3), make_shape(3, 4), [](Tape& t, T x) {
        T lp = t.log_softmax_last(x);
        T w = t.constant({0.1, 0.7, 0.2, -0.4, 0.3, 0.2, 0.1, 0.5, -0.2, 0.6, 0.4, 0.9},
                         make_shape(3, 4));
        return t.sum_all(t.mul(lp, w));
    });

    check_grads(randu(rng, 12), make_shape(3, 4), [](Tape& t, T x) {
        T gamma = t.constant({1.2, 0.8, 1.1, 0.9}, make_shape(4));
        T beta = t.constant({0.1, -0.2, 0.3, 0.0}, make_shape(4));
        T y = t.layer_norm(x, gamma, beta);
        return t.sum_all(t.mul(y, y));
    });

    // gamma/beta gradients too
    {
        Rng r2(7);
        auto xs = randu(r2, 12);
        check_grads({1.0, 1.0, 1.0, 1.0}, make_shape(4), [&](Tape& t, T gamma) {
            T x = t.constant(xs, make_shape(3, 4));
            T beta = t.constant({0, 0, 0, 0}, make_shape(4));
            T y = t.layer_norm(x, gamma, beta);
            return t.sum_all(t.mul(y, y));
        });
    }

    check_grads(randu(rng, 8, 0.2, 1.0), make_shape(2, 4), [](Tape& t, T x) {
        T z = t.l2_normalize_rows(x);
        T w = t.constant({0.3, -0.5, 0.2, 0.9, -0.1, 0.4, 0.8, -0.7}, make_shape(2, 4));
        return t.sum_all(t.mul(z, w));
    });

    check_grads(randu(rng, 12), make_shape(3, 4), [](Tape& t, T x) {
        std::vector<uint8_t> mask(12, 0);
        mask[1] = mask[5] = mask[11] = 1;
        T y = t.masked_fill(x, mask, -1e9);
        T p = t.softmax_last(y);
        T w = t.constant_fill(0.25, make_shape(3, 4));
        return t.sum_all(t.mul(p, w));
    });
}

TEST_CASE("gradients: embedding, ce_loss, attention") {
    Rng rng(8);

    check_grads(randu(rng, 5 * 3), make_shape(5, 3), [](Tape& t, T table) {
        std::vector<int> ids{0, 2, 4, 2};
        T e = t.embedding(table, ids, 2, 2);
        return t.sum_all(t.mul(e, e));
    });

    check_grads(randu(rng, 4 * 6, -2, 2), make_shape(4, 6), [](Tape& t, T logits) {
        std::vector<int> labels{1, 3, 0, 5};
        std::vector<double> weights{1.0, 1.0, 0.0, 2.0};
        return t.ce_loss(logits, labels, weights, 0.1);
    });

    check_grads(randu(rng, 2 * 3 * 4), make_shape(2, 3, 4), [](Tape& t, T q) {
        Rng r(9);
        T k = t.constant(randu(r, 2 * 5 * 4), make_shape(2, 5, 4));
        T v = t.constant(randu(r, 2 * 5 * 4), make_shape(2, 5, 4));
        T o = t.scaled_dot_attention(q, k, v, nullptr);
        return t.sum_all(t.mul(o, o));
    });

    // attention with a causal-style mask
    check_grads(randu(rng, 2 * 3 * 4), make_shape(2, 3, 4), [](Tape& t, T q) {
        Rng r(10);
        T k = t.constant(randu(r, 2 * 3 * 4), make_shape(2, 3, 4));
        T v = t.constant(randu(r, 2 * 3 * 4), make_shape(2, 3, 4));
        std::vector<uint8_t> causal(9, 0);
        for (int i = 0; i < 3; ++i)
            for (int j = i + 1; j < 3; ++j) causal[size_t(i * 3 + j)] = 1;
        T o = t.scaled_dot_attention(q, k, v, &causal);
        return t.sum_all(t.mul(o, o));
    });
}

TEST_CASE("gradients: random 3-layer MLP") {
    Rng rng(11);
    const auto W1 = randu(rng, 6 * 8), W2 = randu(rng, 8 * 8), W3 = randu(rng, 8 * 4);
    const auto inp = randu(rng, 5 * 6);

    auto net = [&](Tape& t, T w1) {
        T x = t.constant(inp, make_shape(5, 6));
        T w2 = t.constant(W2, make_shape(8, 8));
        T w3 = t.constant(W3, make_shape(8, 4));
        T h1 = t.tanh_(t.matmul(x, w1));
        T h2 = t.relu_(t.matmul(h1, w2));
        T o = t.matmul(h2, w3);
        return t.sum_all(t.mul(o, o));
    };
    check_grads(W1, make_shape(6, 8), net);
}

TEST_CASE("ce_loss: one-hot and uniform analytic values") {
    Tape t;
    // +-20 margin one-hot-correct logits, smoothing 0 -> loss ~ 0
    std::vector<double> logits(3 * 5, -20.0);
    logits[0 * 5 + 2] = 20.0;
    logits[1 * 5 + 0] = 20.0;
    logits[2 * 5 + 4] = 20.0;
    T x = t.constant(logits, make_shape(3, 5));
    T l = t.ce_loss(x, {2, 0, 4}, {1, 1, 1}, 0.0);
    CHECK(t.val(l)[0] <= 1e-6);

    Tape t2;
    T u = t2.constant_fill(0.7, make_shape(4, 11));
    T lu = t2.ce_loss(u, {0, 3, 7, 10}, {1, 1, 1, 1}, 0.0);
    CHECK(t2.val(lu)[0] == doctest::Approx(std::log(11.0)).epsilon(1e-12));

    Tape t3;
    T b = t3.constant_fill(0.0, make_shape(2, 3));
    CHECK_THROWS_AS(t3.ce_loss(b, {0, 1}, {0.0, 0.0}, 0.0), TensorError);
}

TEST_CASE("dropout: eval identity, train scaling") {
    Rng rng(12);
    auto vals = randu(rng, 4000, 1.0, 2.0);
    Tape t;
    T x = t.input(vals.data(), make_shape(4000), true);
    Rng drng(77);
    T e = t.dropout(x, 0.3, /*training=*/false, drng);
    CHECK(t.val(e) == vals); // exact identity

    T d = t.dropout(x, 0.3, /*training=*/true, drng);
    const auto& dv = t.val(d);
    int64_t zeros = 0;
    double sum = 0.0, sum_in = 0.0;
    for (size_t i = 0; i < dv.size(); ++i) {
        if (dv[i] == 0.0) ++zeros;
        else CHECK(dv[i] == doctest::Approx(vals[i] / 0.7).epsilon(1e-12));
        sum += dv[i];
        sum_in += vals[i];
    }
    CHECK(double(zeros) / 4000.0 == doctest::Approx(0.3).epsilon(0.15));
    CHECK(sum / sum_in == doctest::Approx(1.0).epsilon(0.05));

    CHECK_THROWS_AS(t.dropout(x, 1.0, true, drng), TensorError);
}

TEST_CASE("adam: fixed points and closed-form first step") {
    AdamConfig cfg;
    cfg.lr = 0.01;

    Parameter p("w", make_shape(4), {1.0, -2.0, 3.0, 0.5});
    const std::vector<double> before = p.value;
    std::vector<double> zero(4, 0.0);
    adam_step(p, zero.data(), cfg, 1);
    CHECK(p.value == before);

    Parameter q("w", make_shape(4), {1.0, -2.0, 3.0, 0.5});
    std::vector<double> g{0.3, -0.7, 0.001, 2.0};
    adam_step(q, g.data(), cfg, 1);
    for (int i = 0; i < 4; ++i) {
        const double step = q.value[size_t(i)] - before[size_t(i)];
        CHECK(step == doctest::Approx(-cfg.lr * (g[size_t(i)] > 0 ? 1.0 : -1.0)).epsilon(1e-3));
    }

    // bitwise determinism
    Parameter r1("w", make_shape(4), {1.0, -2.0, 3.0, 0.5});
    Parameter r2("w", make_shape(4), {1.0, -2.0, 3.0, 0.5});
    for (int t = 1; t <= 10; ++t) {
        adam_step(r1, g.data(), cfg, t);
        adam_step(r2, g.data(), cfg, t);
    }
    CHECK(r1.value == r2.value);
    CHECK(r1.m == r2.m);
    CHECK(r1.v == r2.v);
}

TEST_CASE("parameter binding is memoized (parameter sharing)") {
    Parameter p("shared", make_shape(2, 2), {1, 2, 3, 4});
    Tape t;
    T a = t.param(p);
    T b = t.param(p);
    CHECK(a.id == b.id);
    REQUIRE(t.param_bindings().size() == 1);

    // gradient accumulates across both uses
    T x = t.constant({1.0, 1.0}, make_shape(1, 2));
    T u1 = t.matmul(x, a);
    T u2 = t.matmul(x, b);
    t.backward(t.sum_all(t.add(u1, u2)));
    for (double g : t.grad(a)) CHECK(g == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("shape mismatches report both shapes") {
    Tape t;
    T a = t.constant_fill(0.0, make_shape(2, 3));
    T b = t.constant_fill(0.0, make_shape(3, 2));
    CHECK_THROWS_WITH_AS(t.add(a, b), doctest::Contains("(2,3)"), TensorError);
    CHECK_THROWS_WITH_AS(t.matmul(a, a), doctest::Contains("(2,3)"), TensorError);
}

TEST_CASE("checkpoint: save/load round-trip with f32 quantization") {
    ckpt::Checkpoint c;
    c.header = {{"step", 42}, {"config", {{"hidden", 8}}}};
    Rng rng(13);
    ckpt::NamedTensor t1{"enc.w", make_shape(3, 4), randu(rng, 12)};
    ckpt::NamedTensor t2{"dec.b", make_shape(5), randu(rng, 5)};
    // pre-quantize so the round-trip is exact
    ckpt::quantize_f32(t1.data);
    ckpt::quantize_f32(t2.data);
    c.tensors = {t1, t2};
    const std::string path = "/tmp/dncl_test_ckpt.bin";
    ckpt::save_checkpoint(path, c);

    ckpt::Checkpoint l = ckpt::load_checkpoint(path);
    CHECK(l.header["step"] == 42);
    REQUIRE(l.tensors.size() == 2);
    CHECK(l.tensors[0].name == "enc.w");
    CHECK(l.tensors[0].shape == make_shape(3, 4));
    CHECK(l.tensors[0].data == t1.data);
    CHECK(l.tensors[1].data == t2.data);
    CHECK(l.find("dec.b") != nullptr);
    CHECK(l.find("missing") == nullptr);

    // wrong magic rejected
    util::write_file("/tmp/dncl_test_ckpt_bad.bin", "NOPE" + std::string(64, '\0'));
    CHECK_THROWS_AS(ckpt::load_checkpoint("/tmp/dncl_test_ckpt_bad.bin"), ckpt::CheckpointError);
}

