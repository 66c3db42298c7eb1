#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dncl/data.hpp"
#include "dncl/util.hpp"

#include <cmath>
#include <cstdio>
#include <unordered_set>

using namespace dncl;
using namespace dncl::data;

TEST_CASE("rms: hand values") {
    std::vector<double> v{3.0, 4.0};
    CHECK(rms(v) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
    std::vector<double> z{0.0, 0.0, 0.0};
    CHECK(rms(z) == 0.0);
    std::vector<double> c{-2.5, -2.5, -2.5, -2.5};
    CHECK(rms(c) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK_THROWS_AS(rms(std::span<const double>{}), DataError);
}

TEST_CASE("sample_points: benchmark domain, constants, empty-domain error") {
    Rng rng(5);
    expr::ExprPtr n1 = expr::parse("x**3 + x**2 + x", 1);
    PointSet ps = sample_points(*n1, expr::default_domain(*n1, 1), 500, 1, rng);
    CHECK(ps.n == 500);
    CHECK(ps.y.size() == 500);
    for (double v : ps.y) CHECK(std::isfinite(v));
    for (double v : ps.X) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }

    expr::ExprPtr c = expr::parse("4.25 + 0*x", 1);
    PointSet pc = sample_points(*c, expr::default_domain(*c, 1), 64, 1, rng);
    for (double v : pc.y) CHECK(v == doctest::Approx(4.25));

    // log on a negative-only interval can never produce a valid row
    expr::ExprPtr lg = expr::parse("log(x)", 1);
    expr::Domain neg;
    neg.lo[0] = -2.0;
    neg.hi[0] = -1.0;
    CHECK_THROWS_WITH_AS(sample_points(*lg, neg, 10, 1, rng),
                         doctest::Contains("insufficient valid domain"), DataError);
}

TEST_CASE("add_noise: identity at eta=0, stats at eta>0") {
    PointSet ps;
    ps.n = 100000;
    ps.d = 1;
    ps.X.assign(100000, 0.0);
    ps.y.assign(100000, 2.0); // rms exactly 2.0

    Rng r0(77);
    PointSet clean = add_noise(ps, 0.0, r0);
    CHECK(clean.y == ps.y);
    CHECK(clean.eta == 0.0);

    for (double eta : {0.001, 0.01, 0.1}) {
        Rng rng(123);
        PointSet noisy = add_noise(ps, eta, rng);
        CHECK(noisy.eta == doctest::Approx(eta));
        const double sigma = eta * 2.0;
        double sum = 0.0, sumsq = 0.0;
        for (size_t i = 0; i < ps.y.size(); ++i) {
            const double d = noisy.y[i] - ps.y[i];
            sum += d;
            sumsq += d * d;
        }
        const double n = double(ps.y.size());
        const double mean = sum / n;
        const double std_dev = std::sqrt(sumsq / n - mean * mean);
        CHECK(std::abs(std_dev - sigma) <= 0.03 * sigma);
        CHECK(std::abs(mean) <= 4.0 * sigma / std::sqrt(n));
    }
}

TEST_CASE("add_noise is deterministic given the seed") {
    PointSet ps;
    ps.n = 32;
    ps.d = 1;
    ps.X.assign(32, 0.5);
    ps.y.assign(32, 1.0);
    Rng a(9), b(9);
    PointSet na = add_noise(ps, 0.1, a);
    PointSet nb = add_noise(ps, 0.1, b);
    CHECK(na.y == nb.y);
}

TEST_CASE("make_views: pairing contract") {
    Rng rng(3);
    expr::ExprPtr t = expr::parse("sin(x) + x", 1);
    PointSet ps = sample_points(*t, expr::default_domain(*t, 1), 200, 1, rng);

    Rng v0(4);
    auto [a0, b0] = make_views(ps, 0.0, v0);
    CHECK(a0.y == b0.y);
    CHECK(a0.X == b0.X);

    Rng v1(4);
    auto [a1, b1] = make_views(ps, 0.1, v1);
    CHECK(a1.X == b1.X); // bitwise-equal X
    CHECK(a1.y != b1.y);
    CHECK(a1.y == ps.y); // t1 is the identity

    Rng v2(4);
    auto [a2, b2] = make_views(ps, 0.1, v2);
    CHECK(b1.y == b2.y); // same seed, same noise
}

TEST_CASE("build_batch: views, flags, subsampling") {
    Rng rng(17);
    GenConfig cfg;
    cfg.grammar.dims = 1;
    cfg.count = 40;
    cfg.points_per_expr = 120;
    cfg.master_seed = 99;
    const std::string path = "/tmp/dncl_test_corpus_batch.jsonl";
    generate_corpus(cfg, path);
    Corpus corpus = load_corpus(path);
    REQUIRE(int64_t(corpus.entries.size()) == cfg.count);

    std::vector<const CorpusEntry*> slice;
    for (int i = 0; i < 32; ++i) slice.push_back(&corpus.entries[size_t(i)]);

    Batch b = build_batch(slice, 100, 0.1, rng);
    CHECK(b.size() == 32);
    int flagged = 0;
    for (uint8_t f : b.decoder_noisy) flagged += f;
    CHECK(flagged == 16);
    for (int i = 0; i < 32; ++i) {
        CHECK(b.view1[size_t(i)].X == b.view2[size_t(i)].X);
        CHECK(b.view1[size_t(i)].n == 100);
        CHECK(b.labels[size_t(i)].size() == corpus.entries[size_t(i)].tokens.size());
    }

    // eta = 0: both views equal
    std::vector<const CorpusEntry*> two{&corpus.entries[0], &corpus.entries[1]};
    Batch b0 = build_batch(two, 50, 0.0, rng);
    CHECK(b0.view1[0].y == b0.view2[0].y);
    CHECK(b0.view1[1].y == b0.view2[1].y);

    std::vector<const CorpusEntry*> odd{&corpus.entries[0]};
    CHECK_THROWS_AS(build_batch(odd, 50, 0.1, rng), DataError);
    CHECK_THROWS_AS(build_batch(two, 1000, 0.1, rng), DataError);
}

TEST_CASE("generate_corpus: single record round-trips through parse") {
    GenConfig cfg;
    cfg.grammar.dims = 1;
    cfg.count = 1;
    cfg.points_per_expr = 50;
    cfg.master_seed = 7;
    const std::string path = "/tmp/dncl_test_corpus_one.jsonl";
    generate_corpus(cfg, path);
    Corpus c = load_corpus(path);
    REQUIRE(c.entries.size() == 1);
    const CorpusEntry& e = c.entries[0];
    expr::ExprPtr t = expr::parse(e.expr_text, e.d);
    expr::ExprPtr from_tokens = expr::from_preorder(e.tokens);
    // stored y must match both the text form and the token form
    expr::EvalResult rt = expr::evaluate(*t, e.X.data(), e.n_points, e.d);
    expr::EvalResult rk = expr::evaluate(*from_tokens, e.X.data(), e.n_points, e.d);
    for (int64_t i = 0; i < e.n_points; ++i) {
        REQUIRE(rt.valid[size_t(i)]);
        CHECK(rt.y[size_t(i)] == doctest::Approx(e.y[size_t(i)]).epsilon(1e-12));
        CHECK(rk.y[size_t(i)] == doctest::Approx(e.y[size_t(i)]).epsilon(1e-9));
    }
}

TEST_CASE("generate_corpus: fixed master seed gives a byte-identical file") {
    GenConfig cfg;
    cfg.grammar.dims = 1;
    cfg.count = 25;
    cfg.points_per_expr = 40;
    cfg.master_seed = 31337;
    const std::string p1 = "/tmp/dncl_test_corpus_a.jsonl";
    const std::string p2 = "/tmp/dncl_test_corpus_b.jsonl";
    generate_corpus(cfg, p1);
    generate_corpus(cfg, p2);
    CHECK(util::read_file(p1) == util::read_file(p2));
    CHECK(util::read_file(p1).size() > 0);
}

TEST_CASE("generate_corpus: entries are unique skeletons and capped targets") {
    GenConfig cfg;
    cfg.grammar.dims = 2;
    cfg.count = 150;
    cfg.points_per_expr = 60;
    cfg.y_cap = 100.0;
    cfg.master_seed = 11;
    const std::string path = "/tmp/dncl_test_corpus_many.jsonl";
    generate_corpus(cfg, path);
    Corpus c = load_corpus(path);
    REQUIRE(int64_t(c.entries.size()) == cfg.count);
    CHECK(c.dims == 2);

    std::unordered_set<uint64_t> hashes;
    for (const CorpusEntry& e : c.entries) {
        hashes.insert(e.tokens.skeleton_hash());
        for (double v : e.y) CHECK(std::abs(v) <= cfg.y_cap);
        CHECK(e.n_points == 60);
    }
    CHECK(hashes.size() == c.entries.size());
}
