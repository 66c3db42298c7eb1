#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dncl/expr.hpp"
#include "dncl/rng.hpp"

namespace dncl::data {

// ---------------------------------------------------------------------------
// Point sets: X (n x d, row-major) plus targets and noise metadata.
// ---------------------------------------------------------------------------
struct PointSet {
    std::vector<double> X;
    std::vector<double> y;
    int64_t n = 0;
    int d = 1;
    double eta = 0.0;
    uint64_t seed = 0;
    std::string source_id;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

double rms(std::span<const double> y);

// Uniform X over the domain; rows where the tree is invalid are redrawn.
// Total draw budget is 10*n, after which InsufficientDomain is thrown.
// abs_cap tightens the validity test (corpus generation uses 100 to keep
// training targets desk-scale; benchmarks keep the evaluate() default).
PointSet sample_points(const expr::Expr& tree, const expr::Domain& dom, int64_t n,
                       int d, Rng& rng, double abs_cap = expr::kEvalOverflow);

// y' = y + Normal(0, sigma^2) i.i.d. with sigma = eta * rms(y).  eta = 0
// returns y byte-identical.
PointSet add_noise(const PointSet& ps, double eta, Rng& rng);

// t1 = identity, t2 = add_noise. Views share X bitwise.
std::pair<PointSet, PointSet> make_views(const PointSet& ps, double eta, Rng& rng);

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------
struct CorpusEntry {
    int64_t id = 0;
    std::string expr_text;
    int d = 1;
    expr::TokenSequence tokens;
    std::vector<double> X; // points x d
    std::vector<double> y;
    int64_t n_points = 0;
    uint64_t seed = 0;
};

struct GenConfig {
    expr::GrammarConfig grammar;
    int64_t count = 1000;
    int64_t points_per_expr = 500;
    double y_cap = 100.0;
    uint64_t master_seed = 1;
};

struct Corpus {
    std::vector<CorpusEntry> entries;
    int dims = 1;
    uint64_t master_seed = 0;
};

// JSONL, one record per line; first line a meta record with the resolved
// config, master seed, vocab hash. Deduplicated by skeleton hash.
void generate_corpus(const GenConfig& cfg, const std::string& out_path);
Corpus load_corpus(const std::string& path);

// ---------------------------------------------------------------------------
// Batches: paired clean/noisy views of the same expressions. Exactly half of
// the batch is flagged to feed the noisy feature to the decoder.
// ---------------------------------------------------------------------------
struct Batch {
    std::vector<PointSet> view1; // t1 = identity
    std::vector<PointSet> view2; // t2 = noised (fresh per batch)
    std::vector<expr::TokenSequence> labels;
    std::vector<uint8_t> decoder_noisy; // exactly B/2 set
    int64_t size() const { return int64_t(view1.size()); }
};

// entries.size() must be even; every entry needs >= n_sub stored points.
Batch build_batch(std::span<const CorpusEntry* const> entries, int64_t n_sub,
                  double eta, Rng& rng);

} // namespace dncl::data
