#pragma once

#include "dncl/model.hpp"

namespace dncl::bench {

// Feature-similarity study: encode n independent noisy and n independent
// clean datasets of the same expression, pool each (m, hidden) feature by
// summing over the token axis, and compare all 2n pooled vectors by cosine
// similarity. Rows/cols 0..n-1 are the noisy datasets, n..2n-1 the clean
// ones.
struct HeatmapResult {
    int n = 0;                  // datasets per condition
    std::vector<double> matrix; // (2n x 2n), unit diagonal
    double within_noisy = 0.0;  // mean off-diagonal of the noisy block
    double within_clean = 0.0;
    double cross = 0.0;         // mean of the noisy-vs-clean blocks
};

HeatmapResult feature_heatmap(model::Model& m, const expr::Expr& truth, int d, double eta,
                              int datasets_per_condition = 10, int64_t points = 100,
                              uint64_t seed = 1);

void write_heatmap_csv(const HeatmapResult& h, const std::string& path);

} // namespace dncl::bench
