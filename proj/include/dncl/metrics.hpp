#pragma once

#include <span>
#include <vector>

#include "dncl/data.hpp"
#include "dncl/expr.hpp"

namespace dncl::bench {

struct BenchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Coefficient of determination. Constant y degenerates the denominator;
// that case is reported as undefined and excluded from aggregates.
struct R2 {
    double value = 0.0;
    bool defined = false;
};

R2 r_squared(std::span<const double> y, std::span<const double> y_hat);

// Ground-truth expression scored against its own noisy observations: the
// ceiling a predictor should approach, not exceed.
struct GoldRow {
    double eta = 0.0;
    uint64_t seed = 0;
    R2 r2;
};

std::vector<GoldRow> gold_standard(const expr::Expr& truth, const expr::Domain& domain, int d,
                                   const std::vector<double>& etas,
                                   const std::vector<uint64_t>& seeds, int64_t n_points = 500);

// Fraction of predictions numerically equivalent to the truth.
double recovery_rate(const std::vector<expr::ExprPtr>& preds, const expr::Expr& truth, int d);

// One-sided sign test: P(wins >= observed | n trials, p = 1/2), ties dropped.
double sign_test_p(int64_t wins, int64_t losses);

} // namespace dncl::bench
