#include "dncl/metrics.hpp"

#include <cmath>

namespace dncl::bench {

R2 r_squared(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) throw BenchError("r_squared: length mismatch");
    if (y.size() < 2) throw BenchError("r_squared needs at least 2 points");
    const double n = double(y.size());
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= n;
    double ss_res = 0.0, ss_tot = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - y_hat[i];
        const double t = y[i] - mean;
        ss_res += r * r;
        ss_tot += t * t;
    }
    if (ss_tot == 0.0) return {0.0, false};
    return {1.0 - ss_res / ss_tot, true};
}

std::vector<GoldRow> gold_standard(const expr::Expr& truth, const expr::Domain& domain, int d,
                                   const std::vector<double>& etas,
                                   const std::vector<uint64_t>& seeds, int64_t n_points) {
    std::vector<GoldRow> rows;
    rows.reserve(etas.size() * seeds.size());
    for (double eta : etas) {
        for (uint64_t seed : seeds) {
            Rng rng(seed);
            data::PointSet clean = data::sample_points(truth, domain, n_points, d, rng);
            data::PointSet noisy = data::add_noise(clean, eta, rng);
            GoldRow row;
            row.eta = eta;
            row.seed = seed;
            // observations are the noisy y; the truth predicts its clean values
            row.r2 = r_squared(noisy.y, clean.y);
            rows.push_back(row);
        }
    }
    return rows;
}

double recovery_rate(const std::vector<expr::ExprPtr>& preds, const expr::Expr& truth, int d) {
    if (preds.empty()) return 0.0;
    int64_t hits = 0;
    for (const expr::ExprPtr& p : preds)
        if (p && expr::equivalent(*p, truth, d)) ++hits;
    return double(hits) / double(preds.size());
}

double sign_test_p(int64_t wins, int64_t losses) {
    const int64_t n = wins + losses;
    if (n == 0) return 1.0;
    // exact binomial upper tail at p = 1/2 in log space
    double p = 0.0;
    for (int64_t k = wins; k <= n; ++k) {
        double log_c = 0.0;
        for (int64_t i = 1; i <= k; ++i)
            log_c += std::log(double(n - k + i)) - std::log(double(i));
        p += std::exp(log_c - double(n) * std::log(2.0));
    }
    return std::min(1.0, p);
}

} // namespace dncl::bench
