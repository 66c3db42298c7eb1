#include "dncl/data.hpp"

#include <cmath>

namespace dncl::data {

double rms(std::span<const double> y) {
    if (y.empty()) throw DataError("rms of empty vector");
    double acc = 0.0;
    for (double v : y) acc += v * v;
    return std::sqrt(acc / double(y.size()));
}

PointSet sample_points(const expr::Expr& tree, const expr::Domain& dom, int64_t n,
                       int d, Rng& rng, double abs_cap) {
    if (n < 1) throw DataError("need n >= 1 points");
    PointSet ps;
    ps.n = n;
    ps.d = d;
    ps.X.reserve(size_t(n) * d);
    ps.y.reserve(size_t(n));

    const int64_t budget = 10 * n;
    int64_t drawn = 0;
    double row[2];
    while (int64_t(ps.y.size()) < n) {
        if (drawn >= budget)
            throw DataError("insufficient valid domain: " + std::to_string(ps.y.size()) +
                            "/" + std::to_string(n) + " valid rows after " +
                            std::to_string(drawn) + " draws");
        ++drawn;
        for (int k = 0; k < d; ++k) row[k] = rng.uniform(dom.lo[k], dom.hi[k]);
        expr::EvalResult r = expr::evaluate(tree, row, 1, d);
        if (!r.valid[0] || std::abs(r.y[0]) > abs_cap) continue;
        for (int k = 0; k < d; ++k) ps.X.push_back(row[k]);
        ps.y.push_back(r.y[0]);
    }
    return ps;
}

PointSet add_noise(const PointSet& ps, double eta, Rng& rng) {
    if (eta < 0) throw DataError("noise level must be >= 0");
    PointSet out = ps;
    out.eta = std::sqrt(ps.eta * ps.eta + eta * eta); // composition metadata
    if (eta == 0.0 || ps.y.empty()) return out;
    const double sigma = eta * rms(ps.y);
    for (auto& v : out.y) v += sigma * rng.normal();
    return out;
}

std::pair<PointSet, PointSet> make_views(const PointSet& ps, double eta, Rng& rng) {
    return {ps, add_noise(ps, eta, rng)};
}

Batch build_batch(std::span<const CorpusEntry* const> entries, int64_t n_sub,
                  double eta, Rng& rng) {
    const int64_t B = int64_t(entries.size());
    if (B < 2 || B % 2 != 0) throw DataError("batch size must be even and >= 2");

    Batch batch;
    batch.view1.reserve(size_t(B));
    batch.view2.reserve(size_t(B));
    batch.labels.reserve(size_t(B));

    for (const CorpusEntry* e : entries) {
        if (e->n_points < n_sub)
            throw DataError("corpus entry " + std::to_string(e->id) + " has " +
                            std::to_string(e->n_points) + " points, need " +
                            std::to_string(n_sub));
        // subsample n_sub distinct rows (partial Fisher-Yates over indices)
        std::vector<int64_t> idx(size_t(e->n_points));
        for (int64_t i = 0; i < e->n_points; ++i) idx[size_t(i)] = i;
        for (int64_t i = 0; i < n_sub; ++i) {
            const int64_t j = i + int64_t(rng.uniform_int(uint64_t(e->n_points - i)));
            std::swap(idx[size_t(i)], idx[size_t(j)]);
        }

        PointSet clean;
        clean.n = n_sub;
        clean.d = e->d;
        clean.seed = e->seed;
        clean.source_id = std::to_string(e->id);
        clean.X.reserve(size_t(n_sub) * e->d);
        clean.y.reserve(size_t(n_sub));
        for (int64_t i = 0; i < n_sub; ++i) {
            const int64_t r = idx[size_t(i)];
            for (int k = 0; k < e->d; ++k) clean.X.push_back(e->X[size_t(r) * e->d + k]);
            clean.y.push_back(e->y[size_t(r)]);
        }

        auto [v1, v2] = make_views(clean, eta, rng);
        batch.view1.push_back(std::move(v1));
        batch.view2.push_back(std::move(v2));
        batch.labels.push_back(e->tokens);
    }

    // flag exactly B/2 entries to feed the noisy feature to the decoder
    std::vector<int64_t> order(static_cast<size_t>(B));
    for (int64_t i = 0; i < B; ++i) order[size_t(i)] = i;
    for (int64_t i = 0; i < B; ++i) {
        const int64_t j = i + int64_t(rng.uniform_int(uint64_t(B - i)));
        std::swap(order[size_t(i)], order[size_t(j)]);
    }
    batch.decoder_noisy.assign(size_t(B), 0);
    for (int64_t i = 0; i < B / 2; ++i) batch.decoder_noisy[size_t(order[size_t(i)])] = 1;

    return batch;
}

} // namespace dncl::data
