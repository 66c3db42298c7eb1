#include "dncl/heatmap.hpp"

#include "dncl/kernels.hpp"
#include "dncl/util.hpp"

#include <cmath>
#include <sstream>

namespace dncl::bench {

HeatmapResult feature_heatmap(model::Model& m, const expr::Expr& truth, int d, double eta,
                              int datasets_per_condition, int64_t points, uint64_t seed) {
    const int n = datasets_per_condition;
    const expr::Domain dom = expr::default_domain(truth, d);

    // pooled feature per dataset: sum over the token axis
    auto pooled_feature = [&](const data::PointSet& ps) {
        tensor::Tape tape;
        model::Model::Ctx ctx{tape, false, nullptr};
        std::vector<const data::PointSet*> one{&ps};
        tensor::T h = m.encode(ctx, one);
        const tensor::Shape s = tape.shape(h);
        const std::vector<double>& v = tape.val(h);
        std::vector<double> pooled(size_t(s.dim[2]), 0.0);
        for (int64_t t = 0; t < s.dim[1]; ++t)
            kern::active().axpy(1.0, v.data() + t * s.dim[2], pooled.data(), s.dim[2]);
        return pooled;
    };

    std::vector<std::vector<double>> feats;
    feats.reserve(size_t(2 * n));
    for (int i = 0; i < n; ++i) { // noisy datasets first
        Rng rng = Rng::derive(seed, uint64_t(i));
        data::PointSet clean = data::sample_points(truth, dom, points, d, rng);
        feats.push_back(pooled_feature(data::add_noise(clean, eta, rng)));
    }
    for (int i = 0; i < n; ++i) {
        Rng rng = Rng::derive(seed, uint64_t(n + i));
        feats.push_back(pooled_feature(data::sample_points(truth, dom, points, d, rng)));
    }

    const int N = 2 * n;
    HeatmapResult out;
    out.n = n;
    out.matrix.assign(size_t(N) * size_t(N), 0.0);
    std::vector<double> norms(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i)
        norms[size_t(i)] =
            std::sqrt(kern::active().vsumsq(feats[size_t(i)].data(), int64_t(feats[size_t(i)].size())));

    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            if (i == j) {
                out.matrix[size_t(i * N + j)] = 1.0;
                continue;
            }
            const double dot = kern::active().dot(feats[size_t(i)].data(), feats[size_t(j)].data(),
                                                  int64_t(feats[size_t(i)].size()));
            out.matrix[size_t(i * N + j)] = dot / (norms[size_t(i)] * norms[size_t(j)] + 1e-300);
        }

    double wn = 0.0, wc = 0.0, cx = 0.0;
    int64_t cn = 0, cc = 0, cxn = 0;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            if (i == j) continue;
            const double v = out.matrix[size_t(i * N + j)];
            const bool ni = i < n, nj = j < n;
            if (ni && nj) { wn += v; ++cn; }
            else if (!ni && !nj) { wc += v; ++cc; }
            else { cx += v; ++cxn; }
        }
    out.within_noisy = wn / double(cn);
    out.within_clean = wc / double(cc);
    out.cross = cx / double(cxn);
    return out;
}

void write_heatmap_csv(const HeatmapResult& h, const std::string& path) {
    const int N = 2 * h.n;
    std::ostringstream out;
    out << "# within_noisy " << util::fmt_g(h.within_noisy, 10) << " within_clean "
        << util::fmt_g(h.within_clean, 10) << " cross " << util::fmt_g(h.cross, 10) << "\n";
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
            if (j) out << ',';
            out << util::fmt_g(h.matrix[size_t(i * N + j)], 10);
        }
        out << "\n";
    }
    util::write_file(path, out.str());
}

} // namespace dncl::bench
