#include "dncl/beam.hpp"

#include <algorithm>
#include <cmath>

namespace dncl::infer {

using model::Model;
using tensor::T;

namespace {

struct State {
    std::vector<int> ids;       // BOS + emitted tokens
    std::vector<double> mants;  // aligned with ids
    std::vector<int> expos;     // exponent per emitted const token (aligned with ids)
    int64_t need = 1;           // outstanding arity
    double logprob = 0.0;
};

struct Candidate {
    int state;
    int token;
    double mant;
    double logprob;
};

} // namespace

std::vector<Beam> beam_search(Model& m, const data::PointSet& ps, int beam_size, int d) {
    if (beam_size < 1) throw InferError("beam size must be >= 1");
    const int64_t max_len = m.config().max_expr_len;
    const int V = expr::vocab::kSize;

    // encode once, then reuse the feature values for every decode step
    std::vector<double> feat_vals;
    tensor::Shape feat_shape;
    {
        tensor::Tape tape;
        Model::Ctx ctx{tape, false, nullptr};
        std::vector<const data::PointSet*> one{&ps};
        T h = m.encode(ctx, one);
        feat_vals = tape.val(h);
        feat_shape = tape.shape(h);
    }
    const int64_t mt = feat_shape.dim[1], hd = feat_shape.dim[2];

    std::vector<State> active(1);
    active[0].ids = {expr::vocab::kBos};
    active[0].mants = {0.0};
    active[0].expos = {0};
    std::vector<Beam> finished;

    for (int64_t step = 0; step < max_len && !active.empty(); ++step) {
        const int64_t B = int64_t(active.size());
        const int64_t L = step + 1;

        std::vector<int> in_ids(size_t(B * L));
        std::vector<double> in_mant(size_t(B * L));
        for (int64_t b = 0; b < B; ++b)
            for (int64_t p = 0; p < L; ++p) {
                in_ids[size_t(b * L + p)] = active[size_t(b)].ids[size_t(p)];
                in_mant[size_t(b * L + p)] = active[size_t(b)].mants[size_t(p)];
            }

        tensor::Tape tape;
        Model::Ctx ctx{tape, false, nullptr};
        std::vector<double> feats_b(size_t(B) * feat_vals.size());
        for (int64_t b = 0; b < B; ++b)
            std::copy(feat_vals.begin(), feat_vals.end(), feats_b.begin() + b * int64_t(feat_vals.size()));
        T feats = tape.constant(std::move(feats_b), tensor::make_shape(B, mt, hd));
        Model::DecoderOut out = m.decode(ctx, feats, in_ids, in_mant, B, L);
        const std::vector<double>& logits = tape.val(out.logits);
        const std::vector<double>& mant = tape.val(out.mantissa);

        std::vector<Candidate> cands;
        cands.reserve(size_t(B) * 8);
        for (int64_t b = 0; b < B; ++b) {
            const State& st = active[size_t(b)];
            const double* row = logits.data() + (b * L + (L - 1)) * V;
            // log-softmax over the full vocabulary
            double mx = row[0];
            for (int c = 1; c < V; ++c) mx = std::max(mx, row[c]);
            double sum = 0.0;
            for (int c = 0; c < V; ++c) sum += std::exp(row[c] - mx);
            const double lse = mx + std::log(sum);

            const int64_t emitted = L - 1; // excludes BOS
            const double mpred = mant[size_t(b * L + (L - 1))];
            for (int tok = 0; tok < V; ++tok) {
                if (tok == expr::vocab::kPad || tok == expr::vocab::kBos) continue;
                if (expr::vocab::is_var(tok) && expr::vocab::var_index(tok) >= d) continue;
                const int ar = expr::vocab::token_arity(tok);
                // must still be completable within max_len
                if (st.need - 1 + ar > max_len - emitted - 1) continue;
                cands.push_back(Candidate{int(b), tok, expr::vocab::is_const(tok) ? mpred : 0.0,
                                          st.logprob + (row[tok] - lse)});
            }
        }
        if (cands.empty()) break;

        const size_t keep = std::min(cands.size(), size_t(beam_size));
        std::partial_sort(cands.begin(), cands.begin() + ptrdiff_t(keep), cands.end(),
                          [](const Candidate& a, const Candidate& b) {
                              if (a.logprob != b.logprob) return a.logprob > b.logprob;
                              if (a.state != b.state) return a.state < b.state;
                              return a.token < b.token;
                          });

        std::vector<State> next;
        next.reserve(keep);
        for (size_t c = 0; c < keep; ++c) {
            const Candidate& cd = cands[c];
            State st = active[size_t(cd.state)];
            st.ids.push_back(cd.token);
            st.mants.push_back(cd.mant);
            st.expos.push_back(expr::vocab::is_const(cd.token)
                                   ? expr::vocab::const_exponent(cd.token)
                                   : 0);
            st.need += expr::vocab::token_arity(cd.token) - 1;
            st.logprob = cd.logprob;
            if (st.need == 0) {
                Beam beam;
                const size_t len = st.ids.size() - 1;
                beam.logprob = st.logprob;
                beam.score = st.logprob / double(len);
                beam.tokens.symbols.assign(st.ids.begin() + 1, st.ids.end());
                beam.tokens.mantissas.assign(st.mants.begin() + 1, st.mants.end());
                beam.tokens.exponents.assign(st.expos.begin() + 1, st.expos.end());
                finished.push_back(std::move(beam));
            } else {
                next.push_back(std::move(st));
            }
        }
        active = std::move(next);
        if (int(finished.size()) >= beam_size && active.empty()) break;
    }

    if (finished.empty())
        throw InferError("beam search produced no complete sequence within max_expr_len");

    std::stable_sort(finished.begin(), finished.end(), [](const Beam& a, const Beam& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.tokens.symbols.size() < b.tokens.symbols.size();
    });
    if (int(finished.size()) > beam_size) finished.resize(size_t(beam_size));
    return finished;
}

} // namespace dncl::infer
