#include "dncl/train.hpp"

#include "dncl/kernels.hpp"
#include "dncl/util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dncl::train {

using model::Model;
using tensor::T;

nlohmann::json TrainConfig::to_json() const {
    return {{"steps", steps},
            {"batch_size", batch_size},
            {"lr", lr},
            {"warmup_steps", warmup_steps},
            {"eta_train", eta_train},
            {"grad_clip", grad_clip},
            {"eval_every", eval_every},
            {"val_frac", val_frac},
            {"n_sub_uni", n_sub_uni},
            {"n_sub_bi", n_sub_bi},
            {"seed", seed},
            {"patience", patience},
            {"min_delta", min_delta},
            {"save_every", save_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.eta_train = j.value("eta_train", c.eta_train);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.val_frac = j.value("val_frac", c.val_frac);
    c.n_sub_uni = j.value("n_sub_uni", c.n_sub_uni);
    c.n_sub_bi = j.value("n_sub_bi", c.n_sub_bi);
    c.seed = j.value("seed", c.seed);
    c.patience = j.value("patience", c.patience);
    c.min_delta = j.value("min_delta", c.min_delta);
    c.save_every = j.value("save_every", c.save_every);
    return c;
}

void split_corpus(const data::Corpus& corpus, double val_frac, uint64_t seed,
                  std::vector<int64_t>& train_idx, std::vector<int64_t>& val_idx) {
    const int64_t N = int64_t(corpus.entries.size());
    std::vector<int64_t> order(static_cast<size_t>(N));
    for (int64_t i = 0; i < N; ++i) order[size_t(i)] = i;
    Rng rng = Rng::derive(seed, 0x5EED);
    for (int64_t i = 0; i < N; ++i) {
        const int64_t j = i + int64_t(rng.uniform_int(uint64_t(N - i)));
        std::swap(order[size_t(i)], order[size_t(j)]);
    }
    train_idx.clear();
    val_idx.clear();
    const int64_t n_val = val_frac <= 0.0 ? 0 : std::max<int64_t>(1, int64_t(std::llround(val_frac * double(N))));
    for (int64_t i = 0; i < N; ++i) {
        if (i < N - n_val) train_idx.push_back(order[size_t(i)]);
        else val_idx.push_back(order[size_t(i)]);
    }
    if (val_idx.empty()) val_idx = train_idx; // overfit runs validate on train
    if (train_idx.empty()) throw TrainError("corpus too small for the requested split");
}

namespace {

int64_t points_per_entry(const data::Corpus& corpus, const TrainConfig& cfg) {
    int64_t n_sub = corpus.dims == 1 ? cfg.n_sub_uni : cfg.n_sub_bi;
    for (const auto& e : corpus.entries) n_sub = std::min(n_sub, e.n_points);
    if (n_sub < 1) throw TrainError("corpus entries carry no points");
    return n_sub;
}

std::vector<const data::CorpusEntry*> pick_batch(const data::Corpus& corpus,
                                                 const std::vector<int64_t>& pool,
                                                 int64_t B, Rng& rng) {
    if (int64_t(pool.size()) < B) throw TrainError("training split smaller than batch size");
    std::vector<int64_t> idx(pool);
    for (int64_t i = 0; i < B; ++i) {
        const int64_t j = i + int64_t(rng.uniform_int(uint64_t(int64_t(idx.size()) - i)));
        std::swap(idx[size_t(i)], idx[size_t(j)]);
    }
    std::vector<const data::CorpusEntry*> out;
    out.reserve(size_t(B));
    for (int64_t i = 0; i < B; ++i)
        out.push_back(&corpus.entries[size_t(idx[size_t(i)])]);
    return out;
}

struct StepLoss {
    double ce = 0, co = 0, total = 0;
};

// One optimization step over a two-view batch. Exposed loss parts are the
// tape values; the caller owns logging and metric assembly.
StepLoss run_step(Model& m, const data::Batch& batch, const TrainConfig& cfg, int64_t step,
                  Rng& step_rng) {
    tensor::Tape tape;
    Model::Ctx ctx{tape, /*training=*/true, &step_rng};
    const int64_t B = batch.size();

    std::vector<const data::PointSet*> v1, v2;
    for (int64_t i = 0; i < B; ++i) {
        v1.push_back(&batch.view1[size_t(i)]);
        v2.push_back(&batch.view2[size_t(i)]);
    }

    // parameter-sharing: both views run through the same bound parameters
    T h1 = m.encode(ctx, v1);
    T h2 = m.encode(ctx, v2);
    T z1 = m.project(ctx, h1);
    T z2 = m.project(ctx, h2);
    T co = m.info_nce(ctx, z1, z2, m.config().temperature, m.config().symmetric_infonce);

    T feats;
    if (m.config().decoder_feature_mode == "concat") {
        feats = tape.concat_axis1(h1, h2);
    } else {
        // replace half of the batch with the noisy feature
        const tensor::Shape hs = tape.shape(h1);
        std::vector<double> m1(size_t(hs.numel())), m2(size_t(hs.numel()));
        const int64_t per = hs.dim[1] * hs.dim[2];
        for (int64_t b = 0; b < B; ++b) {
            const double noisy = batch.decoder_noisy[size_t(b)] ? 1.0 : 0.0;
            std::fill_n(m1.data() + b * per, per, 1.0 - noisy);
            std::fill_n(m2.data() + b * per, per, noisy);
        }
        T mask1 = tape.constant(std::move(m1), hs);
        T mask2 = tape.constant(std::move(m2), hs);
        feats = tape.add(tape.mul(h1, mask1), tape.mul(h2, mask2));
    }

    Model::SeqBatch sb = m.make_seq_batch(batch.labels);
    Model::DecoderOut out = m.decode(ctx, feats, sb.in_ids, sb.in_mant, B, sb.L);
    Model::SeqLossParts parts = m.cross_entropy_seq(ctx, out, batch.labels, sb.L);
    T total = m.total_loss(ctx, parts.ce, co, m.config().lambda_co);

    StepLoss loss;
    loss.ce = tape.val(parts.ce)[0];
    loss.co = tape.val(co)[0];
    loss.total = tape.val(total)[0];
    if (!std::isfinite(loss.total))
        throw TrainError("training diverged at step " + std::to_string(step) +
                         " (loss=" + util::fmt_g(loss.total) + ")");

    tape.backward(total);

    // global-norm clip, then Adam with linear warmup
    double scale = 1.0;
    if (cfg.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& [p, t] : tape.param_bindings()) {
            (void)p;
            if (!tape.requires_grad(t)) continue;
            const auto& g = tape.grad(t);
            sq += kern::active().vsumsq(g.data(), int64_t(g.size()));
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) scale = cfg.grad_clip / norm;
    }

    tensor::AdamConfig ac;
    ac.lr = cfg.lr * std::min(1.0, double(step) / double(std::max<int64_t>(1, cfg.warmup_steps)));
    std::vector<double> scaled;
    for (const auto& [p, t] : tape.param_bindings()) {
        const auto& g = tape.grad(t);
        if (scale == 1.0) {
            tensor::adam_step(*p, g.data(), ac, step);
        } else {
            scaled.assign(g.begin(), g.end());
            kern::active().vscale(scaled.data(), scale, scaled.data(), int64_t(scaled.size()));
            tensor::adam_step(*p, scaled.data(), ac, step);
        }
    }
    return loss;
}

} // namespace

std::pair<double, double> evaluate_split(Model& m, const data::Corpus& corpus,
                                         const std::vector<int64_t>& indices, int64_t n_sub,
                                         int64_t batch_size, uint64_t seed) {
    Rng rng = Rng::derive(seed, 0xEDA1);
    double loss_sum = 0.0, acc_sum = 0.0;
    int64_t batches = 0;
    for (size_t at = 0; at < indices.size(); at += size_t(batch_size)) {
        const size_t hi = std::min(indices.size(), at + size_t(batch_size));
        const int64_t B = int64_t(hi - at);
        std::vector<const data::PointSet*> sets;
        std::vector<data::PointSet> storage;
        std::vector<expr::TokenSequence> labels;
        storage.reserve(size_t(B));
        for (size_t i = at; i < hi; ++i) {
            const data::CorpusEntry& e = corpus.entries[size_t(indices[i])];
            // clean subsample; the validation view carries no noise
            data::PointSet ps;
            ps.n = n_sub;
            ps.d = e.d;
            std::vector<int64_t> order(static_cast<size_t>(e.n_points));
            for (int64_t k = 0; k < e.n_points; ++k) order[size_t(k)] = k;
            for (int64_t k = 0; k < n_sub; ++k) {
                const int64_t j = k + int64_t(rng.uniform_int(uint64_t(e.n_points - k)));
                std::swap(order[size_t(k)], order[size_t(j)]);
            }
            for (int64_t k = 0; k < n_sub; ++k) {
                const int64_t r = order[size_t(k)];
                for (int dd = 0; dd < e.d; ++dd)
                    ps.X.push_back(e.X[size_t(r) * size_t(e.d) + size_t(dd)]);
                ps.y.push_back(e.y[size_t(r)]);
            }
            storage.push_back(std::move(ps));
            labels.push_back(e.tokens);
        }
        for (const auto& ps : storage) sets.push_back(&ps);

        tensor::Tape tape;
        Model::Ctx ctx{tape, /*training=*/false, nullptr};
        T h = m.encode(ctx, sets);
        Model::SeqBatch sb = m.make_seq_batch(labels);
        Model::DecoderOut out = m.decode(ctx, h, sb.in_ids, sb.in_mant, B, sb.L);
        Model::SeqLossParts parts = m.cross_entropy_seq(ctx, out, labels, sb.L);
        loss_sum += tape.val(parts.ce)[0];
        acc_sum += Model::token_accuracy(tape.val(out.logits), sb, B);
        ++batches;
    }
    if (batches == 0) throw TrainError("empty validation split");
    return {loss_sum / double(batches), acc_sum / double(batches)};
}

TrainResult train_model(Model& m, const data::Corpus& corpus, const TrainConfig& cfg,
                        const std::string& ckpt_path, const std::string& metrics_path,
                        int64_t start_step, const std::string& inputs_hash) {
    if (corpus.entries.size() < 2) throw TrainError("corpus too small");
    if (cfg.batch_size % 2 != 0) throw TrainError("batch size must be even");

    std::vector<int64_t> train_idx, val_idx;
    split_corpus(corpus, cfg.val_frac, cfg.seed, train_idx, val_idx);
    const int64_t n_sub = points_per_entry(corpus, cfg);

    nlohmann::json run_cfg = {{"train_config", cfg.to_json()},
                              {"model_config", m.config().to_json()},
                              {"inputs_sha1", inputs_hash},
                              {"corpus_entries", corpus.entries.size()},
                              {"start_step", start_step}};

    std::ofstream csv;
    csv.open(metrics_path, start_step > 0 ? std::ios::app : std::ios::out);
    if (!csv) throw TrainError("cannot write metrics: " + metrics_path);
    if (start_step == 0) {
        csv << "# run_config " << run_cfg.dump() << "\n";
        csv << "step,ce,co,total,val_acc\n";
    }

    auto save = [&](int64_t step) {
        if (ckpt_path.empty()) return;
        nlohmann::json header = {{"train_config", cfg.to_json()},
                                 {"inputs_sha1", inputs_hash}};
        model::ModelIO::save(ckpt_path, m, header, step);
    };

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    int64_t evals_since_best = 0;
    const int64_t last_step = start_step + cfg.steps;

    for (int64_t step = start_step + 1; step <= last_step; ++step) {
        Rng step_rng = Rng::derive(cfg.seed, uint64_t(step));
        auto slice = pick_batch(corpus, train_idx, cfg.batch_size, step_rng);
        data::Batch batch = data::build_batch(slice, n_sub, cfg.eta_train, step_rng);
        StepLoss loss = run_step(m, batch, cfg, step, step_rng);

        std::string val_field;
        if (cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == last_step)) {
            auto [vl, va] = evaluate_split(m, corpus, val_idx, n_sub, cfg.batch_size,
                                           cfg.seed ^ uint64_t(step));
            result.final_val_loss = vl;
            result.final_val_acc = va;
            val_field = util::fmt_g(va, 10);
            if (vl < best_val - cfg.min_delta) {
                best_val = vl;
                evals_since_best = 0;
            } else {
                ++evals_since_best;
            }
        }

        csv << step << ',' << util::fmt_g(loss.ce, 10) << ',' << util::fmt_g(loss.co, 10) << ','
            << util::fmt_g(loss.total, 10) << ',' << val_field << "\n";

        result.steps_run = step - start_step;
        if (cfg.save_every > 0 && step % cfg.save_every == 0) save(step);

        if (cfg.patience > 0 && evals_since_best >= cfg.patience) {
            result.early_stopped = true;
            save(step);
            csv.flush();
            return result;
        }
    }
    save(last_step);
    csv.flush();
    return result;
}

} // namespace dncl::train
