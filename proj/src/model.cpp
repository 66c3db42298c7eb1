#include "dncl/model.hpp"

#include "dncl/checkpoint.hpp"
#include "dncl/util.hpp"

#include <cmath>

namespace dncl::model {

using tensor::make_shape;
using tensor::Parameter;
using tensor::T;

nlohmann::json ModelConfig::to_json() const {
    return {{"heads", heads},
            {"enc_layers", enc_layers},
            {"dec_layers", dec_layers},
            {"hidden", hidden},
            {"dropout", dropout},
            {"n_inducing", n_inducing},
            {"out_tokens", out_tokens},
            {"proj_dim", proj_dim},
            {"ffn_mult", ffn_mult},
            {"max_expr_len", max_expr_len},
            {"max_points", max_points},
            {"input_dim", input_dim},
            {"lambda_co", lambda_co},
            {"temperature", temperature},
            {"label_smoothing", label_smoothing},
            {"const_loss_weight", const_loss_weight},
            {"symmetric_infonce", symmetric_infonce},
            {"decoder_feature_mode", decoder_feature_mode}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.heads = j.value("heads", c.heads);
    c.enc_layers = j.value("enc_layers", c.enc_layers);
    c.dec_layers = j.value("dec_layers", c.dec_layers);
    c.hidden = j.value("hidden", c.hidden);
    c.dropout = j.value("dropout", c.dropout);
    c.n_inducing = j.value("n_inducing", c.n_inducing);
    c.out_tokens = j.value("out_tokens", c.out_tokens);
    c.proj_dim = j.value("proj_dim", c.proj_dim);
    c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
    c.max_expr_len = j.value("max_expr_len", c.max_expr_len);
    c.max_points = j.value("max_points", c.max_points);
    c.input_dim = j.value("input_dim", c.input_dim);
    c.lambda_co = j.value("lambda_co", c.lambda_co);
    c.temperature = j.value("temperature", c.temperature);
    c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
    c.const_loss_weight = j.value("const_loss_weight", c.const_loss_weight);
    c.symmetric_infonce = j.value("symmetric_infonce", c.symmetric_infonce);
    c.decoder_feature_mode = j.value("decoder_feature_mode", c.decoder_feature_mode);
    return c;
}

uint64_t ModelConfig::hash() const { return util::fnv1a(to_json().dump()); }

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------
Parameter* Model::make_param(const std::string& name, tensor::Shape s, Rng& rng, double scale) {
    std::vector<double> init(size_t(s.numel()));
    for (auto& v : init) v = rng.uniform(-scale, scale);
    store_.push_back(std::make_unique<Parameter>(name, s, std::move(init)));
    return store_.back().get();
}

Model::Linear Model::make_linear(const std::string& name, int64_t in, int64_t out, Rng& rng) {
    Linear l;
    const double scale = std::sqrt(6.0 / double(in + out));
    l.W = make_param(name + ".w", make_shape(in, out), rng, scale);
    l.b = make_param(name + ".b", make_shape(out), rng, 0.0);
    return l;
}

Model::Attention Model::make_attention(const std::string& name, Rng& rng) {
    Attention at;
    const int64_t h = cfg_.hidden;
    at.q = make_linear(name + ".q", h, h, rng);
    at.k = make_linear(name + ".k", h, h, rng);
    at.v = make_linear(name + ".v", h, h, rng);
    at.o = make_linear(name + ".o", h, h, rng);
    return at;
}

tensor::Parameter* Model::make_ln_gamma(const std::string& name, Rng& rng) {
    Parameter* p = make_param(name, make_shape(cfg_.hidden), rng, 0.0);
    std::fill(p->value.begin(), p->value.end(), 1.0);
    return p;
}

Model::MAB Model::make_mab(const std::string& name, Rng& rng) {
    MAB m;
    const int64_t h = cfg_.hidden;
    m.attn = make_attention(name, rng);
    m.f1 = make_linear(name + ".f1", h, h * cfg_.ffn_mult, rng);
    m.f2 = make_linear(name + ".f2", h * cfg_.ffn_mult, h, rng);
    m.ln1_g = make_ln_gamma(name + ".ln1.g", rng);
    m.ln1_b = make_param(name + ".ln1.b", make_shape(h), rng, 0.0);
    m.ln2_g = make_ln_gamma(name + ".ln2.g", rng);
    m.ln2_b = make_param(name + ".ln2.b", make_shape(h), rng, 0.0);
    return m;
}

Model::Model(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    if (cfg_.hidden % cfg_.heads != 0)
        throw ModelError("hidden_dim must be divisible by heads");
    Rng rng(init_seed);
    const int64_t h = cfg_.hidden;

    in_proj_ = make_linear("enc.in", cfg_.input_dim, h, rng);
    inducing_ = make_param("enc.inducing", make_shape(cfg_.n_inducing, h), rng,
                           1.0 / std::sqrt(double(h)));
    for (int l = 0; l < cfg_.enc_layers; ++l) {
        isab_lower_.push_back(make_mab("enc.isab" + std::to_string(l) + ".lower", rng));
        isab_upper_.push_back(make_mab("enc.isab" + std::to_string(l) + ".upper", rng));
    }
    seeds_ = make_param("enc.seeds", make_shape(cfg_.out_tokens, h), rng,
                        1.0 / std::sqrt(double(h)));
    pool_ = make_mab("enc.pool", rng);

    proj1_ = make_linear("proj.0", h, h, rng);
    proj2_ = make_linear("proj.1", h, cfg_.proj_dim, rng);

    tok_emb_ = make_param("dec.tok_emb", make_shape(expr::vocab::kSize, h), rng,
                          1.0 / std::sqrt(double(h)));
    mant_in_ = make_linear("dec.mant_in", 1, h, rng);
    for (int l = 0; l < cfg_.dec_layers; ++l) {
        const std::string base = "dec.l" + std::to_string(l);
        DecLayer dl;
        dl.self_attn = make_attention(base + ".self", rng);
        dl.cross_attn = make_attention(base + ".cross", rng);
        dl.f1 = make_linear(base + ".f1", h, h * cfg_.ffn_mult, rng);
        dl.f2 = make_linear(base + ".f2", h * cfg_.ffn_mult, h, rng);
        dl.ln1_g = make_ln_gamma(base + ".ln1.g", rng);
        dl.ln1_b = make_param(base + ".ln1.b", make_shape(h), rng, 0.0);
        dl.ln2_g = make_ln_gamma(base + ".ln2.g", rng);
        dl.ln2_b = make_param(base + ".ln2.b", make_shape(h), rng, 0.0);
        dl.ln3_g = make_ln_gamma(base + ".ln3.g", rng);
        dl.ln3_b = make_param(base + ".ln3.b", make_shape(h), rng, 0.0);
        dec_layers_.push_back(dl);
    }
    out_sym_ = make_linear("dec.out_sym", h, expr::vocab::kSize, rng);
    out_mant_ = make_linear("dec.out_mant", h, 1, rng);

    // fixed sinusoidal positions for the decoder
    posenc_.assign(size_t(cfg_.max_expr_len) * size_t(h), 0.0);
    for (int64_t p = 0; p < cfg_.max_expr_len; ++p)
        for (int64_t i = 0; i < h; ++i) {
            const double angle = double(p) / std::pow(10000.0, 2.0 * double(i / 2) / double(h));
            posenc_[size_t(p * h + i)] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
}

std::vector<Parameter*> Model::parameters() {
    std::vector<Parameter*> out;
    out.reserve(store_.size());
    for (auto& p : store_) out.push_back(p.get());
    return out;
}

int64_t Model::parameter_count() {
    int64_t n = 0;
    for (auto& p : store_) n += p->numel();
    return n;
}

Parameter* Model::find_param(const std::string& name) {
    for (auto& p : store_)
        if (p->name == name) return p.get();
    return nullptr;
}

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------
T Model::apply_linear(Ctx ctx, const Linear& l, T x) {
    return ctx.tape.add_rowvec(ctx.tape.matmul(x, ctx.tape.param(*l.W)), ctx.tape.param(*l.b));
}

T Model::multihead(Ctx ctx, const Attention& at, T Q, T K, const std::vector<uint8_t>* mask) {
    auto& t = ctx.tape;
    T q = t.split_heads(apply_linear(ctx, at.q, Q), cfg_.heads);
    T k = t.split_heads(apply_linear(ctx, at.k, K), cfg_.heads);
    T v = t.split_heads(apply_linear(ctx, at.v, K), cfg_.heads);
    T attn = t.merge_heads(t.scaled_dot_attention(q, k, v, mask), cfg_.heads);
    return apply_linear(ctx, at.o, attn);
}

T Model::mab(Ctx ctx, const MAB& m, T Q, T K, const std::vector<uint8_t>* mask) {
    auto& t = ctx.tape;
    T attn = multihead(ctx, m.attn, Q, K, mask);
    if (ctx.training) attn = t.dropout(attn, cfg_.dropout, true, *ctx.rng);
    T a = t.layer_norm(t.add(Q, attn), t.param(*m.ln1_g), t.param(*m.ln1_b));
    T f = apply_linear(ctx, m.f2, t.relu_(apply_linear(ctx, m.f1, a)));
    if (ctx.training) f = t.dropout(f, cfg_.dropout, true, *ctx.rng);
    return t.layer_norm(t.add(a, f), t.param(*m.ln2_g), t.param(*m.ln2_b));
}

// ---------------------------------------------------------------------------
// Encoder / projection
// ---------------------------------------------------------------------------
T Model::encode(Ctx ctx, const std::vector<const data::PointSet*>& sets) {
    if (sets.empty()) throw ModelError("encode: empty batch");
    auto& t = ctx.tape;
    const int64_t B = int64_t(sets.size());
    const int64_t n = sets[0]->n;
    const int64_t in_dim = cfg_.input_dim;
    if (n < 1 || n > cfg_.max_points)
        throw ModelError("encode: set size " + std::to_string(n) + " out of range");

    std::vector<double> raw(size_t(B) * size_t(n) * size_t(in_dim), 0.0);
    for (int64_t b = 0; b < B; ++b) {
        const data::PointSet& ps = *sets[size_t(b)];
        if (ps.n != n) throw ModelError("encode: ragged batch");
        if (ps.d + 1 > in_dim) throw ModelError("encode: point dimension exceeds input width");
        for (int64_t i = 0; i < n; ++i) {
            double* row = raw.data() + (b * n + i) * in_dim;
            for (int k = 0; k < ps.d; ++k) {
                const double v = ps.X[size_t(i) * size_t(ps.d) + size_t(k)];
                if (!std::isfinite(v)) throw ModelError("encode: non-finite input");
                row[k] = v;
            }
            const double yv = ps.y[size_t(i)];
            if (!std::isfinite(yv)) throw ModelError("encode: non-finite target");
            row[in_dim - 1] = yv;
        }
    }

    T x = t.constant(std::move(raw), make_shape(B, n, in_dim));
    x = apply_linear(ctx, in_proj_, x);

    for (int l = 0; l < cfg_.enc_layers; ++l) {
        T ind = t.broadcast_rows(t.param(*inducing_), B);
        T hmid = mab(ctx, isab_lower_[size_t(l)], ind, x, nullptr);
        x = mab(ctx, isab_upper_[size_t(l)], x, hmid, nullptr);
    }

    T s = t.broadcast_rows(t.param(*seeds_), B);
    return mab(ctx, pool_, s, x, nullptr);
}

T Model::project(Ctx ctx, T h) {
    auto& t = ctx.tape;
    T pooled = t.mean_axis1(h);
    T z = apply_linear(ctx, proj2_, t.relu_(apply_linear(ctx, proj1_, pooled)));
    return t.l2_normalize_rows(z);
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------
Model::DecoderOut Model::decode(Ctx ctx, T feats, const std::vector<int>& in_ids,
                                const std::vector<double>& in_mant, int64_t B, int64_t L) {
    auto& t = ctx.tape;
    if (int64_t(in_ids.size()) != B * L || int64_t(in_mant.size()) != B * L)
        throw ModelError("decode: ids/mantissa length mismatch");
    if (L > cfg_.max_expr_len) throw ModelError("decode: sequence longer than max_expr_len");
    const int64_t h = cfg_.hidden;

    T tok = t.embedding(t.param(*tok_emb_), in_ids, B, L);
    T mant = t.constant(std::vector<double>(in_mant), make_shape(B, L, 1));
    T mant_emb = t.add_rowvec(t.matmul(mant, t.param(*mant_in_.W)), t.param(*mant_in_.b));

    std::vector<double> pos(size_t(L) * size_t(h));
    for (int64_t p = 0; p < L; ++p)
        std::copy_n(posenc_.data() + p * h, h, pos.data() + p * h);
    T posb = t.broadcast_rows(t.constant(std::move(pos), make_shape(L, h)), B);

    T x = t.add(t.add(tok, mant_emb), posb);
    if (ctx.training) x = t.dropout(x, cfg_.dropout, true, *ctx.rng);

    std::vector<uint8_t> causal(size_t(L) * size_t(L), 0);
    for (int64_t i = 0; i < L; ++i)
        for (int64_t j = i + 1; j < L; ++j) causal[size_t(i * L + j)] = 1;

    for (const DecLayer& dl : dec_layers_) {
        // masked self-attention, then cross-attention to the data feature,
        // then the feed-forward block; post-norm like the encoder
        T sa = multihead(ctx, dl.self_attn, x, x, &causal);
        if (ctx.training) sa = t.dropout(sa, cfg_.dropout, true, *ctx.rng);
        x = t.layer_norm(t.add(x, sa), t.param(*dl.ln1_g), t.param(*dl.ln1_b));

        T ca = multihead(ctx, dl.cross_attn, x, feats, nullptr);
        if (ctx.training) ca = t.dropout(ca, cfg_.dropout, true, *ctx.rng);
        x = t.layer_norm(t.add(x, ca), t.param(*dl.ln2_g), t.param(*dl.ln2_b));

        T f = apply_linear(ctx, dl.f2, t.relu_(apply_linear(ctx, dl.f1, x)));
        if (ctx.training) f = t.dropout(f, cfg_.dropout, true, *ctx.rng);
        x = t.layer_norm(t.add(x, f), t.param(*dl.ln3_g), t.param(*dl.ln3_b));
    }

    DecoderOut out;
    out.logits = apply_linear(ctx, out_sym_, x);
    out.mantissa = t.tanh_(apply_linear(ctx, out_mant_, x));
    return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------
T Model::info_nce(Ctx ctx, T q, T k, double temperature, bool symmetric) {
    auto& t = ctx.tape;
    const tensor::Shape s = t.shape(q);
    if (s.rank != 2 || s.dim[0] < 2)
        throw ModelError("info_nce needs B >= 2 rows (no negatives otherwise)");
    const int64_t B = s.dim[0];
    std::vector<int> labels(static_cast<size_t>(B));
    for (int64_t i = 0; i < B; ++i) labels[size_t(i)] = int(i);
    const std::vector<double> w(static_cast<size_t>(B), 1.0);

    T logits = t.scale(t.matmul(q, k, false, true), 1.0 / temperature);
    T loss = t.ce_loss(logits, labels, w, 0.0);
    if (!symmetric) return loss;
    T logits2 = t.scale(t.matmul(k, q, false, true), 1.0 / temperature);
    T loss2 = t.ce_loss(logits2, labels, w, 0.0);
    return t.scale(t.add(loss, loss2), 0.5);
}

Model::SeqBatch Model::make_seq_batch(const std::vector<expr::TokenSequence>& labels) const {
    SeqBatch sb;
    const int64_t B = int64_t(labels.size());
    int64_t L = 1;
    for (const auto& l : labels) L = std::max(L, int64_t(l.size()));
    if (L > cfg_.max_expr_len)
        throw ModelError("label longer than max_expr_len");
    sb.L = L;
    sb.in_ids.assign(size_t(B * L), expr::vocab::kPad);
    sb.in_mant.assign(size_t(B * L), 0.0);
    sb.targets.assign(size_t(B * L), expr::vocab::kPad);
    sb.weights.assign(size_t(B * L), 0.0);
    sb.mant_targets.assign(size_t(B * L), 0.0);
    sb.mant_mask.assign(size_t(B * L), 0.0);
    for (int64_t b = 0; b < B; ++b) {
        const expr::TokenSequence& seq = labels[size_t(b)];
        for (int64_t p = 0; p < int64_t(seq.size()); ++p) {
            const size_t at = size_t(b * L + p);
            sb.targets[at] = seq.symbols[size_t(p)];
            sb.weights[at] = 1.0;
            if (expr::vocab::is_const(seq.symbols[size_t(p)])) {
                sb.mant_targets[at] = seq.mantissas[size_t(p)];
                sb.mant_mask[at] = 1.0;
            }
            if (p == 0) {
                sb.in_ids[at] = expr::vocab::kBos;
            } else {
                sb.in_ids[at] = seq.symbols[size_t(p - 1)];
                if (expr::vocab::is_const(seq.symbols[size_t(p - 1)]))
                    sb.in_mant[at] = seq.mantissas[size_t(p - 1)];
            }
        }
    }
    return sb;
}

Model::SeqLossParts Model::cross_entropy_seq(Ctx ctx, const DecoderOut& out,
                                             const std::vector<expr::TokenSequence>& labels,
                                             int64_t L) {
    auto& t = ctx.tape;
    SeqBatch sb = make_seq_batch(labels);
    if (sb.L != L) throw ModelError("cross_entropy_seq: L mismatch");
    const int64_t B = int64_t(labels.size());

    SeqLossParts parts;
    parts.symbol_ce = t.ce_loss(out.logits, sb.targets, sb.weights, cfg_.label_smoothing);

    double cnt = 0.0;
    for (double m : sb.mant_mask) cnt += m;
    if (cnt > 0.0) {
        T target = t.constant(std::vector<double>(sb.mant_targets), make_shape(B, L, 1));
        T mask = t.constant(std::vector<double>(sb.mant_mask), make_shape(B, L, 1));
        T diff = t.sub(out.mantissa, target);
        T sq = t.mul(t.mul(diff, diff), mask);
        parts.const_mse = t.scale(t.sum_all(sq), 1.0 / cnt);
    } else {
        parts.const_mse = t.constant_fill(0.0, make_shape(1));
    }
    parts.ce = t.add(parts.symbol_ce, t.scale(parts.const_mse, cfg_.const_loss_weight));
    return parts;
}

T Model::total_loss(Ctx ctx, T ce, T co, double lambda) {
    if (lambda < 0.0) throw ModelError("lambda must be >= 0");
    return ctx.tape.add(ce, ctx.tape.scale(co, lambda));
}

double Model::token_accuracy(const std::vector<double>& logits_val, const SeqBatch& sb,
                             int64_t B) {
    const int64_t C = expr::vocab::kSize;
    const int64_t N = B * sb.L;
    int64_t hit = 0, total = 0;
    for (int64_t i = 0; i < N; ++i) {
        if (sb.weights[size_t(i)] == 0.0) continue;
        const double* row = logits_val.data() + i * C;
        int64_t best = 0;
        for (int64_t c = 1; c < C; ++c)
            if (row[c] > row[best]) best = c;
        if (int(best) == sb.targets[size_t(i)]) ++hit;
        ++total;
    }
    return total == 0 ? 0.0 : double(hit) / double(total);
}

// ---------------------------------------------------------------------------
// Checkpoint glue
// ---------------------------------------------------------------------------
void ModelIO::save(const std::string& path, Model& m, const nlohmann::json& extra_header,
                   int64_t step) {
    ckpt::Checkpoint c;
    c.header = extra_header;
    c.header["format"] = "dncl-ckpt";
    c.header["step"] = step;
    c.header["model_config"] = m.config().to_json();
    c.header["config_hash"] = m.config().hash();
    std::vector<std::string> vocab;
    for (int id = 0; id < expr::vocab::kSize; ++id)
        vocab.push_back(expr::vocab::token_name(id));
    c.header["vocab"] = vocab;
    c.header["vocab_hash"] = expr::vocab::vocab_hash();

    for (Parameter* p : m.parameters()) {
        // quantize the live state so resume-from-checkpoint is exact
        ckpt::quantize_f32(p->value);
        c.tensors.push_back({p->name, p->shape, p->value});
        if (!p->m.empty()) {
            ckpt::quantize_f32(p->m);
            ckpt::quantize_f32(p->v);
            c.tensors.push_back({"adam.m/" + p->name, p->shape, p->m});
            c.tensors.push_back({"adam.v/" + p->name, p->shape, p->v});
        }
    }
    ckpt::save_checkpoint(path, c);
}

nlohmann::json ModelIO::load(const std::string& path, Model& m) {
    ckpt::Checkpoint c = ckpt::load_checkpoint(path);
    if (c.header.value("format", "") != "dncl-ckpt")
        throw ModelError("not a dncl model checkpoint: " + path);
    if (c.header.value("vocab_hash", uint64_t(0)) != expr::vocab::vocab_hash())
        throw ModelError("checkpoint vocabulary does not match this build");
    for (Parameter* p : m.parameters()) {
        const ckpt::NamedTensor* t = c.find(p->name);
        if (!t) throw ModelError("checkpoint missing tensor: " + p->name);
        if (!(t->shape == p->shape))
            throw ModelError("checkpoint tensor shape mismatch for " + p->name);
        p->value = t->data;
        if (const ckpt::NamedTensor* tm = c.find("adam.m/" + p->name)) p->m = tm->data;
        if (const ckpt::NamedTensor* tv = c.find("adam.v/" + p->name)) p->v = tv->data;
    }
    return c.header;
}

ModelConfig ModelIO::peek_config(const std::string& path) {
    ckpt::Checkpoint c = ckpt::load_checkpoint(path);
    if (!c.header.contains("model_config"))
        throw ModelError("checkpoint has no model_config header: " + path);
    return ModelConfig::from_json(c.header["model_config"]);
}

} // namespace dncl::model
