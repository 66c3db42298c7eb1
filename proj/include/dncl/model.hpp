#pragma once

#include <nlohmann/json.hpp>

#include <memory>
#include <string>
#include <vector>

#include "dncl/data.hpp"
#include "dncl/expr.hpp"
#include "dncl/tensor.hpp"

namespace dncl::model {

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Desk-scale defaults (the paper-scale table stays reachable through config).
struct ModelConfig {
    int heads = 4;
    int enc_layers = 2;
    int dec_layers = 2;
    int hidden = 128;
    double dropout = 0.1;
    int n_inducing = 16;
    int out_tokens = 8; // m: learned seed tokens per set feature
    int proj_dim = 64;
    int ffn_mult = 2;
    int max_expr_len = 50;
    int max_points = 512;
    int input_dim = 3; // (x1, x2, y); x2 is zero for d=1
    double lambda_co = 0.1;
    double temperature = 0.07;
    double label_smoothing = 0.1;
    double const_loss_weight = 1.0;
    bool symmetric_infonce = false;
    std::string decoder_feature_mode = "replace"; // "replace" | "concat"

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    uint64_t hash() const;
};

// Parameter-sharing encoder (Set Transformer: ISAB blocks + PMA pooling),
// projection head, and autoregressive decoder over the expression vocabulary
// with a mantissa regression head.
class Model {
public:
    Model(const ModelConfig& cfg, uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    std::vector<tensor::Parameter*> parameters();
    int64_t parameter_count();

    struct Ctx {
        tensor::Tape& tape;
        bool training = false;
        Rng* rng = nullptr; // dropout stream; required when training
    };

    // Point sets -> (B, m, hidden). Permutation-invariant by construction:
    // no positional information enters the encoder.
    tensor::T encode(Ctx ctx, const std::vector<const data::PointSet*>& sets);

    // (B, m, hidden) -> l2-normalized (B, proj_dim).
    tensor::T project(Ctx ctx, tensor::T h);

    struct DecoderOut {
        tensor::T logits;   // (B, L, vocab)
        tensor::T mantissa; // (B, L, 1), tanh-bounded
    };
    // Teacher-forced decode. in_ids/in_mant are (B*L) row-major with BOS at
    // position 0 of every row.
    DecoderOut decode(Ctx ctx, tensor::T feats, const std::vector<int>& in_ids,
                      const std::vector<double>& in_mant, int64_t B, int64_t L);

    // Eq. 3 with in-batch negatives. Rows of q/k must be unit-norm; B >= 2.
    tensor::T info_nce(Ctx ctx, tensor::T q, tensor::T k, double temperature,
                       bool symmetric);

    struct SeqLossParts {
        tensor::T ce;       // symbol CE + constant regression term
        tensor::T symbol_ce;
        tensor::T const_mse;
    };
    // logits/mantissa from decode(); labels give targets, PAD excluded.
    SeqLossParts cross_entropy_seq(Ctx ctx, const DecoderOut& out,
                                   const std::vector<expr::TokenSequence>& labels,
                                   int64_t L);

    // total = ce + lambda * co, exactly.
    tensor::T total_loss(Ctx ctx, tensor::T ce, tensor::T co, double lambda);

    // Teacher-forcing target layout shared by training and evaluation.
    struct SeqBatch {
        std::vector<int> in_ids;
        std::vector<double> in_mant;
        std::vector<int> targets;
        std::vector<double> weights;       // 1 on real tokens, 0 on pad
        std::vector<double> mant_targets;
        std::vector<double> mant_mask;     // 1 where target is a C token
        int64_t L = 0;
    };
    SeqBatch make_seq_batch(const std::vector<expr::TokenSequence>& labels) const;

    // Token accuracy of argmax(logits) against the batch targets.
    static double token_accuracy(const std::vector<double>& logits_val,
                                 const SeqBatch& sb, int64_t B);

    tensor::Parameter* find_param(const std::string& name);

private:
    friend class ModelIO;

    struct Linear {
        tensor::Parameter* W = nullptr;
        tensor::Parameter* b = nullptr;
    };
    struct Attention {
        Linear q, k, v, o;
    };
    struct MAB { // multihead attention block + rFF, post-norm
        Attention attn;
        Linear f1, f2;
        tensor::Parameter *ln1_g, *ln1_b, *ln2_g, *ln2_b;
    };
    struct DecLayer {
        Attention self_attn, cross_attn;
        Linear f1, f2;
        tensor::Parameter *ln1_g, *ln1_b, *ln2_g, *ln2_b, *ln3_g, *ln3_b;
    };

    tensor::Parameter* make_param(const std::string& name, tensor::Shape s, Rng& rng,
                                  double scale);
    tensor::Parameter* make_ln_gamma(const std::string& name, Rng& rng);
    Linear make_linear(const std::string& name, int64_t in, int64_t out, Rng& rng);
    Attention make_attention(const std::string& name, Rng& rng);
    MAB make_mab(const std::string& name, Rng& rng);

    tensor::T apply_linear(Ctx ctx, const Linear& l, tensor::T x);
    tensor::T multihead(Ctx ctx, const Attention& at, tensor::T Q, tensor::T K,
                        const std::vector<uint8_t>* mask);
    tensor::T mab(Ctx ctx, const MAB& m, tensor::T Q, tensor::T K,
                  const std::vector<uint8_t>* mask);

    ModelConfig cfg_;
    std::vector<std::unique_ptr<tensor::Parameter>> store_;

    Linear in_proj_;
    tensor::Parameter* inducing_;
    tensor::Parameter* seeds_;
    std::vector<MAB> isab_lower_, isab_upper_; // per encoder layer
    MAB pool_;
    Linear proj1_, proj2_;
    tensor::Parameter* tok_emb_;
    Linear mant_in_;
    std::vector<DecLayer> dec_layers_;
    Linear out_sym_, out_mant_;
    std::vector<double> posenc_; // (max_expr_len, hidden) sinusoidal, fixed
};

// Checkpoint glue: all parameters plus Adam state under "adam.m/" and
// "adam.v/" names, the step count and configs in the header.
class ModelIO {
public:
    static void save(const std::string& path, Model& m, const nlohmann::json& extra_header,
                     int64_t step);
    // Restores parameters (and Adam state when present); returns the header.
    static nlohmann::json load(const std::string& path, Model& m);
    static ModelConfig peek_config(const std::string& path);
};

} // namespace dncl::model
