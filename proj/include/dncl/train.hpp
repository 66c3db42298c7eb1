#pragma once

#include <nlohmann/json.hpp>

#include <string>

#include "dncl/data.hpp"
#include "dncl/model.hpp"

namespace dncl::train {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    int64_t steps = 2000;
    int64_t batch_size = 32;
    double lr = 5e-4;
    int64_t warmup_steps = 100;
    double eta_train = 0.1; // noise level of the t2 view
    double grad_clip = 1.0; // 0 disables
    int64_t eval_every = 50;
    double val_frac = 0.1; // 0: validate on the training split (overfit runs)
    int64_t n_sub_uni = 100;
    int64_t n_sub_bi = 200;
    uint64_t seed = 1;
    int64_t patience = 10;    // evaluations without improvement before stopping
    double min_delta = 1e-4;  // improvement threshold on validation loss
    int64_t save_every = 0;   // additionally checkpoint every k steps

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainResult {
    int64_t steps_run = 0;
    double final_val_loss = 0.0;
    double final_val_acc = 0.0;
    bool early_stopped = false;
};

// End-to-end training: two-view batches, InfoNCE + sequence CE, Adam with
// warmup and global-norm clipping. Per-step RNG streams derive from
// (seed, global step), so resuming from a checkpoint replays the exact run.
// Throws TrainError on divergence (non-finite loss).
TrainResult train_model(model::Model& m, const data::Corpus& corpus, const TrainConfig& cfg,
                        const std::string& ckpt_path, const std::string& metrics_path,
                        int64_t start_step = 0, const std::string& inputs_hash = "");

// Teacher-forced validation on clean features: (ce loss, token accuracy).
std::pair<double, double> evaluate_split(model::Model& m, const data::Corpus& corpus,
                                         const std::vector<int64_t>& indices, int64_t n_sub,
                                         int64_t batch_size, uint64_t seed);

// Deterministic train/validation index split.
void split_corpus(const data::Corpus& corpus, double val_frac, uint64_t seed,
                  std::vector<int64_t>& train_idx, std::vector<int64_t>& val_idx);

} // namespace dncl::train
