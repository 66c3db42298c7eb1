#pragma once

#include "dncl/benchmark.hpp"
#include "dncl/train.hpp"

namespace dncl::bench {

// Three-way component study: identical corpus, seeds and schedule, varying
// only the training noise and the contrastive weight:
//   clean-model   : eta_train = 0,   lambda = 0
//   clean-model-1 : eta_train = 0.1, lambda = 0
//   ours          : eta_train = 0.1, lambda = 0.1
// Evaluated on held-out expressions across noise levels including an
// extrapolation level the training never saw (0.2 by default).
struct AblationConfig {
    std::vector<double> etas = {0.2, 0.1, 0.01, 0.001, 0.0}; // descending
    double compare_eta = 0.1; // where the ordering + sign tests run
    int beam = 32;
    double train_eta = 0.1;
    double lambda = 0.1;
    int64_t n_test = 500;
    model::ModelConfig model;
    train::TrainConfig train; // val_frac carves out the held-out expressions
    uint64_t seed = 1;
    int threads = 1;
};

struct AblationRecord {
    std::string variant;
    std::string expr_id;
    double eta = 0.0;
    R2 r2_test;   // raw
    R2 r2_fit;
    R2 gold;      // truth scored on the noisy fitting sample
    bool recovered = false;
    bool failed = false;
};

struct AblationResult {
    std::vector<AblationRecord> records;
    nlohmann::json summary;                      // gaps, p-values, verdicts
    std::map<std::string, std::string> ckpts;    // variant -> checkpoint path
    std::vector<std::string> artifacts;
};

AblationResult run_ablation(const data::Corpus& corpus, const AblationConfig& cfg,
                            const std::string& out_dir);

// Mean of R2 clipped to [-1, 1]; undefined scores count as -1 (a predictor
// that is invalid over the domain is not better than the mean predictor).
double clipped_mean_r2(const std::vector<AblationRecord>& records, const std::string& variant,
                       double eta);

} // namespace dncl::bench
