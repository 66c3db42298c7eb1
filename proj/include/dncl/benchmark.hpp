#pragma once

#include <nlohmann/json.hpp>

#include "dncl/beam.hpp"
#include "dncl/metrics.hpp"
#include "dncl/model.hpp"
#include "dncl/refine.hpp"

namespace dncl::bench {

// A public benchmark expression (Appendix-A style corpora shipped under
// assets/corpora/, one "name<TAB>expression<TAB>d[<TAB>lo:hi]" per line).
struct SuiteEntry {
    std::string name;
    std::string text;
    expr::ExprPtr tree;
    int d = 1;
    expr::Domain domain;
};

std::vector<SuiteEntry> load_suite(const std::string& suite);
std::vector<std::string> suite_names();

struct BenchRecord {
    std::string dataset;
    std::string expr_id;
    double eta = 0.0;
    int run_index = 0;
    R2 r2_fit, r2_test;
    int complexity_raw = 0;
    int complexity_simplified = 0;
    bool recovered = false;
    double inference_ms = 0.0;
    std::string pred_expr;
    bool failed = false;
    std::string error;
};

struct BenchReport {
    std::vector<BenchRecord> records;
    nlohmann::json aggregates; // recomputable from the records
};

struct BenchConfig {
    std::vector<double> etas = {0.1, 0.01, 0.001, 0.0}; // descending, per protocol
    int repeats = 10;
    int beam = 32;
    int64_t n_fit_uni = 100;
    int64_t n_fit_bi = 200;
    int64_t n_test = 500;
    uint64_t seed = 1;
    int threads = 1;
};

// Full inference for one fitting set: beam search, per-beam constant
// refinement, best-by-R2 selection.
struct Prediction {
    expr::ExprPtr tree;
    double r2_fit = 0.0;
    double inference_ms = 0.0;
    int beam_rank = -1;
};
Prediction predict_expression(model::Model& m, const data::PointSet& fit, int beam,
                              uint64_t seed);

// expression x eta x run sweep; per-record failures are recorded, never
// abort the sweep. Fit on the (possibly noisy) sample, score R2 on a fresh
// clean sample from the same domain.
BenchReport run_benchmark(model::Model& m, const std::string& suite, const BenchConfig& cfg);

nlohmann::json aggregates_from_records(const std::vector<BenchRecord>& records);
void write_report_csv(const BenchReport& report, const std::string& path,
                      const nlohmann::json& run_config);
std::vector<BenchRecord> read_report_csv(const std::string& path);

} // namespace dncl::bench
