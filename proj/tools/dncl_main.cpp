// dncl: corpus generation, two-view contrastive training, prediction,
// benchmark sweeps, feature heatmaps, and the three-model ablation.
#include <CLI11.hpp>

#include "dncl/ablation.hpp"
#include "dncl/benchmark.hpp"
#include "dncl/heatmap.hpp"
#include "dncl/kernels.hpp"
#include "dncl/svg.hpp"
#include "dncl/train.hpp"
#include "dncl/util.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace dncl;

namespace {

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    const int env = util::env_threads();
    return env > 0 ? env : 1;
}

data::PointSet read_points_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open points file: " + path);
    data::PointSet ps;
    std::string line;
    int d = -1;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto cols = util::split(line, ',');
        if (!cols.empty() && cols.back().empty()) cols.pop_back();
        std::vector<double> row;
        bool numeric = true;
        for (const auto& c : cols) {
            try {
                size_t used = 0;
                row.push_back(std::stod(c, &used));
                if (used != c.size()) numeric = false;
            } catch (...) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (ps.y.empty()) continue; // header row
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed row");
        }
        if (row.size() < 2 || row.size() > 3)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": need d feature columns then y (d in {1,2})");
        if (d < 0) d = int(row.size()) - 1;
        if (int(row.size()) - 1 != d)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": ragged row");
        for (int k = 0; k < d; ++k) ps.X.push_back(row[size_t(k)]);
        ps.y.push_back(row.back());
    }
    if (ps.y.empty()) throw std::runtime_error("points file has no data rows: " + path);
    ps.d = d;
    ps.n = int64_t(ps.y.size());
    return ps;
}

expr::ExprPtr find_benchmark_expression(const std::string& name, int* d_out) {
    for (const std::string& suite : bench::suite_names()) {
        for (const bench::SuiteEntry& e : bench::load_suite(suite)) {
            std::string flat = e.name;
            std::erase(flat, '-');
            std::string want = name;
            std::erase(want, '-');
            if (util::lower(flat) == util::lower(want)) {
                *d_out = e.d;
                return e.tree;
            }
        }
    }
    return nullptr;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"DN-CL: noise-robust neural symbolic regression"};
    app.set_config("--config", "", "TOML-style key/value config file; flags win");
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "sweep parallelism (default: THREADS env or 1)");
    std::string kernels;
    app.add_option("--kernels", kernels, "force kernel variant: scalar|avx2|avx512|neon");

    // ---------------- gen ----------------
    auto* gen = app.add_subcommand("gen", "generate a training corpus (JSONL)");
    data::GenConfig gcfg;
    std::string gen_out;
    gen->add_option("--count", gcfg.count, "number of expressions")->required();
    gen->add_option("--dims", gcfg.grammar.dims, "variables per expression (1 or 2)");
    gen->add_option("--seed", gcfg.master_seed, "master seed");
    gen->add_option("--out", gen_out, "output JSONL path")->required();
    gen->add_option("--points", gcfg.points_per_expr, "stored points per expression");
    gen->add_option("--max-depth", gcfg.grammar.max_depth, "tree depth cap");
    gen->add_option("--min-ops", gcfg.grammar.min_ops, "operator count lower bound");
    gen->add_option("--max-ops", gcfg.grammar.max_ops, "operator count upper bound");
    gen->add_option("--y-cap", gcfg.y_cap, "reject expressions with |y| above this");

    // ---------------- train ----------------
    auto* tr = app.add_subcommand("train", "train a model on a corpus");
    std::string tr_corpus, tr_ckpt, tr_metrics = "metrics.csv", tr_resume;
    train::TrainConfig tcfg;
    model::ModelConfig mcfg;
    tr->add_option("--corpus", tr_corpus, "corpus JSONL")->required();
    tr->add_option("--out-ckpt", tr_ckpt, "checkpoint output path")->required();
    tr->add_option("--metrics", tr_metrics, "metrics CSV path");
    tr->add_option("--resume", tr_resume, "resume from checkpoint");
    tr->add_option("--steps", tcfg.steps, "optimization steps");
    tr->add_option("--batch", tcfg.batch_size, "batch size (even)");
    tr->add_option("--lr", tcfg.lr, "Adam learning rate");
    tr->add_option("--warmup", tcfg.warmup_steps, "linear warmup steps");
    tr->add_option("--eta", tcfg.eta_train, "training noise level");
    tr->add_option("--seed", tcfg.seed, "master seed");
    tr->add_option("--val-frac", tcfg.val_frac, "validation fraction (0: validate on train)");
    tr->add_option("--eval-every", tcfg.eval_every, "evaluation cadence (steps)");
    tr->add_option("--patience", tcfg.patience, "early-stop patience (evaluations)");
    tr->add_option("--save-every", tcfg.save_every, "checkpoint cadence (steps)");
    tr->add_option("--hidden", mcfg.hidden, "encoder/decoder width");
    tr->add_option("--heads", mcfg.heads, "attention heads");
    tr->add_option("--enc-layers", mcfg.enc_layers, "encoder ISAB layers");
    tr->add_option("--dec-layers", mcfg.dec_layers, "decoder layers");
    tr->add_option("--inducing", mcfg.n_inducing, "inducing points per ISAB");
    tr->add_option("--out-tokens", mcfg.out_tokens, "feature tokens per set (m)");
    tr->add_option("--proj-dim", mcfg.proj_dim, "projection head output dim");
    tr->add_option("--dropout", mcfg.dropout, "dropout rate");
    tr->add_option("--lambda", mcfg.lambda_co, "contrastive loss weight");
    tr->add_option("--temperature", mcfg.temperature, "InfoNCE temperature");
    tr->add_option("--feature-mode", mcfg.decoder_feature_mode,
                   "decoder feature mode: replace|concat");
    bool sym_nce = false;
    tr->add_flag("--symmetric-infonce", sym_nce, "average both InfoNCE directions");

    // ---------------- predict ----------------
    auto* pr = app.add_subcommand("predict", "predict an expression for a points file");
    std::string pr_ckpt, pr_data;
    int pr_beam = 32;
    uint64_t pr_seed = 1;
    pr->add_option("--ckpt", pr_ckpt, "model checkpoint")->required();
    pr->add_option("--data", pr_data, "CSV with d feature columns then y")->required();
    pr->add_option("--beam", pr_beam, "beam size");
    pr->add_option("--seed", pr_seed, "refinement seed");

    // ---------------- bench ----------------
    auto* bn = app.add_subcommand("bench", "run a benchmark suite sweep");
    std::string bn_ckpt, bn_suite, bn_out = "bench_out";
    bench::BenchConfig bcfg;
    bn->add_option("--ckpt", bn_ckpt, "model checkpoint")->required();
    bn->add_option("--suite", bn_suite, "nguyen|constant|r|koza|livermore|keijzer|feynman")
        ->required();
    bn->add_option("--etas", bcfg.etas, "noise levels (descending)");
    bn->add_option("--repeats", bcfg.repeats, "independent runs per expression");
    bn->add_option("--beam", bcfg.beam, "beam size");
    bn->add_option("--seed", bcfg.seed, "sweep seed");
    bn->add_option("--out", bn_out, "output directory");

    // ---------------- heatmap ----------------
    auto* hm = app.add_subcommand("heatmap", "feature-similarity heatmap for one expression");
    std::string hm_ckpt, hm_expr, hm_out = "heatmap_out";
    double hm_eta = 0.1;
    int hm_dims = 1, hm_sets = 10;
    int64_t hm_points = 100;
    uint64_t hm_seed = 1;
    hm->add_option("--ckpt", hm_ckpt, "model checkpoint")->required();
    hm->add_option("--expr", hm_expr, "benchmark name (e.g. Keijzer15) or expression text")
        ->required();
    hm->add_option("--eta", hm_eta, "noise level of the noisy datasets");
    hm->add_option("--dims", hm_dims, "dimension when --expr is literal text");
    hm->add_option("--datasets", hm_sets, "datasets per condition");
    hm->add_option("--points", hm_points, "points per dataset");
    hm->add_option("--seed", hm_seed, "sampling seed");
    hm->add_option("--out", hm_out, "output directory");

    // ---------------- ablation ----------------
    auto* ab = app.add_subcommand("ablation", "clean-model / clean-model-1 / ours comparison");
    std::string ab_corpus, ab_out = "ablation_out";
    bench::AblationConfig acfg;
    ab->add_option("--corpus", ab_corpus, "corpus JSONL")->required();
    ab->add_option("--etas", acfg.etas, "evaluation noise levels (descending)");
    ab->add_option("--out", ab_out, "output directory")->required();
    ab->add_option("--steps", acfg.train.steps, "training steps per variant");
    ab->add_option("--batch", acfg.train.batch_size, "batch size");
    ab->add_option("--lr", acfg.train.lr, "learning rate");
    ab->add_option("--seed", acfg.seed, "master seed");
    ab->add_option("--beam", acfg.beam, "beam size at evaluation");
    ab->add_option("--heldout-frac", acfg.train.val_frac, "held-out fraction");
    ab->add_option("--hidden", acfg.model.hidden, "model width");
    ab->add_option("--heads", acfg.model.heads, "attention heads");
    ab->add_option("--enc-layers", acfg.model.enc_layers, "encoder layers");
    ab->add_option("--dec-layers", acfg.model.dec_layers, "decoder layers");
    ab->add_option("--inducing", acfg.model.n_inducing, "inducing points");
    ab->add_option("--out-tokens", acfg.model.out_tokens, "feature tokens per set");
    ab->add_option("--patience", acfg.train.patience, "early-stop patience");

    CLI11_PARSE(app, argc, argv);

    if (!kernels.empty() && !kern::set_active(kernels)) {
        std::cerr << "kernel variant '" << kernels << "' not available on this machine\n";
        return 1;
    }
    const int n_threads = resolve_threads(threads);

    try {
        if (*gen) {
            if (gcfg.count < 1) throw std::runtime_error("--count must be >= 1");
            data::generate_corpus(gcfg, gen_out);
            std::cout << "wrote " << gcfg.count << " expressions to " << gen_out << "\n";
        } else if (*tr) {
            mcfg.symmetric_infonce = sym_nce;
            const std::string inputs_hash = util::git_blob_sha1_file(tr_corpus);
            data::Corpus corpus = data::load_corpus(tr_corpus);

            int64_t start_step = 0;
            std::unique_ptr<model::Model> m;
            if (!tr_resume.empty()) {
                model::ModelConfig loaded = model::ModelIO::peek_config(tr_resume);
                m = std::make_unique<model::Model>(loaded, tcfg.seed);
                nlohmann::json header = model::ModelIO::load(tr_resume, *m);
                start_step = header.value("step", int64_t(0));
                std::cout << "resuming from " << tr_resume << " at step " << start_step << "\n";
            } else {
                m = std::make_unique<model::Model>(mcfg, tcfg.seed);
            }
            train::TrainResult r =
                train::train_model(*m, corpus, tcfg, tr_ckpt, tr_metrics, start_step, inputs_hash);
            std::cout << "trained " << r.steps_run << " steps; val_loss "
                      << util::fmt_g(r.final_val_loss, 6) << ", val_acc "
                      << util::fmt_g(r.final_val_acc, 6)
                      << (r.early_stopped ? " (early stop)" : "") << "\n";
        } else if (*pr) {
            data::PointSet ps = read_points_csv(pr_data);
            model::ModelConfig loaded = model::ModelIO::peek_config(pr_ckpt);
            model::Model m(loaded, 1);
            model::ModelIO::load(pr_ckpt, m);
            bench::Prediction p = bench::predict_expression(m, ps, pr_beam, pr_seed);
            std::cout << "expression: " << expr::to_string(*p.tree) << "\n";
            std::cout << "r2_fit: " << util::fmt_g(p.r2_fit, 10) << "\n";
            std::cout << "inference_ms: " << util::fmt_g(p.inference_ms, 6) << "\n";
        } else if (*bn) {
            bcfg.threads = n_threads;
            model::ModelConfig loaded = model::ModelIO::peek_config(bn_ckpt);
            model::Model m(loaded, 1);
            model::ModelIO::load(bn_ckpt, m);
            fs::create_directories(bn_out);
            bench::BenchReport report = bench::run_benchmark(m, bn_suite, bcfg);
            nlohmann::json run_cfg = {{"suite", bn_suite},
                                      {"etas", bcfg.etas},
                                      {"repeats", bcfg.repeats},
                                      {"beam", bcfg.beam},
                                      {"seed", bcfg.seed},
                                      {"ckpt_sha1", util::git_blob_sha1_file(bn_ckpt)}};
            bench::write_report_csv(report, bn_out + "/records.csv", run_cfg);
            nlohmann::json agg = {{"run_config", run_cfg}, {"aggregates", report.aggregates}};
            util::write_file(bn_out + "/aggregates.json", agg.dump(2) + "\n");
            std::cout << report.aggregates.dump(2) << "\n";
            int64_t failures = 0;
            for (const auto& r : report.records) failures += r.failed ? 1 : 0;
            if (failures > 0) {
                std::cerr << failures << " record-level failures (see records.csv)\n";
                return 1;
            }
        } else if (*hm) {
            model::ModelConfig loaded = model::ModelIO::peek_config(hm_ckpt);
            model::Model m(loaded, 1);
            model::ModelIO::load(hm_ckpt, m);
            int d = hm_dims;
            expr::ExprPtr tree = find_benchmark_expression(hm_expr, &d);
            if (!tree) tree = expr::parse(hm_expr, d);
            fs::create_directories(hm_out);
            bench::HeatmapResult h =
                bench::feature_heatmap(m, *tree, d, hm_eta, hm_sets, hm_points, hm_seed);
            bench::write_heatmap_csv(h, hm_out + "/heatmap.csv");
            svg::write_heatmap(h.matrix, 2 * h.n, "cosine similarity (noisy | clean)",
                               hm_out + "/heatmap.svg");
            std::cout << "within_noisy " << util::fmt_g(h.within_noisy, 6) << "\n"
                      << "within_clean " << util::fmt_g(h.within_clean, 6) << "\n"
                      << "cross " << util::fmt_g(h.cross, 6) << "\n";
        } else if (*ab) {
            acfg.threads = n_threads;
            acfg.train.seed = acfg.seed;
            data::Corpus corpus = data::load_corpus(ab_corpus);
            bench::AblationResult r = bench::run_ablation(corpus, acfg, ab_out);
            std::cout << r.summary.dump(2) << "\n";
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
