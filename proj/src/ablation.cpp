#include "dncl/ablation.hpp"

#include "dncl/svg.hpp"
#include "dncl/util.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <thread>

namespace dncl::bench {

namespace {

struct Variant {
    std::string name;
    double eta_train;
    double lambda;
};

double clip_r2(const R2& r) {
    if (!r.defined) return -1.0;
    return std::clamp(r.value, -1.0, 1.0);
}

struct GapStats {
    double mean_gap = 0.0;
    double median_gap = 0.0;
    int64_t wins = 0, losses = 0, ties = 0;
    double p_forward = 1.0, p_reverse = 1.0;
    std::string verdict; // confirmed | inconclusive | reversed
};

GapStats gap_stats(const std::vector<double>& a, const std::vector<double>& b) {
    GapStats g;
    std::vector<double> gaps;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        gaps.push_back(d);
        if (d > 0) ++g.wins;
        else if (d < 0) ++g.losses;
        else ++g.ties;
    }
    for (double d : gaps) g.mean_gap += d;
    g.mean_gap /= std::max<size_t>(1, gaps.size());
    std::sort(gaps.begin(), gaps.end());
    if (!gaps.empty()) g.median_gap = gaps[gaps.size() / 2];
    g.p_forward = sign_test_p(g.wins, g.losses);
    g.p_reverse = sign_test_p(g.losses, g.wins);
    if (g.wins > g.losses && g.p_forward < 0.05) g.verdict = "confirmed";
    else if (g.losses > g.wins && g.p_reverse < 0.05) g.verdict = "reversed";
    else g.verdict = "inconclusive";
    return g;
}

} // namespace

double clipped_mean_r2(const std::vector<AblationRecord>& records, const std::string& variant,
                       double eta) {
    double sum = 0.0;
    int64_t n = 0;
    for (const AblationRecord& r : records)
        if (r.variant == variant && r.eta == eta) {
            sum += clip_r2(r.r2_test);
            ++n;
        }
    return n == 0 ? 0.0 : sum / double(n);
}

AblationResult run_ablation(const data::Corpus& corpus, const AblationConfig& cfg,
                            const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    const std::vector<Variant> variants = {
        {"clean-model", 0.0, 0.0},
        {"clean-model-1", cfg.train_eta, 0.0},
        {"ours", cfg.train_eta, cfg.lambda},
    };

    // the held-out expressions are this split's validation side, identical
    // across variants because seed and corpus are
    std::vector<int64_t> train_idx, heldout_idx;
    train::split_corpus(corpus, cfg.train.val_frac, cfg.train.seed, train_idx, heldout_idx);

    AblationResult result;

    // --- train the three variants -----------------------------------------
    std::vector<std::unique_ptr<model::Model>> models;
    for (const Variant& v : variants) {
        model::ModelConfig mc = cfg.model;
        mc.lambda_co = v.lambda;
        auto m = std::make_unique<model::Model>(mc, cfg.seed);

        train::TrainConfig tc = cfg.train;
        tc.eta_train = v.eta_train;

        const std::string ckpt = out_dir + "/" + v.name + ".ckpt";
        const std::string metrics = out_dir + "/" + v.name + "_metrics.csv";
        train::train_model(*m, corpus, tc, ckpt, metrics);
        result.ckpts[v.name] = ckpt;
        result.artifacts.push_back(ckpt);
        result.artifacts.push_back(metrics);
        models.push_back(std::move(m));
    }

    // --- evaluate on the held-out split ------------------------------------
    const int64_t n_sub = corpus.dims == 1 ? cfg.train.n_sub_uni : cfg.train.n_sub_bi;

    struct Task {
        size_t variant;
        double eta;
        int64_t entry;
        size_t slot;
    };
    std::vector<Task> tasks;
    size_t slot = 0;
    for (size_t vi = 0; vi < variants.size(); ++vi)
        for (double eta : cfg.etas)
            for (int64_t idx : heldout_idx) tasks.push_back(Task{vi, eta, idx, slot++});
    result.records.assign(tasks.size(), AblationRecord{});

    auto run_task = [&](const Task& t) {
        const data::CorpusEntry& e = corpus.entries[size_t(t.entry)];
        AblationRecord rec;
        rec.variant = variants[t.variant].name;
        rec.expr_id = std::to_string(e.id);
        rec.eta = t.eta;
        const uint64_t tseed = Rng::mix(cfg.seed ^ uint64_t(e.id) ^
                                        uint64_t(std::llround(t.eta * 1e6)));
        try {
            Rng rng(tseed);
            // fitting sample from the stored points, then fresh noise
            std::vector<int64_t> order(static_cast<size_t>(e.n_points));
            for (int64_t k = 0; k < e.n_points; ++k) order[size_t(k)] = k;
            const int64_t take = std::min(n_sub, e.n_points);
            for (int64_t k = 0; k < take; ++k) {
                const int64_t j = k + int64_t(rng.uniform_int(uint64_t(e.n_points - k)));
                std::swap(order[size_t(k)], order[size_t(j)]);
            }
            data::PointSet clean;
            clean.n = take;
            clean.d = e.d;
            for (int64_t k = 0; k < take; ++k) {
                const int64_t r = order[size_t(k)];
                for (int dd = 0; dd < e.d; ++dd)
                    clean.X.push_back(e.X[size_t(r) * size_t(e.d) + size_t(dd)]);
                clean.y.push_back(e.y[size_t(r)]);
            }
            data::PointSet noisy = data::add_noise(clean, t.eta, rng);
            rec.gold = r_squared(noisy.y, clean.y);

            Prediction p =
                predict_expression(*models[t.variant], noisy, cfg.beam, tseed);
            rec.r2_fit = {p.r2_fit, true};

            expr::ExprPtr truth = expr::parse(e.expr_text, e.d);
            data::PointSet test = data::sample_points(
                *truth, expr::default_domain(*truth, e.d), cfg.n_test, e.d, rng);
            expr::EvalResult ev = expr::evaluate(*p.tree, test.X.data(), test.n, test.d);
            std::vector<double> yv, pv;
            for (int64_t i = 0; i < test.n; ++i)
                if (ev.valid[size_t(i)]) {
                    yv.push_back(test.y[size_t(i)]);
                    pv.push_back(ev.y[size_t(i)]);
                }
            if (int64_t(yv.size()) >= std::max<int64_t>(2, int64_t(0.9 * double(test.n))))
                rec.r2_test = r_squared(yv, pv);
            rec.recovered = expr::equivalent(*p.tree, *truth, e.d);
        } catch (const std::exception&) {
            rec.failed = true;
        }
        result.records[t.slot] = rec;
    };

    const int threads = std::max(1, cfg.threads);
    if (threads == 1) {
        for (const Task& t : tasks) run_task(t);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w)
            pool.emplace_back([&] {
                while (true) {
                    const size_t i = next.fetch_add(1);
                    if (i >= tasks.size()) return;
                    run_task(tasks[i]);
                }
            });
        for (auto& th : pool) th.join();
    }

    // --- aggregate ----------------------------------------------------------
    nlohmann::json curves = nlohmann::json::array();
    std::map<std::string, std::vector<double>> curve_values;
    std::vector<double> gold_curve;
    for (double eta : cfg.etas) {
        double gold = 0.0;
        int64_t n = 0;
        for (const AblationRecord& r : result.records)
            if (r.eta == eta && r.variant == variants[0].name && r.gold.defined) {
                gold += std::clamp(r.gold.value, -1.0, 1.0);
                ++n;
            }
        gold_curve.push_back(n ? gold / double(n) : 1.0);
        for (const Variant& v : variants) {
            const double mean = clipped_mean_r2(result.records, v.name, eta);
            curve_values[v.name].push_back(mean);
            curves.push_back({{"variant", v.name}, {"eta", eta}, {"mean_r2", mean}});
        }
    }

    // paired comparisons at the comparison eta
    auto per_expr = [&](const std::string& variant) {
        std::vector<std::pair<std::string, double>> rows;
        for (const AblationRecord& r : result.records)
            if (r.variant == variant && r.eta == cfg.compare_eta)
                rows.emplace_back(r.expr_id, clip_r2(r.r2_test));
        std::sort(rows.begin(), rows.end());
        std::vector<double> vals;
        for (auto& [k, v] : rows) vals.push_back(v);
        return vals;
    };
    const std::vector<double> ours_v = per_expr("ours");
    const std::vector<double> cm1_v = per_expr("clean-model-1");
    const std::vector<double> clean_v = per_expr("clean-model");

    const GapStats g1 = gap_stats(ours_v, cm1_v);
    const GapStats g2 = gap_stats(cm1_v, clean_v);

    auto gap_json = [](const char* name, const GapStats& g) {
        return nlohmann::json{{"pair", name},
                              {"mean_gap", g.mean_gap},
                              {"median_gap", g.median_gap},
                              {"wins", g.wins},
                              {"losses", g.losses},
                              {"ties", g.ties},
                              {"p_one_sided", g.p_forward},
                              {"p_reverse", g.p_reverse},
                              {"verdict", g.verdict}};
    };

    result.summary = {
        {"compare_eta", cfg.compare_eta},
        {"heldout_expressions", heldout_idx.size()},
        {"etas", cfg.etas},
        {"curves", curves},
        {"gaps",
         {gap_json("ours_vs_clean-model-1", g1), gap_json("clean-model-1_vs_clean-model", g2)}},
        {"mean_r2_at_compare_eta",
         {{"ours", clipped_mean_r2(result.records, "ours", cfg.compare_eta)},
          {"clean-model-1", clipped_mean_r2(result.records, "clean-model-1", cfg.compare_eta)},
          {"clean-model", clipped_mean_r2(result.records, "clean-model", cfg.compare_eta)}}}};

    // --- artifacts -----------------------------------------------------------
    std::ostringstream rec_csv;
    rec_csv << "variant,expr_id,eta,r2_test,r2_fit,gold,recovered,failed\n";
    for (const AblationRecord& r : result.records)
        rec_csv << r.variant << ',' << r.expr_id << ',' << util::fmt_g(r.eta, 10) << ','
                << (r.r2_test.defined ? util::fmt_g(r.r2_test.value, 10) : "") << ','
                << (r.r2_fit.defined ? util::fmt_g(r.r2_fit.value, 10) : "") << ','
                << (r.gold.defined ? util::fmt_g(r.gold.value, 10) : "") << ','
                << (r.recovered ? 1 : 0) << ',' << (r.failed ? 1 : 0) << "\n";
    const std::string rec_path = out_dir + "/ablation_records.csv";
    util::write_file(rec_path, rec_csv.str());
    result.artifacts.push_back(rec_path);

    std::ostringstream curve_csv;
    curve_csv << "eta,gold,clean-model,clean-model-1,ours\n";
    for (size_t i = 0; i < cfg.etas.size(); ++i)
        curve_csv << util::fmt_g(cfg.etas[i], 10) << ',' << util::fmt_g(gold_curve[i], 10) << ','
                  << util::fmt_g(curve_values["clean-model"][i], 10) << ','
                  << util::fmt_g(curve_values["clean-model-1"][i], 10) << ','
                  << util::fmt_g(curve_values["ours"][i], 10) << "\n";
    const std::string curve_path = out_dir + "/ablation_curves.csv";
    util::write_file(curve_path, curve_csv.str());
    result.artifacts.push_back(curve_path);

    std::vector<std::string> labels;
    for (double eta : cfg.etas) labels.push_back(util::fmt_g(eta, 4));
    std::vector<svg::Series> series = {
        {"ground truth", "#444444", gold_curve, true},
        {"clean-model", "#1f77b4", curve_values["clean-model"], false},
        {"clean-model-1", "#ff7f0e", curve_values["clean-model-1"], false},
        {"ours", "#d62728", curve_values["ours"], false},
    };
    const std::string svg_path = out_dir + "/ablation_curves.svg";
    svg::write_curves(labels, series, "Mean R2 vs noise level (held-out)", "mean R2", svg_path);
    result.artifacts.push_back(svg_path);

    const std::string summary_path = out_dir + "/ablation_summary.json";
    util::write_file(summary_path, result.summary.dump(2) + "\n");
    result.artifacts.push_back(summary_path);

    return result;
}

} // namespace dncl::bench
