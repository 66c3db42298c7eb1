#include "dncl/benchmark.hpp"

#include "dncl/util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <atomic>
#include <thread>

namespace dncl::bench {

namespace {

std::string asset_dir() {
    if (const char* env = std::getenv("DNCL_ASSETS")) return env;
#ifdef DNCL_ASSET_DIR
    return DNCL_ASSET_DIR;
#else
    return "assets";
#endif
}

} // namespace

std::vector<std::string> suite_names() {
    return {"nguyen", "constant", "r", "koza", "livermore", "keijzer", "feynman"};
}

std::vector<SuiteEntry> load_suite(const std::string& suite) {
    const std::string path = asset_dir() + "/corpora/" + util::lower(suite) + ".tsv";
    std::ifstream in(path);
    if (!in) throw BenchError("unknown suite '" + suite + "' (no file " + path + ")");
    std::vector<SuiteEntry> entries;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto cols = util::split(line, '\t');
        if (cols.size() < 3)
            throw BenchError(path + ":" + std::to_string(lineno) + ": need name, expression, d");
        SuiteEntry e;
        e.name = cols[0];
        e.text = cols[1];
        e.d = std::stoi(cols[2]);
        e.tree = expr::parse(e.text, e.d);
        e.domain = expr::default_domain(*e.tree, e.d);
        if (cols.size() >= 4 && !cols[3].empty()) {
            const auto lh = util::split(cols[3], ':');
            if (lh.size() != 2)
                throw BenchError(path + ":" + std::to_string(lineno) + ": domain must be lo:hi");
            for (int k = 0; k < e.d; ++k) {
                e.domain.lo[k] = std::stod(lh[0]);
                e.domain.hi[k] = std::stod(lh[1]);
            }
        }
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw BenchError("suite file is empty: " + path);
    return entries;
}

Prediction predict_expression(model::Model& m, const data::PointSet& fit, int beam,
                              uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<infer::Beam> beams = infer::beam_search(m, fit, beam, fit.d);
    std::vector<expr::TokenSequence> seqs;
    seqs.reserve(beams.size());
    for (auto& b : beams) seqs.push_back(std::move(b.tokens));
    fit::Selection sel = fit::select_best(seqs, fit, seed);
    const auto t1 = std::chrono::steady_clock::now();

    Prediction p;
    p.tree = sel.tree;
    p.r2_fit = sel.r2_fit;
    p.beam_rank = sel.beam_rank;
    p.inference_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    return p;
}

namespace {

R2 scored_on_clean(const expr::Expr& pred, const data::PointSet& test) {
    expr::EvalResult ev = expr::evaluate(pred, test.X.data(), test.n, test.d);
    std::vector<double> yv, pv;
    for (int64_t i = 0; i < test.n; ++i)
        if (ev.valid[size_t(i)]) {
            yv.push_back(test.y[size_t(i)]);
            pv.push_back(ev.y[size_t(i)]);
        }
    // a prediction invalid on most of the domain earns an undefined score
    if (int64_t(yv.size()) < std::max<int64_t>(2, int64_t(0.9 * double(test.n)))) return {0.0, false};
    return r_squared(yv, pv);
}

struct Task {
    const SuiteEntry* entry;
    double eta;
    int run;
    size_t slot;
};

} // namespace

BenchReport run_benchmark(model::Model& m, const std::string& suite, const BenchConfig& cfg) {
    const std::vector<SuiteEntry> entries = load_suite(suite);

    std::vector<Task> tasks;
    size_t slot = 0;
    for (const SuiteEntry& e : entries)
        for (double eta : cfg.etas)
            for (int run = 0; run < cfg.repeats; ++run)
                tasks.push_back(Task{&e, eta, run, slot++});

    BenchReport report;
    report.records.assign(tasks.size(), BenchRecord{});

    auto run_task = [&](const Task& t) {
        const SuiteEntry& e = *t.entry;
        BenchRecord rec;
        rec.dataset = suite;
        rec.expr_id = e.name;
        rec.eta = t.eta;
        rec.run_index = t.run;
        const uint64_t task_seed =
            Rng::mix(cfg.seed ^ util::fnv1a(e.name) ^ (uint64_t(t.run) << 32) ^
                               uint64_t(std::llround(t.eta * 1e6)));
        try {
            Rng rng(task_seed);
            const int64_t n_fit = e.d == 1 ? cfg.n_fit_uni : cfg.n_fit_bi;
            data::PointSet clean = data::sample_points(*e.tree, e.domain, n_fit, e.d, rng);
            data::PointSet noisy = data::add_noise(clean, t.eta, rng);
            Prediction p = predict_expression(m, noisy, cfg.beam, task_seed);

            data::PointSet test = data::sample_points(*e.tree, e.domain, cfg.n_test, e.d, rng);
            rec.r2_fit = {p.r2_fit, true};
            rec.r2_test = scored_on_clean(*p.tree, test);
            rec.complexity_raw = expr::complexity(*p.tree, false);
            rec.complexity_simplified = expr::complexity(*p.tree, true);
            rec.recovered = expr::equivalent(*p.tree, *e.tree, e.d);
            rec.inference_ms = p.inference_ms;
            rec.pred_expr = expr::to_string(*p.tree);
        } catch (const std::exception& ex) {
            rec.failed = true;
            rec.error = ex.what();
        }
        report.records[t.slot] = std::move(rec);
    };

    const int threads = std::max(1, cfg.threads);
    if (threads == 1) {
        for (const Task& t : tasks) run_task(t);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
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

    report.aggregates = aggregates_from_records(report.records);
    return report;
}

nlohmann::json aggregates_from_records(const std::vector<BenchRecord>& records) {
    struct Cell {
        std::vector<double> r2s;
        std::map<std::string, double> best_per_expr;
        int64_t undefined = 0, failures = 0, recovered = 0, total = 0;
    };
    std::map<std::string, std::map<double, Cell>> cells; // dataset -> eta -> cell
    for (const BenchRecord& r : records) {
        Cell& c = cells[r.dataset][r.eta];
        ++c.total;
        if (r.failed) {
            ++c.failures;
            continue;
        }
        if (!r.r2_test.defined) {
            ++c.undefined;
        } else {
            c.r2s.push_back(r.r2_test.value);
            auto [it, fresh] = c.best_per_expr.try_emplace(r.expr_id, r.r2_test.value);
            if (!fresh) it->second = std::max(it->second, r.r2_test.value);
        }
        if (r.recovered) ++c.recovered;
    }

    nlohmann::json out = nlohmann::json::array();
    for (auto& [dataset, by_eta] : cells) {
        for (auto& [eta, c] : by_eta) {
            double mean = 0.0;
            for (double v : c.r2s) mean += v;
            mean = c.r2s.empty() ? 0.0 : mean / double(c.r2s.size());
            double mean_max = 0.0;
            for (auto& [k, v] : c.best_per_expr) mean_max += v;
            mean_max = c.best_per_expr.empty() ? 0.0 : mean_max / double(c.best_per_expr.size());
            out.push_back({{"dataset", dataset},
                           {"eta", eta},
                           {"mean_r2", mean},
                           {"mean_max_r2", mean_max},
                           {"defined", c.r2s.size()},
                           {"undefined", c.undefined},
                           {"failures", c.failures},
                           {"recovered", c.recovered},
                           {"records", c.total}});
        }
    }
    return out;
}

void write_report_csv(const BenchReport& report, const std::string& path,
                      const nlohmann::json& run_config) {
    std::ostringstream out;
    out << "# run_config " << run_config.dump() << "\n";
    out << "dataset,expr_id,eta,run_index,r2_fit,r2_test,complexity_raw,"
           "complexity_simplified,recovered,inference_ms,pred_expr,failed\n";
    for (const BenchRecord& r : report.records) {
        std::string pred = r.pred_expr;
        std::replace(pred.begin(), pred.end(), ',', ';');
        out << r.dataset << ',' << r.expr_id << ',' << util::fmt_g(r.eta, 10) << ','
            << r.run_index << ',' << (r.r2_fit.defined ? util::fmt_g(r.r2_fit.value, 10) : "")
            << ',' << (r.r2_test.defined ? util::fmt_g(r.r2_test.value, 10) : "") << ','
            << r.complexity_raw << ',' << r.complexity_simplified << ','
            << (r.recovered ? 1 : 0) << ',' << util::fmt_g(r.inference_ms, 10) << ',' << pred
            << ',' << (r.failed ? 1 : 0) << "\n";
    }
    util::write_file(path, out.str());
}

std::vector<BenchRecord> read_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw BenchError("cannot open report: " + path);
    std::vector<BenchRecord> records;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        const auto cols = util::split(line, ',');
        if (cols.size() < 12) throw BenchError("malformed report row: " + line);
        BenchRecord r;
        r.dataset = cols[0];
        r.expr_id = cols[1];
        r.eta = std::stod(cols[2]);
        r.run_index = std::stoi(cols[3]);
        if (!cols[4].empty()) r.r2_fit = {std::stod(cols[4]), true};
        if (!cols[5].empty()) r.r2_test = {std::stod(cols[5]), true};
        r.complexity_raw = std::stoi(cols[6]);
        r.complexity_simplified = std::stoi(cols[7]);
        r.recovered = cols[8] == "1";
        r.inference_ms = std::stod(cols[9]);
        r.pred_expr = cols[10];
        r.failed = cols[11] == "1";
        records.push_back(std::move(r));
    }
    return records;
}

} // namespace dncl::bench
