#include "dncl/data.hpp"

#include "dncl/util.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <unordered_set>

using nlohmann::json;

namespace dncl::data {

namespace {

json grammar_to_json(const expr::GrammarConfig& g) {
    return json{{"dims", g.dims},
                {"max_depth", g.max_depth},
                {"max_expr_len", g.max_expr_len},
                {"min_ops", g.min_ops},
                {"max_ops", g.max_ops},
                {"unary_chain_limit", g.unary_chain_limit},
                {"const_prob", g.const_prob},
                {"small_int_prob", g.small_int_prob},
                {"op_weights", g.op_weights}};
}

} // namespace

void generate_corpus(const GenConfig& cfg, const std::string& out_path) {
    if (cfg.count < 1) throw DataError("corpus count must be >= 1");

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw DataError("cannot write corpus file: " + out_path);

    json meta = {{"meta",
                  {{"format", "dncl-corpus"},
                   {"version", 1},
                   {"count", cfg.count},
                   {"points_per_expr", cfg.points_per_expr},
                   {"y_cap", cfg.y_cap},
                   {"master_seed", cfg.master_seed},
                   {"grammar", grammar_to_json(cfg.grammar)},
                   {"vocab_hash", expr::vocab::vocab_hash()}}}};
    out << meta.dump() << "\n";

    std::unordered_set<uint64_t> seen;
    seen.reserve(size_t(cfg.count) * 2);

    int64_t written = 0;
    const int64_t max_attempts = cfg.count * 200 + 1000;
    for (int64_t attempt = 0; written < cfg.count; ++attempt) {
        if (attempt >= max_attempts)
            throw DataError("corpus generation stalled: " + std::to_string(written) + "/" +
                            std::to_string(cfg.count) + " after " + std::to_string(attempt) +
                            " attempts");
        // one derived stream per attempt: reproducible and parallelizable
        Rng rng = Rng::derive(cfg.master_seed, uint64_t(attempt));

        expr::ExprPtr tree;
        try {
            tree = expr::sample_expression(cfg.grammar, rng);
        } catch (const expr::ExprError&) {
            continue;
        }

        expr::TokenSequence tokens = expr::to_preorder(*tree, cfg.grammar.max_expr_len);
        const uint64_t h = tokens.skeleton_hash();
        if (seen.contains(h)) continue;

        PointSet ps;
        try {
            ps = sample_points(*tree, expr::default_domain(*tree, cfg.grammar.dims),
                               cfg.points_per_expr, cfg.grammar.dims, rng, cfg.y_cap);
        } catch (const DataError&) {
            continue; // insufficient valid domain or values beyond the cap
        }

        seen.insert(h);

        json rec;
        rec["id"] = written;
        rec["expr"] = expr::to_string(*tree);
        rec["d"] = cfg.grammar.dims;
        json syms = json::array();
        for (int s : tokens.symbols) syms.push_back(expr::vocab::token_name(s));
        rec["symbols"] = std::move(syms);
        rec["mantissas"] = tokens.mantissas;
        rec["exponents"] = tokens.exponents;
        json X = json::array();
        for (int64_t i = 0; i < ps.n; ++i) {
            json row = json::array();
            for (int k = 0; k < ps.d; ++k) row.push_back(ps.X[size_t(i) * ps.d + k]);
            X.push_back(std::move(row));
        }
        rec["X"] = std::move(X);
        rec["y"] = ps.y;
        rec["seed"] = uint64_t(attempt);
        out << rec.dump() << "\n";
        ++written;
    }
    if (!out) throw DataError("short write: " + out_path);
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open corpus file: " + path);

    Corpus corpus;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.contains("meta")) {
            const auto& m = j["meta"];
            if (m.value("format", "") != "dncl-corpus")
                throw DataError("not a dncl corpus file: " + path);
            corpus.dims = m["grammar"]["dims"].get<int>();
            corpus.master_seed = m["master_seed"].get<uint64_t>();
            if (m["vocab_hash"].get<uint64_t>() != expr::vocab::vocab_hash())
                throw DataError("corpus vocabulary does not match this build");
            continue;
        }
        CorpusEntry e;
        e.id = j["id"].get<int64_t>();
        e.expr_text = j["expr"].get<std::string>();
        e.d = j["d"].get<int>();
        for (const auto& s : j["symbols"])
            e.tokens.symbols.push_back(expr::vocab::token_from_name(s.get<std::string>()));
        e.tokens.mantissas = j["mantissas"].get<std::vector<double>>();
        e.tokens.exponents = j["exponents"].get<std::vector<int>>();
        if (e.tokens.mantissas.size() != e.tokens.symbols.size() ||
            e.tokens.exponents.size() != e.tokens.symbols.size())
            throw DataError("corpus entry " + std::to_string(e.id) + ": misaligned token arrays");
        for (const auto& row : j["X"])
            for (const auto& v : row) e.X.push_back(v.get<double>());
        e.y = j["y"].get<std::vector<double>>();
        e.n_points = int64_t(e.y.size());
        if (e.X.size() != size_t(e.n_points) * size_t(e.d))
            throw DataError("corpus entry " + std::to_string(e.id) + ": X/y size mismatch");
        e.seed = j["seed"].get<uint64_t>();
        corpus.entries.push_back(std::move(e));
    }
    if (corpus.entries.empty()) throw DataError("corpus file has no records: " + path);
    return corpus;
}

} // namespace dncl::data
