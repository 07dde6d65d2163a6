#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "ntp/ann.hpp"
#include "ntp/config.hpp"
#include "ntp/embed.hpp"
#include "ntp/eval.hpp"
#include "ntp/kb.hpp"
#include "ntp/prover.hpp"
#include "ntp/rules.hpp"
#include "ntp/tape.hpp"
#include "ntp/train.hpp"

namespace cli {
namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void apply_overrides(const Overrides& ov, ntp::RunConfig& cfg) {
    if (ov.seed_set) cfg.seed = ov.seed;
    if (ov.k_set) cfg.k = ov.k;
    if (ov.mode_set) cfg.mode = ov.mode;
    cfg.validate();
}

struct Dataset {
    ntp::KnowledgeBase kb;
    std::vector<ntp::RuleTemplate> templates;
    int instantiated_rules = 0;
};

// Train KB plus instantiated templates; embeddings are attached afterwards
// (fresh init for train, checkpoint load for eval/rules).
Dataset load_dataset(const ntp::RunConfig& cfg) {
    if (cfg.train_path.empty()) throw std::runtime_error("config is missing train=<path>");
    Dataset d;
    d.kb = ntp::parse_kb(read_file(cfg.train_path), cfg.format());
    for (const std::string& w : d.kb.warnings) std::cerr << "warning: " << w << "\n";
    if (!cfg.templates_path.empty()) {
        d.templates = ntp::parse_templates(read_file(cfg.templates_path), d.kb.vocab);
        d.instantiated_rules = static_cast<int>(
            ntp::instantiate_templates(d.templates, d.kb, nullptr, cfg.seed).size());
    }
    return d;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const std::string& l : lines) out << l << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::unordered_set<std::uint64_t> pack_known(const ntp::KnowledgeBase& kb,
                                             const std::vector<std::vector<ntp::Atom>*>& splits) {
    std::unordered_set<std::uint64_t> known;
    for (const auto& f : kb.fact_syms) known.insert(ntp::pack_triple(f[0], f[1], f[2]));
    for (const auto* split : splits)
        for (const ntp::Atom& a : *split)
            known.insert(ntp::pack_triple(a.pred().sym, a.subj().sym, a.obj().sym));
    return known;
}

void report(std::vector<std::string>& jsonl, const ntp::MetricLine& m) {
    jsonl.push_back(ntp::to_json(m));
    std::printf("%-12s %-10s %-14s %.4f\n", m.dataset.c_str(), m.split.c_str(), m.metric.c_str(),
                m.value);
}

// Labelled scored triples for classification: TSV s<TAB>p<TAB>o<TAB>label
// (label 1/0 or 1/-1); unlabelled rows default to positive.
std::vector<std::pair<ntp::Atom, int>> parse_labelled(const std::string& text,
                                                      const ntp::SymbolTable& vocab) {
    std::vector<std::pair<ntp::Atom, int>> out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        while (true) {
            std::size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos
                                                                       : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (cols.size() < 3)
            throw std::runtime_error("labelled TSV line " + std::to_string(line_no) +
                                     ": want subject<TAB>predicate<TAB>object[<TAB>label]");
        auto s = vocab.lookup(cols[0], ntp::SymbolKind::constant);
        auto p = vocab.lookup(cols[1], ntp::SymbolKind::predicate);
        auto o = vocab.lookup(cols[2], ntp::SymbolKind::constant);
        if (!p || !s || !o)
            throw std::runtime_error("symbol not in trained vocabulary on line " +
                                     std::to_string(line_no) + ": " + line);
        int label = 1;
        if (cols.size() >= 4) label = cols[3] == "1" ? 1 : 0;
        out.emplace_back(ntp::ground_atom(*p, *s, *o), label);
    }
    return out;
}

ntp::Atom parse_query_atom(const std::string& text, ntp::SymbolTable& vocab) {
    ntp::detail::LineLexer lex(text, 1);
    lex.skip_ws();
    ntp::Atom a = ntp::detail::parse_atom(lex, vocab);
    lex.skip_ws();
    lex.accept('.');
    lex.skip_ws();
    if (!lex.at_end()) throw std::runtime_error("trailing input after query atom: " + text);
    return a;
}

}  // namespace

int cmd_train(const std::string& config_path, const Overrides& ov, std::string checkpoint_path,
              std::string metrics_path) {
    ntp::RunConfig cfg = ntp::load_run_config(config_path);
    apply_overrides(ov, cfg);
    Dataset d = load_dataset(cfg);
    ntp::EmbeddingStore store = ntp::init_embeddings(d.kb.vocab, cfg.dim, cfg.seed, cfg.mu);

    std::printf("dataset=%s facts=%zu rules=%zu vocab=%zu dim=%d mode=%s\n", cfg.dataset.c_str(),
                d.kb.facts.size(), d.kb.rules.size(), d.kb.vocab.size(), cfg.dim,
                cfg.mode.c_str());

    ntp::TrainResult result = ntp::train(d.kb, store, cfg.trainer());

    if (checkpoint_path.empty()) checkpoint_path = cfg.dataset + ".ckpt";
    ntp::save_checkpoint(checkpoint_path, store, d.kb.vocab);

    std::vector<std::string> lines;
    lines.reserve(result.metrics.size());
    for (const ntp::MetricsRecord& m : result.metrics) lines.push_back(ntp::to_json(m));
    if (metrics_path.empty()) metrics_path = cfg.dataset + ".train-metrics.jsonl";
    write_lines(metrics_path, lines);

    double final_loss = result.metrics.empty() ? 0.0 : result.metrics.back().loss;
    std::printf("trained %d epochs, %zu batches, final batch loss %.6f\n", cfg.epochs,
                result.metrics.size(), final_loss);
    if (result.unprovable_queries > 0)
        std::printf("unprovable queries skipped: %llu\n",
                    static_cast<unsigned long long>(result.unprovable_queries));
    std::printf("checkpoint: %s\nmetrics: %s\n", checkpoint_path.c_str(), metrics_path.c_str());
    return 0;
}

int cmd_eval(const std::string& config_path, const Overrides& ov, const std::string& ckpt,
             const std::string& task, bool raw_only, bool filtered_only,
             std::string metrics_path) {
    ntp::RunConfig cfg = ntp::load_run_config(config_path);
    apply_overrides(ov, cfg);
    Dataset d = load_dataset(cfg);
    ntp::EmbeddingStore store = ntp::load_checkpoint(ckpt, d.kb.vocab);
    if (store.dim() != cfg.dim)
        std::cerr << "note: checkpoint dim " << store.dim() << " overrides config dim " << cfg.dim
                  << "\n";
    if (cfg.test_path.empty()) throw std::runtime_error("config is missing test=<path>");

    ntp::ProverConfig pcfg = cfg.prover();
    ntp::Prover prover(d.kb, store, pcfg);
    std::vector<std::string> jsonl;

    if (task == "ranking") {
        std::vector<ntp::Atom> test =
            ntp::parse_eval_triples(read_file(cfg.test_path), cfg.format(), d.kb.vocab);
        std::vector<ntp::Atom> valid;
        if (!cfg.valid_path.empty())
            valid = ntp::parse_eval_triples(read_file(cfg.valid_path), cfg.format(), d.kb.vocab);
        auto known = pack_known(d.kb, {&valid, &test});

        std::vector<int> ms{1, 3, 10};
        auto run_mode = [&](bool filtered) {
            auto results = ntp::rank_all(test, d.kb, prover, filtered, &known);
            ntp::RankingMetrics rm = ntp::mrr_hits(results, ms);
            std::string split = filtered ? "test-filtered" : "test-raw";
            report(jsonl, {cfg.dataset, split, "mrr", rm.mrr});
            for (int m : ms)
                report(jsonl, {cfg.dataset, split, "hits@" + std::to_string(m), rm.hits[m]});
        };
        bool want_filtered = filtered_only || !raw_only;
        bool want_raw = raw_only || !filtered_only;
        if (want_filtered) run_mode(true);
        if (want_raw) run_mode(false);
    } else if (task == "auc-pr") {
        // held-out positives vs same-subject corruptions over the observed
        // object set of each relation (Countries: the other regions)
        std::vector<ntp::Atom> test =
            ntp::parse_eval_triples(read_file(cfg.test_path), cfg.format(), d.kb.vocab);
        std::vector<ntp::Atom> valid;
        if (!cfg.valid_path.empty())
            valid = ntp::parse_eval_triples(read_file(cfg.valid_path), cfg.format(), d.kb.vocab);
        auto known = pack_known(d.kb, {&valid, &test});

        std::unordered_map<ntp::SymbolId, std::unordered_set<ntp::SymbolId>> objects_by_rel;
        for (const auto& f : d.kb.fact_syms) objects_by_rel[f[0]].insert(f[2]);
        for (const ntp::Atom& a : test) objects_by_rel[a.pred().sym].insert(a.obj().sym);
        for (const ntp::Atom& a : valid) objects_by_rel[a.pred().sym].insert(a.obj().sym);

        std::vector<std::pair<double, int>> scored;
        for (const ntp::Atom& a : test) {
            ntp::SymbolId p = a.pred().sym, s = a.subj().sym, o = a.obj().sym;
            scored.emplace_back(prover.prove(a).score, 1);
            std::vector<ntp::SymbolId> objs(objects_by_rel[p].begin(), objects_by_rel[p].end());
            std::sort(objs.begin(), objs.end());
            for (ntp::SymbolId other : objs) {
                if (other == o || known.count(ntp::pack_triple(p, s, other))) continue;
                scored.emplace_back(prover.prove(ntp::ground_atom(p, s, other)).score, 0);
            }
        }
        report(jsonl, {cfg.dataset, "test", "auc_pr", ntp::auc_pr(scored)});
    } else if (task == "classification") {
        if (cfg.valid_path.empty())
            throw std::runtime_error("classification needs valid=<path> with labelled triples");
        auto score_split = [&](const std::string& path) {
            std::vector<ntp::ScoredTriple> out;
            for (const auto& [atom, label] : parse_labelled(read_file(path), d.kb.vocab))
                out.push_back({atom.pred().sym, prover.prove(atom).score, label});
            return out;
        };
        auto valid_scored = score_split(cfg.valid_path);
        auto test_scored = score_split(cfg.test_path);
        auto [vacc, tacc] = ntp::classification_accuracy(valid_scored, test_scored);
        report(jsonl, {cfg.dataset, "valid", "accuracy", vacc});
        report(jsonl, {cfg.dataset, "test", "accuracy", tacc});
    } else {
        throw std::runtime_error("unknown --task: " + task +
                                 " (want ranking|auc-pr|classification)");
    }

    if (!metrics_path.empty()) write_lines(metrics_path, jsonl);
    return 0;
}

int cmd_rules(const std::string& config_path, const Overrides& ov, const std::string& ckpt,
              double min_confidence, bool min_confidence_set) {
    ntp::RunConfig cfg = ntp::load_run_config(config_path);
    apply_overrides(ov, cfg);
    if (min_confidence_set) cfg.min_confidence = min_confidence;
    Dataset d = load_dataset(cfg);
    if (d.instantiated_rules == 0)
        std::cerr << "note: no templates configured; nothing to decode\n";
    ntp::EmbeddingStore store = ntp::load_checkpoint(ckpt, d.kb.vocab);
    auto decoded = ntp::extract_rules(d.kb, store, cfg.min_confidence);
    std::fputs(ntp::render_decoded_rules(decoded, d.kb.vocab).c_str(), stdout);
    return 0;
}

int cmd_ann_bench(int n, int dim, int queries, int k, int ef, int m, int efc,
                  std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&](int count) {
        std::vector<std::vector<double>> vs(count, std::vector<double>(dim));
        for (auto& v : vs)
            for (double& x : v) x = normal(rng);
        return vs;
    };
    std::vector<std::vector<double>> data = draw(n);
    std::vector<std::vector<double>> qs = draw(queries);

    ntp::BruteForceIndex brute(dim);
    for (int i = 0; i < n; ++i) brute.add(i, data[i]);

    auto t0 = std::chrono::steady_clock::now();
    ntp::HnswIndex hnsw(dim, {m, efc, seed});
    for (int i = 0; i < n; ++i) hnsw.insert(i, data[i]);
    auto t1 = std::chrono::steady_clock::now();
    double build_s = std::chrono::duration<double>(t1 - t0).count();

    // Time each method as a pure loop over all queries, matching how the
    // throughput of either index would be seen in isolation.
    std::vector<std::vector<ntp::Neighbour>> exact(qs.size()), approx(qs.size());
    auto b0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < qs.size(); ++i) exact[i] = brute.search(qs[i], k);
    auto b1 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < qs.size(); ++i) approx[i] = hnsw.search(qs[i], k, ef);
    auto b2 = std::chrono::steady_clock::now();
    double brute_s = std::chrono::duration<double>(b1 - b0).count();
    double hnsw_s = std::chrono::duration<double>(b2 - b1).count();

    double hit1 = 0.0, hitk = 0.0;
    for (std::size_t i = 0; i < qs.size(); ++i) {
        std::unordered_set<int> truth;
        for (const auto& nb : exact[i]) truth.insert(nb.id);
        int found = 0;
        for (const auto& nb : approx[i]) found += truth.count(nb.id) ? 1 : 0;
        hitk += static_cast<double>(found) / static_cast<double>(exact[i].size());
        if (!approx[i].empty() && !exact[i].empty() && approx[i].front().id == exact[i].front().id)
            hit1 += 1.0;
    }
    double nq = static_cast<double>(queries);
    std::printf("n=%d dim=%d M=%d efc=%d ef=%d k=%d seed=%llu\n", n, dim, m, efc, ef, k,
                static_cast<unsigned long long>(seed));
    std::printf("build: %.2f s\n", build_s);
    std::printf("recall@1 = %.4f\n", hit1 / nq);
    std::printf("recall@%d = %.4f\n", k, hitk / nq);
    std::printf("brute force: %.1f queries/s\n", nq / brute_s);
    std::printf("hnsw: %.1f queries/s (%.1fx)\n", nq / hnsw_s, brute_s / hnsw_s);
    return 0;
}

int cmd_prove(const std::string& kb_path, const std::string& query_text,
              const std::string& templates_path, const std::string& ckpt, int dim, double mu,
              std::uint64_t seed, int depth, int k, const std::string& mode, bool explain,
              const std::vector<std::string>& ties) {
    ntp::KnowledgeBase kb = ntp::parse_kb(read_file(kb_path),
                                          kb_path.ends_with(".tsv") ? ntp::KbFormat::tsv
                                                                    : ntp::KbFormat::clauses);
    for (const std::string& w : kb.warnings) std::cerr << "warning: " << w << "\n";
    if (!templates_path.empty()) {
        auto templates = ntp::parse_templates(read_file(templates_path), kb.vocab);
        ntp::instantiate_templates(templates, kb, nullptr, seed);
    }
    ntp::Atom goal = parse_query_atom(query_text, kb.vocab);

    ntp::EmbeddingStore store = ckpt.empty() ? ntp::init_embeddings(kb.vocab, dim, seed, mu)
                                             : ntp::load_checkpoint(ckpt, kb.vocab);

    for (const std::string& tie : ties) {
        std::size_t eq = tie.find('=');
        if (eq == std::string::npos) throw std::runtime_error("--tie wants A=B, got: " + tie);
        auto find_sym = [&](const std::string& name) {
            auto p = kb.vocab.lookup(name, ntp::SymbolKind::predicate);
            if (p) return *p;
            auto c = kb.vocab.lookup(name, ntp::SymbolKind::constant);
            if (c) return *c;
            throw std::runtime_error("--tie symbol not in KB or query: " + name);
        };
        ntp::SymbolId dst = find_sym(tie.substr(0, eq));
        ntp::SymbolId src = find_sym(tie.substr(eq + 1));
        store.set_vec(dst, store.vec(src));
    }

    ntp::RunConfig modecheck;
    modecheck.mode = mode;
    ntp::ProverConfig pcfg;
    pcfg.max_depth = depth;
    pcfg.k = k;
    pcfg.mode = modecheck.prove_mode();
    pcfg.hnsw.seed = seed;
    ntp::Prover prover(kb, store, pcfg);

    ntp::ProveResult r = prover.prove(goal);
    std::printf("%s\n", ntp::format_score(r.score).c_str());
    if (explain)
        std::fputs(ntp::format_trail_detailed(r.trail).c_str(), stdout);
    else
        std::printf("%s\n", ntp::format_trail(r.trail).c_str());
    return 0;
}

}  // namespace cli
