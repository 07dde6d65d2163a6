#pragma once

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "ntp/kb.hpp"
#include "ntp/prover.hpp"

namespace ntp {

struct RankResult {
    Atom query;  // the test fact
    bool subject_side = false;  // true: subject replaced, false: object replaced
    SymbolId gold = -1;
    int rank = 0;
    bool filtered = false;
    double gold_score = 0.0;
};

// Link-prediction ranking: for each test fact two queries (subject replaced,
// object replaced); every entity is scored by prove() and the gold is ranked
// pessimistically (after every competitor with an equal or higher score).
// Filtered mode drops candidates that form a known fact other than the gold;
// `known` holds packed train/valid/test triples (kb facts always count).
inline std::vector<RankResult> rank_all(const std::vector<Atom>& test_facts,
                                        const KnowledgeBase& kb, Prover& prover, bool filtered,
                                        const std::unordered_set<std::uint64_t>* known = nullptr) {
    std::vector<SymbolId> entities = kb.vocab.ids_of_kind(SymbolKind::constant);
    auto is_known = [&](SymbolId p, SymbolId s, SymbolId o) {
        if (kb.has_fact(p, s, o)) return true;
        return known && known->count(pack_triple(p, s, o)) > 0;
    };

    std::vector<RankResult> out;
    out.reserve(2 * test_facts.size());
    for (const Atom& f : test_facts) {
        if (!f.ground()) throw std::invalid_argument("test facts must be ground");
        SymbolId p = f.pred().sym, s = f.subj().sym, o = f.obj().sym;
        for (bool subject_side : {true, false}) {
            SymbolId gold = subject_side ? s : o;
            double gold_score =
                prover.prove(subject_side ? ground_atom(p, gold, o) : ground_atom(p, s, gold))
                    .score;
            int rank = 1;
            for (SymbolId e : entities) {
                if (e == gold) continue;
                SymbolId cs = subject_side ? e : s;
                SymbolId co = subject_side ? o : e;
                if (filtered && is_known(p, cs, co)) continue;
                if (prover.prove(ground_atom(p, cs, co)).score >= gold_score) ++rank;
            }
            out.push_back({f, subject_side, gold, rank, filtered, gold_score});
        }
    }
    return out;
}

struct RankingMetrics {
    double mrr = 0.0;
    std::map<int, double> hits;  // m -> HITS@m
};

inline RankingMetrics mrr_hits(const std::vector<RankResult>& results,
                               const std::vector<int>& ms) {
    if (results.empty()) throw std::invalid_argument("no rank results");
    RankingMetrics out;
    for (int m : ms) out.hits[m] = 0.0;
    for (const RankResult& r : results) {
        out.mrr += 1.0 / r.rank;
        for (int m : ms)
            if (r.rank <= m) out.hits[m] += 1.0;
    }
    out.mrr /= static_cast<double>(results.size());
    for (auto& [m, h] : out.hits) h /= static_cast<double>(results.size());
    return out;
}

// Area under the precision-recall curve: descending score order, equal-score
// groups advance as a single step, area accumulated as delta-recall times the
// precision after the group (no trapezoids).
inline double auc_pr(std::vector<std::pair<double, int>> scored) {
    long long total_pos = 0;
    for (const auto& [score, label] : scored) total_pos += label == 1 ? 1 : 0;
    if (total_pos == 0) throw std::invalid_argument("auc_pr needs at least one positive");
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    double area = 0.0, recall_prev = 0.0;
    long long tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < scored.size()) {
        std::size_t j = i;
        while (j < scored.size() && scored[j].first == scored[i].first) {
            tp += scored[j].second == 1 ? 1 : 0;
            fp += scored[j].second == 1 ? 0 : 1;
            ++j;
        }
        double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - recall_prev) * precision;
        recall_prev = recall;
        i = j;
    }
    return area;
}

struct ScoredTriple {
    SymbolId relation = -1;
    double score = 0.0;
    int label = 0;
};

namespace detail {

// Best accuracy achievable on `items` by a single `score >= t` threshold,
// and the first (lowest) threshold achieving it. Candidates: every distinct
// score plus +inf (classify everything negative).
inline std::pair<double, double> best_threshold(const std::vector<const ScoredTriple*>& items) {
    std::vector<double> cand;
    cand.reserve(items.size() + 1);
    for (const ScoredTriple* t : items) cand.push_back(t->score);
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    cand.push_back(std::numeric_limits<double>::infinity());

    double best_acc = -1.0, best_t = cand.front();
    for (double t : cand) {
        long long correct = 0;
        for (const ScoredTriple* it : items)
            correct += (it->score >= t ? 1 : 0) == it->label ? 1 : 0;
        double acc = static_cast<double>(correct) / static_cast<double>(items.size());
        if (acc > best_acc) {
            best_acc = acc;
            best_t = t;
        }
    }
    return {best_t, best_acc};
}

}  // namespace detail

// Triple classification: per-relation thresholds maximising validation
// accuracy, applied to test; relations unseen in validation fall back to the
// global validation threshold. Returns (valid accuracy, test accuracy).
inline std::pair<double, double> classification_accuracy(const std::vector<ScoredTriple>& valid,
                                                         const std::vector<ScoredTriple>& test) {
    if (valid.empty() || test.empty())
        throw std::invalid_argument("classification needs scored valid and test triples");

    std::map<SymbolId, std::vector<const ScoredTriple*>> by_rel;
    std::vector<const ScoredTriple*> all;
    for (const ScoredTriple& t : valid) {
        by_rel[t.relation].push_back(&t);
        all.push_back(&t);
    }
    double global_t = detail::best_threshold(all).first;
    std::map<SymbolId, double> thresholds;
    for (const auto& [rel, items] : by_rel) thresholds[rel] = detail::best_threshold(items).first;

    auto accuracy = [&](const std::vector<ScoredTriple>& split) {
        long long correct = 0;
        for (const ScoredTriple& t : split) {
            auto it = thresholds.find(t.relation);
            double thr = it == thresholds.end() ? global_t : it->second;
            correct += (t.score >= thr ? 1 : 0) == t.label ? 1 : 0;
        }
        return static_cast<double>(correct) / static_cast<double>(split.size());
    };
    return {accuracy(valid), accuracy(test)};
}

struct MetricLine {
    std::string dataset, split, metric;
    double value = 0.0;
};

inline std::string to_json(const MetricLine& m) {
    char buf[192];
    std::snprintf(buf, sizeof buf, "{\"dataset\":\"%s\",\"split\":\"%s\",\"metric\":\"%s\",\"value\":%.17g}",
                  m.dataset.c_str(), m.split.c_str(), m.metric.c_str(), m.value);
    return buf;
}

// Ground atoms for evaluation, resolved against an existing vocabulary only —
// an entity or relation missing from the trained vocabulary is an error, not
// a new symbol.
inline std::vector<Atom> parse_eval_triples(std::string_view text, KbFormat format,
                                            const SymbolTable& vocab) {
    KnowledgeBase scratch = parse_kb(text, format);
    std::vector<Atom> out;
    out.reserve(scratch.facts.size());
    for (const Rule& f : scratch.facts) {
        auto p = vocab.lookup(scratch.vocab.name(f.head.pred().sym), SymbolKind::predicate);
        auto s = vocab.lookup(scratch.vocab.name(f.head.subj().sym), SymbolKind::constant);
        auto o = vocab.lookup(scratch.vocab.name(f.head.obj().sym), SymbolKind::constant);
        if (!p || !s || !o)
            throw std::runtime_error("symbol not in trained vocabulary: " +
                                     render_atom(f.head, scratch.vocab));
        out.push_back(ground_atom(*p, *s, *o));
    }
    return out;
}

}  // namespace ntp
