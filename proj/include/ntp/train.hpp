#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntp/embed.hpp"
#include "ntp/kb.hpp"
#include "ntp/prover.hpp"
#include "ntp/tape.hpp"

namespace ntp {

// Corruptions of a ground fact: subject and object replaced alternately by a
// uniformly drawn entity, keeping only triples absent from the KB. Gives up
// after 100*n attempts (near-saturated KBs).
inline std::vector<Atom> sample_negatives(const Atom& fact, const KnowledgeBase& kb, int n,
                                          std::uint64_t seed) {
    if (!fact.ground()) throw std::invalid_argument("negative sampling needs a ground fact");
    std::vector<Atom> out;
    if (n <= 0) return out;
    std::vector<SymbolId> entities = kb.vocab.ids_of_kind(SymbolKind::constant);
    if (entities.empty()) throw std::runtime_error("no entities to corrupt with");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, entities.size() - 1);
    long long attempts = 0, budget = 100LL * n;
    bool corrupt_subject = true;
    while (static_cast<int>(out.size()) < n) {
        if (attempts >= budget)
            throw std::runtime_error("negative sampling exhausted its attempt budget");
        ++attempts;
        SymbolId e = entities[pick(rng)];
        SymbolId p = fact.pred().sym;
        SymbolId s = corrupt_subject ? e : fact.subj().sym;
        SymbolId o = corrupt_subject ? fact.obj().sym : e;
        if (kb.has_fact(p, s, o)) continue;
        out.push_back(ground_atom(p, s, o));
        corrupt_subject = !corrupt_subject;
    }
    return out;
}

// Adam (lazy per-symbol state, bias correction by each symbol's own update
// count) with a plain-SGD mode kept for invariant tests.
class Optimizer {
   public:
    enum class Kind { adam, sgd };

    Optimizer(Kind kind, double lr, int dim) : kind_(kind), lr_(lr), dim_(dim) {}

    void step(EmbeddingStore& store, const Gradients& grads) {
        for (const auto& [sym, g] : grads.by_symbol) {
            auto theta = store.vec(sym);
            if (kind_ == Kind::sgd) {
                for (int i = 0; i < dim_; ++i) theta[i] -= lr_ * g[i];
                continue;
            }
            State& st = state_[sym];
            if (st.m.empty()) {
                st.m.assign(static_cast<std::size_t>(dim_), 0.0);
                st.v.assign(static_cast<std::size_t>(dim_), 0.0);
            }
            ++st.t;
            double c1 = 1.0 - std::pow(kBeta1, st.t);
            double c2 = 1.0 - std::pow(kBeta2, st.t);
            for (int i = 0; i < dim_; ++i) {
                st.m[i] = kBeta1 * st.m[i] + (1.0 - kBeta1) * g[i];
                st.v[i] = kBeta2 * st.v[i] + (1.0 - kBeta2) * g[i] * g[i];
                theta[i] -= lr_ * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + kEps);
            }
        }
    }

   private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    struct State {
        std::vector<double> m, v;
        long t = 0;
    };

    Kind kind_;
    double lr_;
    int dim_;
    std::unordered_map<SymbolId, State> state_;
};

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 0.001;
    int negatives_per_positive = 2;
    std::uint64_t seed = 0;
    int rebuild_every = 0;  // batches between index rebuilds; 0 = one epoch's worth
    ProverConfig prover;
    Optimizer::Kind optimizer = Optimizer::Kind::adam;
};

struct MetricsRecord {
    int epoch = 0;
    int batch = 0;       // 1-based within the epoch
    double loss = 0.0;   // mean per-query loss over the batch
    long long wall_ms = 0;
    int index_rebuilds = 0;
};

inline std::string to_json(const MetricsRecord& m) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "{\"epoch\":%d,\"batch\":%d,\"loss\":%.17g,\"wall_ms\":%lld,"
                  "\"index_rebuilds\":%d}",
                  m.epoch, m.batch, m.loss, m.wall_ms, m.index_rebuilds);
    return buf;
}

struct TrainResult {
    std::vector<MetricsRecord> metrics;
    std::uint64_t unprovable_queries = 0;  // queries with no proof state at all
};

// One epoch = a seeded shuffle of the positives; each positive is proven with
// itself masked out of the candidate facts, its corruptions unmasked, losses
// -label*log(s) - (1-label)*log(1-s+eps) accumulated per batch, the
// optimizer stepped per batch, and the fact index rebuilt every
// `rebuild_every` batches. The per-batch loss sequence depends only on
// (kb, templates, cfg, seed) — wall_ms is the only nondeterministic field.
inline TrainResult train(const KnowledgeBase& kb, EmbeddingStore& store, const TrainConfig& cfg) {
    if (cfg.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (cfg.learning_rate <= 0) throw std::invalid_argument("learning_rate must be positive");
    if (cfg.negatives_per_positive < 0)
        throw std::invalid_argument("negatives_per_positive must be >= 0");
    if (cfg.rebuild_every < 0) throw std::invalid_argument("rebuild_every must be >= 0");

    TrainResult result;
    std::size_t n_facts = kb.facts.size();
    if (cfg.epochs == 0 || n_facts == 0) return result;

    int batches_per_epoch =
        static_cast<int>((n_facts + cfg.batch_size - 1) / static_cast<std::size_t>(cfg.batch_size));
    int rebuild_every = cfg.rebuild_every >= 1 ? cfg.rebuild_every : batches_per_epoch;

    Prover prover(kb, store, cfg.prover);
    Optimizer opt(cfg.optimizer, cfg.learning_rate, store.dim());
    prover.selector().rebuild();

    std::mt19937_64 shuffle_rng(cfg.seed);
    std::vector<int> order(n_facts);
    for (std::size_t i = 0; i < n_facts; ++i) order[i] = static_cast<int>(i);

    int global_batch = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        Gradients acc;
        acc.dim = store.dim();
        double batch_loss = 0.0;
        int batch_queries = 0;
        int positives_in_batch = 0;
        int batch_no = 0;
        auto batch_t0 = std::chrono::steady_clock::now();

        auto run_query = [&](const Atom& q, int label, int mask) {
            ProveResult r = prover.prove(q, mask);
            if (r.trail.empty()) {
                ++result.unprovable_queries;
                return;
            }
            Tape tape(store);
            NodeId score = prover.replay(r.trail, tape);
            NodeId l = tape.loss(score, label);
            batch_loss += tape.value(l);
            ++batch_queries;
            acc.add(tape.backward(l));
        };

        auto flush = [&] {
            opt.step(store, acc);
            acc.by_symbol.clear();
            ++global_batch;
            ++batch_no;
            if (global_batch % rebuild_every == 0) prover.selector().rebuild();
            auto now = std::chrono::steady_clock::now();
            MetricsRecord m;
            m.epoch = epoch;
            m.batch = batch_no;
            m.loss = batch_queries > 0 ? batch_loss / batch_queries : 0.0;
            m.wall_ms =
                std::chrono::duration_cast<std::chrono::milliseconds>(now - batch_t0).count();
            m.index_rebuilds = prover.selector().rebuild_count();
            result.metrics.push_back(m);
            batch_loss = 0.0;
            batch_queries = 0;
            positives_in_batch = 0;
            batch_t0 = now;
        };

        for (std::size_t qi = 0; qi < order.size(); ++qi) {
            int fact_pos = order[qi];
            const std::array<SymbolId, 3>& f = kb.fact_syms[static_cast<std::size_t>(fact_pos)];
            Atom positive = ground_atom(f[0], f[1], f[2]);
            run_query(positive, 1, fact_pos);
            std::uint64_t nseed =
                cfg.seed ^ (static_cast<std::uint64_t>(epoch) << 40) ^
                (static_cast<std::uint64_t>(fact_pos) * 0x9e3779b97f4a7c15ULL);
            for (const Atom& neg :
                 sample_negatives(positive, kb, cfg.negatives_per_positive, nseed))
                run_query(neg, 0, -1);
            if (++positives_in_batch == cfg.batch_size) flush();
        }
        if (positives_in_batch > 0) flush();
    }
    return result;
}

}  // namespace ntp
