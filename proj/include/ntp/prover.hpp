#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ntp/ann.hpp"
#include "ntp/embed.hpp"
#include "ntp/kb.hpp"
#include "ntp/tape.hpp"

namespace ntp {

enum class ProveMode { exhaustive, exact_knn, hnsw_knn };

struct ProverConfig {
    int max_depth = 2;
    int k = 10;  // fact neighbours per goal; clamped to |facts|
    ProveMode mode = ProveMode::exhaustive;
    int ef_search = 64;
    HnswParams hnsw;  // used when mode == hnsw_knn
};

// One applied clause on a proof path plus the kernel comparisons its head
// unification recorded, in slot order. `pairs` is enough to replay the score
// computation onto a fresh tape.
struct TrailStep {
    bool fact = false;
    int index = 0;    // position within kb.facts / kb.rules
    int ordinal = 0;  // 1-based clause ordinal; trails compare lexicographically by these
    double step_score = 0.0;  // rho after this clause's head unification
    std::vector<std::pair<SymbolId, SymbolId>> pairs;
};

using Trail = std::vector<TrailStep>;

// Lexicographic order over clause-ordinal sequences; proof enumeration visits
// trails in exactly this order, so "first best found" == "lex-least arg-max".
inline bool trail_less(const Trail& a, const Trail& b) {
    std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i)
        if (a[i].ordinal != b[i].ordinal) return a[i].ordinal < b[i].ordinal;
    return a.size() < b.size();
}

struct ProofState {
    bool fail = false;
    SubstitutionSet psi;
    NodeId rho = -1;  // score node on the tape
    double rho_value = 1.0;
    Trail trail;

    static ProofState failed() {
        ProofState s;
        s.fail = true;
        return s;
    }
};

// Fact-candidate supplier for or_step: all facts in exhaustive mode (or for
// goals with unbound slots), otherwise the k embedding-nearest facts under the
// concatenated [theta_p; theta_s; theta_o] query. Index vectors go stale as
// theta trains; staleness affects which candidates appear, never their scores.
class NeighbourSelector {
   public:
    NeighbourSelector(const KnowledgeBase& kb, const EmbeddingStore& store, ProverConfig cfg)
        : kb_(&kb), store_(&store), cfg_(cfg) {}

    // Rebuilds the fact index from current embeddings. No-op in exhaustive mode.
    void rebuild() {
        if (cfg_.mode == ProveMode::exhaustive) return;
        int qdim = 3 * store_->dim();
        if (cfg_.mode == ProveMode::exact_knn) {
            brute_.emplace(qdim);
            for (std::size_t i = 0; i < kb_->fact_syms.size(); ++i)
                brute_->add(static_cast<int>(i), concat(kb_->fact_syms[i]));
        } else {
            hnsw_.emplace(qdim, cfg_.hnsw);
            for (std::size_t i = 0; i < kb_->fact_syms.size(); ++i)
                hnsw_->insert(static_cast<int>(i), concat(kb_->fact_syms[i]));
        }
        built_ = true;
        ++rebuilds_;
    }

    // Fact positions to try against `goal`, ascending (= clause order).
    // `mask` excludes one position (the fact being proven during training).
    std::vector<int> select(const Atom& goal, int mask) {
        std::size_t n = kb_->fact_syms.size();
        std::vector<int> out;
        if (cfg_.mode == ProveMode::exhaustive || !goal.ground()) {
            out.reserve(n);
            for (int i = 0; i < static_cast<int>(n); ++i)
                if (i != mask) out.push_back(i);
        } else if (n > 0) {
            if (!built_) rebuild();
            // one extra so the mask never shrinks the candidate set below k
            std::size_t k = std::min(static_cast<std::size_t>(cfg_.k) + (mask >= 0 ? 1 : 0), n);
            std::vector<double> q = concat({goal.pred().sym, goal.subj().sym, goal.obj().sym});
            std::vector<Neighbour> res =
                cfg_.mode == ProveMode::exact_knn
                    ? brute_->search(q, k)
                    : hnsw_->search(q, k, std::max<int>(cfg_.ef_search, static_cast<int>(k)));
            for (const Neighbour& nb : res)
                if (nb.id != mask) out.push_back(nb.id);
            if (out.size() > static_cast<std::size_t>(cfg_.k)) out.resize(cfg_.k);
            std::sort(out.begin(), out.end());
        }
        ++selects_;
        served_ += out.size();
        if (n > 0) exhaustive_equiv_ += n - (mask >= 0 ? 1 : 0);
        return out;
    }

    int rebuild_count() const { return rebuilds_; }
    std::uint64_t candidates_served() const { return served_; }
    std::uint64_t candidates_exhaustive_equiv() const { return exhaustive_equiv_; }
    std::uint64_t select_calls() const { return selects_; }
    void reset_counters() { served_ = exhaustive_equiv_ = selects_ = 0; }

   private:
    std::vector<double> concat(const std::array<SymbolId, 3>& syms) const {
        std::vector<double> v;
        v.reserve(3 * store_->dim());
        for (SymbolId s : syms) {
            auto row = store_->vec(s);
            v.insert(v.end(), row.begin(), row.end());
        }
        return v;
    }

    const KnowledgeBase* kb_;
    const EmbeddingStore* store_;
    ProverConfig cfg_;
    std::optional<BruteForceIndex> brute_;
    std::optional<HnswIndex> hnsw_;
    bool built_ = false;
    int rebuilds_ = 0;
    std::uint64_t served_ = 0;
    std::uint64_t exhaustive_equiv_ = 0;
    std::uint64_t selects_ = 0;
};

namespace detail {

inline Term rename_term(const Term& t, int tag) {
    return t.is_var() ? Term::make_var(t.var + '~' + std::to_string(tag)) : t;
}

inline Atom rename_atom(const Atom& a, int tag) {
    return Atom{{rename_term(a.items[0], tag), rename_term(a.items[1], tag),
                 rename_term(a.items[2], tag)}};
}

inline Rule rename_rule(const Rule& r, int tag) {
    Rule out;
    out.head = rename_atom(r.head, tag);
    out.body.reserve(r.body.size());
    for (const Atom& a : r.body) out.body.push_back(rename_atom(a, tag));
    out.ordinal = r.ordinal;
    return out;
}

}  // namespace detail

// Soft unification, rules 1-4: empty vs empty succeeds, length mismatch
// fails, a variable on either side extends psi ({h/g} if h is a variable,
// else {g/h}), and two non-variables multiply-in min(rho, kernel) on the
// tape. Terms are resolved against psi first so a variable met twice
// compares instead of rebinding.
inline ProofState unify(std::span<const Term> h_seq, std::span<const Term> g_seq, ProofState s,
                        Tape& tape,
                        std::vector<std::pair<SymbolId, SymbolId>>* pairs_out = nullptr) {
    if (s.fail) return ProofState::failed();
    if (h_seq.size() != g_seq.size()) return ProofState::failed();
    for (std::size_t i = 0; i < h_seq.size(); ++i) {
        Term h = s.psi.resolve(h_seq[i]);
        Term g = s.psi.resolve(g_seq[i]);
        if (h.is_var() && g.is_var() && h.var == g.var) continue;
        if (h.is_var()) {
            s.psi.bind(h.var, g);
        } else if (g.is_var()) {
            s.psi.bind(g.var, h);
        } else {
            NodeId k = tape.kernel(h.sym, g.sym);
            s.rho = tape.min_of({s.rho, k});
            s.rho_value = tape.value(s.rho);
            if (pairs_out) pairs_out->emplace_back(h.sym, g.sym);
        }
    }
    return s;
}

// Shared state for one enumeration pass: clause source, fact selection,
// tape, optional fact mask, and the fresh-variable counter.
struct ProveContext {
    const KnowledgeBase& kb;
    NeighbourSelector& selector;
    Tape& tape;
    int mask = -1;
    int rename_counter = 0;
};

inline std::vector<ProofState> and_step(std::span<const Atom> body, int d, const ProofState& s,
                                        ProveContext& ctx);

// OR: unify the goal against every rule head (rules always exhaustively) and
// against the selected facts, in clause order, handing each body to AND.
// FAILed branches are dropped here, so the output holds only viable states.
inline std::vector<ProofState> or_step(const Atom& goal, int d, const ProofState& s,
                                       ProveContext& ctx) {
    std::vector<ProofState> out;
    if (s.fail) return out;
    std::vector<int> fact_positions = ctx.selector.select(goal, ctx.mask);
    std::size_t fi = 0, ri = 0;
    while (fi < fact_positions.size() || ri < ctx.kb.rules.size()) {
        bool take_fact =
            ri >= ctx.kb.rules.size() ||
            (fi < fact_positions.size() &&
             ctx.kb.facts[fact_positions[fi]].ordinal < ctx.kb.rules[ri].ordinal);
        std::vector<std::pair<SymbolId, SymbolId>> pairs;
        if (take_fact) {
            int pos = fact_positions[fi++];
            const Rule& f = ctx.kb.facts[pos];
            ProofState s2 = unify(f.head.items, goal.items, s, ctx.tape, &pairs);
            s2.trail.push_back({true, pos, f.ordinal, s2.rho_value, std::move(pairs)});
            for (ProofState& s3 : and_step({}, d, s2, ctx))
                if (!s3.fail) out.push_back(std::move(s3));
        } else {
            Rule renamed = detail::rename_rule(ctx.kb.rules[ri], ++ctx.rename_counter);
            ProofState s2 = unify(renamed.head.items, goal.items, s, ctx.tape, &pairs);
            s2.trail.push_back(
                {false, static_cast<int>(ri), renamed.ordinal, s2.rho_value, std::move(pairs)});
            for (ProofState& s3 : and_step(renamed.body, d, s2, ctx))
                if (!s3.fail) out.push_back(std::move(s3));
            ++ri;
        }
    }
    return out;
}

// AND, rules 1-4 in pattern order: FAIL propagates; depth 0 fails before the
// empty-body success (so d=1 admits only direct fact unifications); an empty
// body succeeds; otherwise the first atom is substituted and proven by OR at
// d-1, the remainder at d against each resulting state.
inline std::vector<ProofState> and_step(std::span<const Atom> body, int d, const ProofState& s,
                                        ProveContext& ctx) {
    if (s.fail) return {ProofState::failed()};
    if (d <= 0) return {ProofState::failed()};
    if (body.empty()) return {s};
    Atom first = substitute(body[0], s.psi);
    std::vector<ProofState> out;
    for (ProofState& s2 : or_step(first, d - 1, s, ctx))
        for (ProofState& s3 : and_step(body.subspan(1), d, s2, ctx))
            if (!s3.fail) out.push_back(std::move(s3));
    return out;
}

// All non-FAIL proof states of `goal` from the initial state ({}, 1).
inline std::vector<ProofState> enumerate_proofs(const Atom& goal, int depth,
                                                const KnowledgeBase& kb,
                                                NeighbourSelector& selector, Tape& tape,
                                                int mask = -1) {
    ProveContext ctx{kb, selector, tape, mask, 0};
    ProofState init;
    init.rho = tape.constant(1.0);
    init.rho_value = 1.0;
    return or_step(goal, depth, init, ctx);
}

struct ProveResult {
    double score = 0.0;
    Trail trail;  // empty when nothing proved
};

// Depth-first search over the same proof space as or_step/and_step, value
// only: no tape, substitution extended in place, branches abandoned once
// their running score can no longer beat the best (min-composition makes
// scores non-increasing, and on ties the earlier trail wins, so pruning at
// rho <= best is exact). Enumeration order is clause order at every level,
// which makes the first maximum found the lex-least arg-max trail — the same
// state or_step + max_of would select. replay() rebuilds the winning score
// chain on a tape for gradients, bit-identical to the full enumeration.
class Prover {
   public:
    Prover(const KnowledgeBase& kb, const EmbeddingStore& store, ProverConfig cfg)
        : kb_(&kb), store_(&store), cfg_(cfg), selector_(kb, store, cfg) {
        if (cfg.max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
        if (cfg.k < 1) throw std::invalid_argument("k must be >= 1");
    }

    NeighbourSelector& selector() { return selector_; }
    const ProverConfig& config() const { return cfg_; }

    ProveResult prove(const Atom& goal, int mask_fact = -1) {
        best_ = {};
        psi_ = {};
        path_.clear();
        goal_stack_.clear();
        kmemo_.clear();
        rename_seq_ = 0;
        mask_ = mask_fact;
        goal_stack_.push_back({goal, cfg_.max_depth});
        dfs(1.0);
        return std::move(best_);
    }

    // Rebuilds a trail's min-of-kernels chain; the returned node's value
    // equals the searched score bit for bit.
    NodeId replay(const Trail& trail, Tape& tape) const {
        NodeId rho = tape.constant(1.0);
        for (const TrailStep& step : trail)
            for (auto [a, b] : step.pairs) rho = tape.min_of({rho, tape.kernel(a, b)});
        return rho;
    }

   private:
    struct PendingGoal {
        Atom atom;  // unsubstituted; resolved against psi when popped
        int depth;  // depth of the or_step that must prove it
    };

    void dfs(double rho) {
        if (goal_stack_.empty()) {
            if (rho > best_.score) {
                best_.score = rho;
                best_.trail = path_;
            }
            return;
        }
        PendingGoal pg = goal_stack_.back();
        if (pg.depth < 1) return;  // or_step at depth 0 yields nothing
        goal_stack_.pop_back();
        Atom goal = substitute(pg.atom, psi_);

        std::vector<int> fact_positions = selector_.select(goal, mask_);
        std::size_t fi = 0, ri = 0;
        while (fi < fact_positions.size() || ri < kb_->rules.size()) {
            bool take_fact =
                ri >= kb_->rules.size() ||
                (fi < fact_positions.size() &&
                 kb_->facts[fact_positions[fi]].ordinal < kb_->rules[ri].ordinal);
            if (take_fact) {
                int pos = fact_positions[fi++];
                std::size_t psi_save = psi_.size();
                TrailStep step{true, pos, kb_->facts[pos].ordinal, 0.0, {}};
                std::optional<double> r2 = unify_fact(pos, goal, rho, step);
                if (r2) {
                    step.step_score = *r2;
                    path_.push_back(std::move(step));
                    dfs(*r2);
                    path_.pop_back();
                }
                psi_.truncate(psi_save);
            } else {
                const Rule& rule = kb_->rules[ri];
                std::size_t psi_save = psi_.size();
                int tag = ++rename_seq_;
                TrailStep step{false, static_cast<int>(ri), rule.ordinal, 0.0, {}};
                std::optional<double> r2 = unify_rule_head(rule, tag, goal, rho, step);
                if (r2) {
                    step.step_score = *r2;
                    path_.push_back(std::move(step));
                    std::size_t stack_save = goal_stack_.size();
                    for (auto it = rule.body.rbegin(); it != rule.body.rend(); ++it)
                        goal_stack_.push_back({detail::rename_atom(*it, tag), pg.depth - 1});
                    dfs(*r2);
                    goal_stack_.resize(stack_save);
                    path_.pop_back();
                }
                psi_.truncate(psi_save);
                ++ri;
            }
        }
        goal_stack_.push_back(std::move(pg));
    }

    // Fact heads are ground: goal variables bind, constants compare. Returns
    // the updated score or nullopt once it falls to (or below) the best.
    std::optional<double> unify_fact(int pos, const Atom& goal, double rho, TrailStep& step) {
        const std::array<SymbolId, 3>& syms = kb_->fact_syms[pos];
        for (int i = 0; i < 3; ++i) {
            Term g = psi_.resolve(goal.items[i]);
            if (g.is_var()) {
                psi_.bind(g.var, Term::make_const(syms[i]));
                continue;
            }
            step.pairs.emplace_back(syms[i], g.sym);
            rho = std::min(rho, kernel_value(syms[i], g.sym));
            if (rho <= best_.score) return std::nullopt;
        }
        return rho;
    }

    std::optional<double> unify_rule_head(const Rule& rule, int tag, const Atom& goal, double rho,
                                          TrailStep& step) {
        for (int i = 0; i < 3; ++i) {
            Term h = psi_.resolve(detail::rename_term(rule.head.items[i], tag));
            Term g = psi_.resolve(goal.items[i]);
            if (h.is_var() && g.is_var() && h.var == g.var) continue;
            if (h.is_var()) {
                psi_.bind(h.var, std::move(g));
            } else if (g.is_var()) {
                psi_.bind(g.var, std::move(h));
            } else {
                step.pairs.emplace_back(h.sym, g.sym);
                rho = std::min(rho, kernel_value(h.sym, g.sym));
                if (rho <= best_.score) return std::nullopt;
            }
        }
        return rho;
    }

    // Kernels are symmetric and embeddings frozen within one prove() call,
    // so values memoise by unordered symbol pair.
    double kernel_value(SymbolId a, SymbolId b) {
        if (a == b) return 1.0;
        std::uint64_t lo = static_cast<std::uint32_t>(std::min(a, b));
        std::uint64_t hi = static_cast<std::uint32_t>(std::max(a, b));
        std::uint64_t key = (hi << 32) | lo;
        auto it = kmemo_.find(key);
        if (it != kmemo_.end()) return it->second;
        double v = store_->kernel(a, b);
        kmemo_.emplace(key, v);
        return v;
    }

    const KnowledgeBase* kb_;
    const EmbeddingStore* store_;
    ProverConfig cfg_;
    NeighbourSelector selector_;

    ProveResult best_;
    SubstitutionSet psi_;
    Trail path_;
    std::vector<PendingGoal> goal_stack_;
    int mask_ = -1;
    int rename_seq_ = 0;
    std::unordered_map<std::uint64_t, double> kmemo_;
};

// "1.0" for whole scores, shortest faithful decimal otherwise.
inline std::string format_score(double s) {
    if (s == static_cast<double>(static_cast<long long>(s))) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", s);
        return buf;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", s);
    return buf;
}

inline std::string format_trail(const Trail& trail) {
    if (trail.empty()) return "(no proof)";
    std::string out;
    for (std::size_t i = 0; i < trail.size(); ++i) {
        if (i) out += " -> ";
        out += (trail[i].fact ? "fact" : "rule") + std::to_string(trail[i].ordinal);
    }
    return out;
}

// Chain line plus one score line per step, for --explain output.
inline std::string format_trail_detailed(const Trail& trail) {
    std::ostringstream out;
    out << format_trail(trail) << '\n';
    for (const TrailStep& step : trail)
        out << "  " << (step.fact ? "fact" : "rule") << step.ordinal << " unification score "
            << format_score(step.step_score) << '\n';
    return out.str();
}

}  // namespace ntp
