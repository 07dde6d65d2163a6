#pragma once

#include <algorithm>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntp/embed.hpp"
#include "ntp/kb.hpp"

namespace ntp {

// Deterministic name for the fresh predicate filling slot `slot` of copy
// `copy` of template `tmpl` (all 1-based). The '#' prefix marks the symbol
// parameterised and keeps it out of the clause grammar.
inline std::string slot_symbol_name(int tmpl, int copy, int slot) {
    return "#" + std::to_string(tmpl) + "_" + std::to_string(copy) + "_" + std::to_string(slot);
}

// Expands each template into `count` rule copies whose slots become fresh
// parameterised predicate symbols, appended to kb.rules. Naming is a pure
// function of (template index, copy, slot), so a later run over the same kb +
// templates reproduces the vocabulary and a checkpoint can be re-attached.
// When `store` is given, each fresh symbol gets a seeded Gaussian row;
// pass nullptr when the store is initialised afterwards over the full vocab.
inline std::vector<Rule> instantiate_templates(const std::vector<RuleTemplate>& templates,
                                               KnowledgeBase& kb, EmbeddingStore* store,
                                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Rule> out;
    for (std::size_t ti = 0; ti < templates.size(); ++ti) {
        const RuleTemplate& t = templates[ti];
        for (int copy = 1; copy <= t.count; ++copy) {
            std::vector<SymbolId> slot_syms(static_cast<std::size_t>(t.num_slots) + 1, -1);
            for (int slot = 1; slot <= t.num_slots; ++slot) {
                std::string name = slot_symbol_name(static_cast<int>(ti) + 1, copy, slot);
                std::size_t before = kb.vocab.size();
                SymbolId id = kb.vocab.intern(name, SymbolKind::predicate);
                if (store && kb.vocab.size() > before) {
                    if (store->size() != static_cast<std::size_t>(id))
                        throw std::logic_error("embedding store misaligned with vocabulary");
                    store->append_gaussian_rows(1, rng);
                }
                slot_syms[static_cast<std::size_t>(slot)] = id;
            }
            auto materialise = [&](const TemplateAtom& ta) {
                return Atom{{Term::make_const(slot_syms[static_cast<std::size_t>(ta.slot)]),
                             ta.args[0], ta.args[1]}};
            };
            Rule r;
            r.head = materialise(t.head);
            for (const TemplateAtom& b : t.body) r.body.push_back(materialise(b));
            out.push_back(r);
            kb.add_rule(out.back());
        }
    }
    return out;
}

struct DecodedRule {
    Rule rule;  // slot predicates replaced by their decoded symbols
    double confidence = 0.0;
    int source_index = 0;  // position in kb.rules
};

// Decodes every parameterised rule: each slot embedding maps to the nearest
// non-parameterised predicate by kernel (equivalently nearest in L2), and the
// rule's confidence is the minimum slot kernel. Rules at or above
// `min_confidence` are returned sorted by descending confidence.
inline std::vector<DecodedRule> extract_rules(const KnowledgeBase& kb, const EmbeddingStore& store,
                                              double min_confidence) {
    std::vector<SymbolId> candidates =
        kb.vocab.ids_of_kind(SymbolKind::predicate, /*include_parameterised=*/false);
    std::vector<DecodedRule> out;
    for (std::size_t ri = 0; ri < kb.rules.size(); ++ri) {
        const Rule& r = kb.rules[ri];
        bool parameterised = kb.vocab.parameterised(r.head.pred().sym);
        for (const Atom& a : r.body) parameterised = parameterised || kb.vocab.parameterised(a.pred().sym);
        if (!parameterised) continue;

        DecodedRule d;
        d.rule = r;
        d.confidence = 1.0;
        d.source_index = static_cast<int>(ri);
        bool decodable = true;
        auto decode_atom = [&](Atom& a) {
            SymbolId slot = a.pred().sym;
            if (!kb.vocab.parameterised(slot)) return;
            if (candidates.empty()) {
                decodable = false;
                return;
            }
            SymbolId best = candidates[0];
            double best_k = store.kernel(slot, candidates[0]);
            for (std::size_t i = 1; i < candidates.size(); ++i) {
                double k = store.kernel(slot, candidates[i]);
                if (k > best_k) {
                    best_k = k;
                    best = candidates[i];
                }
            }
            a.items[0] = Term::make_const(best);
            d.confidence = std::min(d.confidence, best_k);
        };
        decode_atom(d.rule.head);
        for (Atom& b : d.rule.body) decode_atom(b);
        if (decodable && d.confidence >= min_confidence) out.push_back(std::move(d));
    }
    std::sort(out.begin(), out.end(), [](const DecodedRule& a, const DecodedRule& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.source_index < b.source_index;
    });
    return out;
}

// `<confidence, 3 decimals><TAB><clause text>` per rule.
inline std::string render_decoded_rules(const std::vector<DecodedRule>& rules,
                                        const SymbolTable& vocab) {
    std::string out;
    char buf[32];
    for (const DecodedRule& d : rules) {
        std::snprintf(buf, sizeof buf, "%.3f", d.confidence);
        out += std::string(buf) + "\t" + render_rule(d.rule, vocab, /*trailing_dot=*/false) + "\n";
    }
    return out;
}

}  // namespace ntp
