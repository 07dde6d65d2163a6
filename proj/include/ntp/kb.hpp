#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace ntp {

using SymbolId = std::int32_t;

enum class SymbolKind { predicate, constant };

struct ParseError : std::runtime_error {
    int line;
    int column;
    ParseError(int line_, int col_, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line_) + ", col " + std::to_string(col_) +
                             ": " + msg),
          line(line_),
          column(col_) {}
};

// Interned symbol table. Names are unique per kind; ids are dense and stable,
// so they double as row indices into the embedding matrix.
class SymbolTable {
   public:
    struct Entry {
        std::string name;
        SymbolKind kind;
        bool parameterised;  // fresh rule-template slot predicate
    };

    SymbolId intern(std::string_view name, SymbolKind kind) {
        auto& map = kind == SymbolKind::predicate ? pred_ids_ : const_ids_;
        auto it = map.find(std::string(name));
        if (it != map.end()) return it->second;
        SymbolId id = static_cast<SymbolId>(entries_.size());
        entries_.push_back({std::string(name), kind, !name.empty() && name.front() == '#'});
        map.emplace(std::string(name), id);
        return id;
    }

    std::optional<SymbolId> lookup(std::string_view name, SymbolKind kind) const {
        const auto& map = kind == SymbolKind::predicate ? pred_ids_ : const_ids_;
        auto it = map.find(std::string(name));
        if (it == map.end()) return std::nullopt;
        return it->second;
    }

    const Entry& entry(SymbolId id) const { return entries_.at(static_cast<std::size_t>(id)); }
    const std::string& name(SymbolId id) const { return entry(id).name; }
    SymbolKind kind(SymbolId id) const { return entry(id).kind; }
    bool parameterised(SymbolId id) const { return entry(id).parameterised; }
    std::size_t size() const { return entries_.size(); }

    std::vector<SymbolId> ids_of_kind(SymbolKind kind, bool include_parameterised = true) const {
        std::vector<SymbolId> out;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].kind != kind) continue;
            if (!include_parameterised && entries_[i].parameterised) continue;
            out.push_back(static_cast<SymbolId>(i));
        }
        return out;
    }

   private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, SymbolId> pred_ids_;
    std::unordered_map<std::string, SymbolId> const_ids_;
};

// A term is either an interned constant/predicate symbol or a named variable.
// Variable names are local to one clause; the prover renames them on use.
struct Term {
    SymbolId sym = -1;
    std::string var;

    static Term make_const(SymbolId id) {
        Term t;
        t.sym = id;
        return t;
    }
    static Term make_var(std::string name) {
        Term t;
        t.var = std::move(name);
        return t;
    }
    bool is_var() const { return sym < 0; }

    bool operator==(const Term& o) const {
        if (is_var() != o.is_var()) return false;
        return is_var() ? var == o.var : sym == o.sym;
    }
};

// Binary atom laid out as [predicate, subject, object].
struct Atom {
    std::array<Term, 3> items;

    const Term& pred() const { return items[0]; }
    const Term& subj() const { return items[1]; }
    const Term& obj() const { return items[2]; }

    bool ground() const {
        return !items[0].is_var() && !items[1].is_var() && !items[2].is_var();
    }
    bool operator==(const Atom& o) const { return items == o.items; }
};

struct Rule {
    Atom head;
    std::vector<Atom> body;
    int ordinal = 0;  // 1-based position among all clauses, for trail labels

    bool is_fact() const { return body.empty(); }
    bool operator==(const Rule& o) const { return head == o.head && body == o.body; }
};

inline Atom ground_atom(SymbolId p, SymbolId s, SymbolId o) {
    return Atom{{Term::make_const(p), Term::make_const(s), Term::make_const(o)}};
}

// Packed (p, s, o) key for fast fact membership checks. Ids must fit 21 bits.
inline std::uint64_t pack_triple(SymbolId p, SymbolId s, SymbolId o) {
    constexpr std::uint64_t kMax = 1ull << 21;
    std::uint64_t up = static_cast<std::uint64_t>(p), us = static_cast<std::uint64_t>(s),
                  uo = static_cast<std::uint64_t>(o);
    if (up >= kMax || us >= kMax || uo >= kMax)
        throw std::runtime_error("symbol id exceeds packed-triple capacity");
    return (up << 42) | (us << 21) | uo;
}

class KnowledgeBase {
   public:
    SymbolTable vocab;
    std::vector<Rule> facts;
    std::vector<Rule> rules;
    std::vector<std::string> warnings;

    // facts mirrored as id triples for scan-heavy code paths
    std::vector<std::array<SymbolId, 3>> fact_syms;

    // Returns false (with a warning) on duplicates.
    bool add_fact(Rule f) {
        SymbolId p = f.head.pred().sym, s = f.head.subj().sym, o = f.head.obj().sym;
        std::uint64_t key = pack_triple(p, s, o);
        if (fact_keys_.count(key)) {
            warnings.push_back("duplicate fact dropped: " + vocab.name(p) + "(" + vocab.name(s) +
                               ", " + vocab.name(o) + ")");
            return false;
        }
        fact_keys_.emplace(key, static_cast<int>(facts.size()));
        f.ordinal = next_ordinal_++;
        fact_syms.push_back({p, s, o});
        facts.push_back(std::move(f));
        return true;
    }

    void add_rule(Rule r) {
        r.ordinal = next_ordinal_++;
        rules.push_back(std::move(r));
    }

    bool has_fact(SymbolId p, SymbolId s, SymbolId o) const {
        return fact_keys_.count(pack_triple(p, s, o)) != 0;
    }

    // Position in `facts` of a ground triple, or -1.
    int fact_position(SymbolId p, SymbolId s, SymbolId o) const {
        auto it = fact_keys_.find(pack_triple(p, s, o));
        return it == fact_keys_.end() ? -1 : it->second;
    }

    std::string clause_label(bool fact, std::size_t index) const {
        const Rule& r = fact ? facts.at(index) : rules.at(index);
        return (fact ? "fact" : "rule") + std::to_string(r.ordinal);
    }

   private:
    std::unordered_map<std::uint64_t, int> fact_keys_;
    int next_ordinal_ = 1;
};

namespace detail {

inline bool is_ident_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '#' || c == '-' || c == '.' || c == '\'';
}

inline bool is_variable_name(std::string_view s) { return !s.empty() && s[0] >= 'A' && s[0] <= 'Z'; }

// Single-line tokenizer for the clause grammar.
class LineLexer {
   public:
    LineLexer(std::string_view text, int line_no) : text_(text), line_(line_no) {}

    void skip_ws() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
    }

    bool at_end() {
        skip_ws();
        return pos_ >= text_.size();
    }

    int column() const { return static_cast<int>(pos_) + 1; }
    int line() const { return line_; }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] != c)
            throw ParseError(line_, column(), std::string("expected '") + c + "'");
        ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    bool accept_str(std::string_view s) {
        skip_ws();
        if (text_.substr(pos_, s.size()) == s) {
            pos_ += s.size();
            return true;
        }
        return false;
    }

    std::string ident() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
        if (pos_ == start) throw ParseError(line_, column(), "expected identifier");
        return std::string(text_.substr(start, pos_ - start));
    }

    std::string rest() const { return std::string(text_.substr(pos_)); }

   private:
    std::string_view text_;
    std::size_t pos_ = 0;
    int line_;
};

inline Term parse_term(LineLexer& lex, SymbolTable& vocab) {
    int col = lex.column();
    std::string id = lex.ident();
    if (id.find('#') != std::string::npos)
        throw ParseError(lex.line(), col, "'#' is reserved for template slots");
    if (is_variable_name(id)) return Term::make_var(std::move(id));
    return Term::make_const(vocab.intern(id, SymbolKind::constant));
}

inline Atom parse_atom(LineLexer& lex, SymbolTable& vocab) {
    int col = lex.column();
    std::string pred = lex.ident();
    if (is_variable_name(pred)) throw ParseError(lex.line(), col, "predicate cannot be a variable");
    if (pred.find('#') != std::string::npos)
        throw ParseError(lex.line(), col, "'#' is reserved for template slots");
    lex.expect('(');
    std::vector<Term> args;
    args.push_back(parse_term(lex, vocab));
    while (lex.accept(',')) args.push_back(parse_term(lex, vocab));
    lex.expect(')');
    if (args.size() != 2)
        throw ParseError(lex.line(), col,
                         "arity must be 2, got " + std::to_string(args.size()));
    Atom a;
    a.items[0] = Term::make_const(vocab.intern(pred, SymbolKind::predicate));
    a.items[1] = std::move(args[0]);
    a.items[2] = std::move(args[1]);
    return a;
}

inline void collect_vars(const Atom& a, std::vector<std::string>& out) {
    for (const Term& t : a.items)
        if (t.is_var()) out.push_back(t.var);
}

inline void check_rule_vars(const Rule& r, int line_no) {
    std::vector<std::string> head_vars;
    collect_vars(r.head, head_vars);
    std::unordered_map<std::string, int> body_counts;
    for (const Atom& b : r.body) {
        std::vector<std::string> vs;
        collect_vars(b, vs);
        for (auto& v : vs) ++body_counts[v];
    }
    for (const auto& [v, n] : body_counts) {
        bool in_head = std::find(head_vars.begin(), head_vars.end(), v) != head_vars.end();
        if (!in_head && n < 2)
            throw ParseError(line_no, 1, "body variable " + v + " is neither in the head nor shared");
    }
}

}  // namespace detail

enum class KbFormat { clauses, tsv };

// Parses `p(a, b).` facts and `h(X, Y) :- b1(X, Z), b2(Z, Y).` rules, one
// clause per line, '%' comments. TSV mode takes subject<TAB>predicate<TAB>object.
inline KnowledgeBase parse_kb(std::string_view text, KbFormat format = KbFormat::clauses) {
    KnowledgeBase kb;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                               : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;

        if (format == KbFormat::tsv) {
            if (line.empty()) continue;
            std::size_t t1 = line.find('\t');
            std::size_t t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
            if (t1 == std::string_view::npos || t2 == std::string_view::npos)
                throw ParseError(line_no, 1, "expected subject<TAB>predicate<TAB>object");
            std::string_view s = line.substr(0, t1);
            std::string_view p = line.substr(t1 + 1, t2 - t1 - 1);
            std::string_view o = line.substr(t2 + 1);
            while (!o.empty() && (o.back() == '\r' || o.back() == ' ')) o.remove_suffix(1);
            if (s.empty() || p.empty() || o.empty())
                throw ParseError(line_no, 1, "empty field in TSV triple");
            Rule f;
            f.head.items[0] = Term::make_const(kb.vocab.intern(p, SymbolKind::predicate));
            f.head.items[1] = Term::make_const(kb.vocab.intern(s, SymbolKind::constant));
            f.head.items[2] = Term::make_const(kb.vocab.intern(o, SymbolKind::constant));
            kb.add_fact(std::move(f));
            continue;
        }

        std::size_t comment = line.find('%');
        if (comment != std::string_view::npos) line = line.substr(0, comment);
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
            line.remove_suffix(1);
        if (line.empty()) continue;

        detail::LineLexer lex(line, line_no);
        Rule r;
        r.head = detail::parse_atom(lex, kb.vocab);
        if (lex.accept_str(":-")) {
            r.body.push_back(detail::parse_atom(lex, kb.vocab));
            while (lex.accept(',')) r.body.push_back(detail::parse_atom(lex, kb.vocab));
        }
        lex.expect('.');
        if (!lex.at_end()) throw ParseError(line_no, lex.column(), "trailing text after clause");

        if (r.is_fact()) {
            if (!r.head.ground()) throw ParseError(line_no, 1, "variable in fact");
            kb.add_fact(std::move(r));
        } else {
            detail::check_rule_vars(r, line_no);
            kb.add_rule(std::move(r));
        }
    }
    return kb;
}

inline std::string render_term(const Term& t, const SymbolTable& vocab) {
    return t.is_var() ? t.var : vocab.name(t.sym);
}

inline std::string render_atom(const Atom& a, const SymbolTable& vocab) {
    return render_term(a.pred(), vocab) + "(" + render_term(a.subj(), vocab) + ", " +
           render_term(a.obj(), vocab) + ")";
}

inline std::string render_rule(const Rule& r, const SymbolTable& vocab, bool trailing_dot = true) {
    std::string out = render_atom(r.head, vocab);
    for (std::size_t i = 0; i < r.body.size(); ++i)
        out += (i == 0 ? " :- " : ", ") + render_atom(r.body[i], vocab);
    if (trailing_dot) out += ".";
    return out;
}

// Clause-order rendering; parse_kb(render_kb(kb)) reproduces kb exactly.
inline std::string render_kb(const KnowledgeBase& kb) {
    std::vector<std::pair<int, const Rule*>> ordered;
    for (const Rule& f : kb.facts) ordered.emplace_back(f.ordinal, &f);
    for (const Rule& r : kb.rules) ordered.emplace_back(r.ordinal, &r);
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string out;
    for (const auto& [ord, r] : ordered) out += render_rule(*r, kb.vocab) + "\n";
    return out;
}

// Ordered variable bindings. Insertion order is preserved so proofs replay
// identically across runs.
class SubstitutionSet {
   public:
    const Term* find(const std::string& var) const {
        for (const auto& [v, t] : bindings_)
            if (v == var) return &t;
        return nullptr;
    }

    void bind(const std::string& var, Term t) {
        if (find(var)) throw std::logic_error("variable bound twice: " + var);
        bindings_.emplace_back(var, std::move(t));
    }

    // Follows bindings transitively; throws on cyclic substitutions.
    Term resolve(const Term& t) const {
        Term cur = t;
        std::size_t steps = 0;
        while (cur.is_var()) {
            const Term* next = find(cur.var);
            if (!next) break;
            cur = *next;
            if (++steps > bindings_.size()) throw std::runtime_error("cycle in substitution set");
        }
        return cur;
    }

    std::size_t size() const { return bindings_.size(); }
    void truncate(std::size_t n) { bindings_.resize(n); }
    const std::vector<std::pair<std::string, Term>>& bindings() const { return bindings_; }

   private:
    std::vector<std::pair<std::string, Term>> bindings_;
};

// Replaces every bound variable by its transitively resolved binding.
inline Atom substitute(const Atom& a, const SubstitutionSet& s) {
    Atom out = a;
    for (Term& t : out.items)
        if (t.is_var()) t = s.resolve(t);
    return out;
}

// Rule shape with parameterised predicate slots #1..#m.
struct TemplateAtom {
    int slot = 0;  // 1-based slot index in predicate position
    std::array<Term, 2> args;
};

struct RuleTemplate {
    int count = 0;
    TemplateAtom head;
    std::vector<TemplateAtom> body;
    int num_slots = 0;
};

namespace detail {

inline TemplateAtom parse_template_atom(LineLexer& lex, SymbolTable& vocab) {
    int col = lex.column();
    std::string pred = lex.ident();
    if (pred.size() < 2 || pred[0] != '#')
        throw ParseError(lex.line(), col, "template predicate must be a #N slot");
    int slot = 0;
    for (std::size_t i = 1; i < pred.size(); ++i) {
        if (pred[i] < '0' || pred[i] > '9')
            throw ParseError(lex.line(), col, "bad slot index in " + pred);
        slot = slot * 10 + (pred[i] - '0');
    }
    if (slot < 1) throw ParseError(lex.line(), col, "slot indices start at 1");
    lex.expect('(');
    std::vector<Term> args;
    args.push_back(parse_term(lex, vocab));
    while (lex.accept(',')) args.push_back(parse_term(lex, vocab));
    lex.expect(')');
    if (args.size() != 2)
        throw ParseError(lex.line(), col, "arity must be 2, got " + std::to_string(args.size()));
    TemplateAtom a;
    a.slot = slot;
    a.args[0] = std::move(args[0]);
    a.args[1] = std::move(args[1]);
    return a;
}

}  // namespace detail

// Lines of the form `N  #1(X, Y) :- #2(Y, X).` where N is the number of
// instantiations of the shape. Slot indices must be contiguous from 1.
inline std::vector<RuleTemplate> parse_templates(std::string_view text, SymbolTable& vocab) {
    std::vector<RuleTemplate> out;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                               : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;

        std::size_t comment = line.find('%');
        if (comment != std::string_view::npos) line = line.substr(0, comment);
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
            line.remove_suffix(1);
        if (line.empty()) continue;

        detail::LineLexer lex(line, line_no);
        lex.skip_ws();
        std::string count_tok = lex.ident();
        long count = 0;
        for (char c : count_tok) {
            if (c < '0' || c > '9') throw ParseError(line_no, 1, "expected instantiation count");
            count = count * 10 + (c - '0');
        }
        if (count < 1) throw ParseError(line_no, 1, "instantiation count must be >= 1");

        RuleTemplate t;
        t.count = static_cast<int>(count);
        t.head = detail::parse_template_atom(lex, vocab);
        if (!lex.accept_str(":-"))
            throw ParseError(line_no, lex.column(), "template must have a body");
        t.body.push_back(detail::parse_template_atom(lex, vocab));
        while (lex.accept(',')) t.body.push_back(detail::parse_template_atom(lex, vocab));
        lex.expect('.');

        int max_slot = t.head.slot;
        std::unordered_set<int> seen{t.head.slot};
        for (const auto& b : t.body) {
            seen.insert(b.slot);
            max_slot = std::max(max_slot, b.slot);
        }
        for (int i = 1; i <= max_slot; ++i)
            if (!seen.count(i))
                throw ParseError(line_no, 1, "slot #" + std::to_string(i) + " missing");
        t.num_slots = max_slot;
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace ntp
