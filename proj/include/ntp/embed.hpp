#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntp/kb.hpp"

namespace ntp {

inline double squared_l2(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("vector dimension mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double diff = x[i] - y[i];
        d += diff * diff;
    }
    return d;
}

// exp(-||x-y||^2 / (2 mu^2)); in (0,1], equal to 1 iff x == y, and monotone
// decreasing in the distance, which is what lets L2 nearest-neighbour search
// stand in for maximum-kernel search.
inline double rbf_kernel(std::span<const double> x, std::span<const double> y, double mu) {
    return std::exp(-squared_l2(x, y) / (2.0 * mu * mu));
}

// One trainable vector per interned symbol, indexed by symbol id.
class EmbeddingStore {
   public:
    EmbeddingStore() = default;
    EmbeddingStore(int dim, double mu) : dim_(dim), mu_(mu) {
        if (dim < 1) throw std::invalid_argument("dim must be >= 1");
        if (mu <= 0.0) throw std::invalid_argument("bandwidth must be positive");
    }

    int dim() const { return dim_; }
    double mu() const { return mu_; }
    std::size_t size() const { return dim_ > 0 ? data_.size() / dim_ : 0; }

    std::span<double> vec(SymbolId id) {
        return {data_.data() + static_cast<std::size_t>(id) * dim_, static_cast<std::size_t>(dim_)};
    }
    std::span<const double> vec(SymbolId id) const {
        return {data_.data() + static_cast<std::size_t>(id) * dim_, static_cast<std::size_t>(dim_)};
    }

    double kernel(SymbolId a, SymbolId b) const { return rbf_kernel(vec(a), vec(b), mu_); }

    // Appends `count` rows drawn i.i.d. from N(0, 1).
    void append_gaussian_rows(std::size_t count, std::mt19937_64& rng) {
        std::normal_distribution<double> normal(0.0, 1.0);
        data_.reserve(data_.size() + count * dim_);
        for (std::size_t i = 0; i < count * static_cast<std::size_t>(dim_); ++i)
            data_.push_back(normal(rng));
    }

    void set_vec(SymbolId id, std::span<const double> v) {
        if (static_cast<int>(v.size()) != dim_) throw std::invalid_argument("dimension mismatch");
        std::copy(v.begin(), v.end(), vec(id).begin());
    }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

   private:
    int dim_ = 0;
    double mu_ = 1.0;
    std::vector<double> data_;
};

// Deterministic Gaussian initialisation, one vector per vocab symbol.
inline EmbeddingStore init_embeddings(const SymbolTable& vocab, int dim, std::uint64_t seed,
                                      double mu = 1.0) {
    EmbeddingStore store(dim, mu);
    std::mt19937_64 rng(seed);
    store.append_gaussian_rows(vocab.size(), rng);
    return store;
}

// ---- checkpoint io ---------------------------------------------------------
//
// Text format, one symbol per line, coordinates as hex floats so values
// round-trip exactly:
//
//   ntp-checkpoint v1
//   dim <d>
//   mu <hexfloat>
//   symbols <n>
//   <predicate|constant> <name> <c0> <c1> ... <c{d-1}>

inline void save_checkpoint(const std::string& path, const EmbeddingStore& store,
                            const SymbolTable& vocab) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    char buf[64];
    out << "ntp-checkpoint v1\n";
    out << "dim " << store.dim() << "\n";
    std::snprintf(buf, sizeof buf, "%a", store.mu());
    out << "mu " << buf << "\n";
    out << "symbols " << vocab.size() << "\n";
    for (std::size_t id = 0; id < vocab.size(); ++id) {
        const auto& e = vocab.entry(static_cast<SymbolId>(id));
        out << (e.kind == SymbolKind::predicate ? "predicate " : "constant ") << e.name;
        for (double c : store.vec(static_cast<SymbolId>(id))) {
            std::snprintf(buf, sizeof buf, " %a", c);
            out << buf;
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

// Loads a checkpoint against an existing vocab (typically rebuilt from the
// same KB and templates). Every vocab symbol must be present.
inline EmbeddingStore load_checkpoint(const std::string& path, const SymbolTable& vocab) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string header;
    std::getline(in, header);
    if (header != "ntp-checkpoint v1")
        throw std::runtime_error("bad checkpoint header in " + path);

    std::string key;
    int dim = 0;
    std::string mu_str;
    std::size_t n = 0;
    in >> key >> dim;
    if (key != "dim" || dim < 1) throw std::runtime_error("bad checkpoint dim line");
    in >> key >> mu_str;
    if (key != "mu") throw std::runtime_error("bad checkpoint mu line");
    double mu = std::strtod(mu_str.c_str(), nullptr);
    in >> key >> n;
    if (key != "symbols") throw std::runtime_error("bad checkpoint symbols line");

    EmbeddingStore store(dim, mu);
    std::mt19937_64 unused_rng(0);
    store.append_gaussian_rows(vocab.size(), unused_rng);

    std::vector<bool> seen(vocab.size(), false);
    std::string kind_str, name, tok;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(in >> kind_str >> name))
            throw std::runtime_error("truncated checkpoint: " + path);
        SymbolKind kind =
            kind_str == "predicate" ? SymbolKind::predicate : SymbolKind::constant;
        auto id = vocab.lookup(name, kind);
        std::vector<double> v(dim);
        for (int j = 0; j < dim; ++j) {
            if (!(in >> tok)) throw std::runtime_error("truncated checkpoint vector: " + name);
            v[j] = std::strtod(tok.c_str(), nullptr);
        }
        if (id) {
            store.set_vec(*id, v);
            seen[static_cast<std::size_t>(*id)] = true;
        }
        // symbols absent from the vocab are skipped; missing ones are an error below
    }
    for (std::size_t id = 0; id < vocab.size(); ++id)
        if (!seen[id])
            throw std::runtime_error("checkpoint/vocab mismatch: no vector for symbol '" +
                                     vocab.name(static_cast<SymbolId>(id)) + "'");
    return store;
}

}  // namespace ntp
