#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ntp/kb.hpp"
#include "ntp/prover.hpp"
#include "ntp/train.hpp"

namespace ntp {

// Flat key=value run description ('#' comments). Unknown keys and malformed
// values are rejected at load so a stored config replays a run exactly.
struct RunConfig {
    std::string dataset = "kb";  // name stamped into metric records
    std::string train_path, valid_path, test_path, templates_path;
    std::string kb_format = "clauses";  // clauses | tsv

    int dim = 100;
    double mu = 1.0;

    std::string mode = "exhaustive";  // exhaustive | exact-knn | hnsw
    int k = 10;
    int depth = 2;
    int ef_search = 64;
    int hnsw_m = 16;
    int hnsw_efc = 200;

    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 0.001;
    int negatives = 2;
    int rebuild_every = 0;  // 0 = one epoch's worth of batches
    std::string optimizer = "adam";  // adam | sgd

    double min_confidence = 0.5;
    std::uint64_t seed = 0;

    KbFormat format() const {
        if (kb_format == "clauses") return KbFormat::clauses;
        if (kb_format == "tsv") return KbFormat::tsv;
        throw std::runtime_error("bad format: " + kb_format);
    }

    ProveMode prove_mode() const {
        if (mode == "exhaustive") return ProveMode::exhaustive;
        if (mode == "exact-knn") return ProveMode::exact_knn;
        if (mode == "hnsw") return ProveMode::hnsw_knn;
        throw std::runtime_error("bad mode: " + mode + " (want exhaustive|exact-knn|hnsw)");
    }

    ProverConfig prover() const {
        ProverConfig p;
        p.max_depth = depth;
        p.k = k;
        p.mode = prove_mode();
        p.ef_search = ef_search;
        p.hnsw = {hnsw_m, hnsw_efc, seed};
        return p;
    }

    TrainConfig trainer() const {
        TrainConfig t;
        t.epochs = epochs;
        t.batch_size = batch_size;
        t.learning_rate = learning_rate;
        t.negatives_per_positive = negatives;
        t.seed = seed;
        t.rebuild_every = rebuild_every;
        t.prover = prover();
        t.optimizer = optimizer == "sgd" ? Optimizer::Kind::sgd : Optimizer::Kind::adam;
        return t;
    }

    void validate() const {
        if (dim < 1) throw std::runtime_error("dim must be >= 1");
        if (mu <= 0) throw std::runtime_error("mu must be positive");
        if (k < 1) throw std::runtime_error("k must be >= 1");
        if (depth < 1) throw std::runtime_error("depth must be >= 1");
        if (ef_search < 1) throw std::runtime_error("ef_search must be >= 1");
        if (hnsw_m < 2) throw std::runtime_error("hnsw_m must be >= 2");
        if (hnsw_efc < hnsw_m) throw std::runtime_error("hnsw_efc must be >= hnsw_m");
        if (epochs < 0) throw std::runtime_error("epochs must be >= 0");
        if (batch_size < 1) throw std::runtime_error("batch_size must be >= 1");
        if (learning_rate <= 0) throw std::runtime_error("learning_rate must be positive");
        if (negatives < 0) throw std::runtime_error("negatives must be >= 0");
        if (rebuild_every < 0) throw std::runtime_error("rebuild_every must be >= 0");
        if (min_confidence < 0 || min_confidence > 1)
            throw std::runtime_error("min_confidence must be in [0, 1]");
        format();
        prove_mode();
        if (optimizer != "adam" && optimizer != "sgd")
            throw std::runtime_error("bad optimizer: " + optimizer + " (want adam|sgd)");
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string_view::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return std::string(s.substr(a, b - a + 1));
}

template <typename T>
inline T parse_number(const std::string& key, const std::string& value) {
    std::istringstream in(value);
    T out;
    in >> out;
    if (in.fail() || !in.eof())
        throw std::runtime_error("bad value for " + key + ": '" + value + "'");
    return out;
}

}  // namespace detail

inline RunConfig parse_run_config(std::string_view text) {
    RunConfig cfg;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view raw = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                              : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;

        std::size_t comment = raw.find('#');
        if (comment != std::string_view::npos) raw = raw.substr(0, comment);
        std::string line = detail::trim(raw);
        if (line.empty()) continue;

        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": expected key=value");
        std::string key = detail::trim(std::string_view(line).substr(0, eq));
        std::string value = detail::trim(std::string_view(line).substr(eq + 1));

        if (key == "dataset") cfg.dataset = value;
        else if (key == "train") cfg.train_path = value;
        else if (key == "valid") cfg.valid_path = value;
        else if (key == "test") cfg.test_path = value;
        else if (key == "templates") cfg.templates_path = value;
        else if (key == "format") cfg.kb_format = value;
        else if (key == "dim") cfg.dim = detail::parse_number<int>(key, value);
        else if (key == "mu") cfg.mu = detail::parse_number<double>(key, value);
        else if (key == "mode") cfg.mode = value;
        else if (key == "k") cfg.k = detail::parse_number<int>(key, value);
        else if (key == "depth") cfg.depth = detail::parse_number<int>(key, value);
        else if (key == "ef_search") cfg.ef_search = detail::parse_number<int>(key, value);
        else if (key == "hnsw_m") cfg.hnsw_m = detail::parse_number<int>(key, value);
        else if (key == "hnsw_efc") cfg.hnsw_efc = detail::parse_number<int>(key, value);
        else if (key == "epochs") cfg.epochs = detail::parse_number<int>(key, value);
        else if (key == "batch_size") cfg.batch_size = detail::parse_number<int>(key, value);
        else if (key == "learning_rate") cfg.learning_rate = detail::parse_number<double>(key, value);
        else if (key == "negatives") cfg.negatives = detail::parse_number<int>(key, value);
        else if (key == "rebuild_every") cfg.rebuild_every = detail::parse_number<int>(key, value);
        else if (key == "optimizer") cfg.optimizer = value;
        else if (key == "min_confidence") cfg.min_confidence = detail::parse_number<double>(key, value);
        else if (key == "seed") cfg.seed = detail::parse_number<std::uint64_t>(key, value);
        else
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

}  // namespace ntp
