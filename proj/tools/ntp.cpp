// Command-line driver: train / eval / rules / ann-bench / prove over a
// key=value run config, with --seed/--k/--mode overrides taking precedence.
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

// CLI11 wiring for the shared --seed/--k/--mode options; harvest() records
// which of them the user actually passed.
struct OverrideOptions {
    cli::Overrides values;
    CLI::Option *seed_opt = nullptr, *k_opt = nullptr, *mode_opt = nullptr;

    void attach(CLI::App* cmd) {
        seed_opt = cmd->add_option("--seed", values.seed, "RNG seed (overrides config)");
        k_opt = cmd->add_option("--k", values.k, "fact neighbours per goal (overrides config)");
        mode_opt = cmd->add_option("--mode", values.mode,
                                   "fact unification mode: exhaustive|exact-knn|hnsw");
    }

    cli::Overrides harvest() const {
        cli::Overrides ov = values;
        ov.seed_set = seed_opt->count() > 0;
        ov.k_set = k_opt->count() > 0;
        ov.mode_set = mode_opt->count() > 0;
        return ov;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neural theorem prover with k-NN fact retrieval"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train embeddings on a KB");
    std::string train_config, train_ckpt, train_metrics;
    train->add_option("--config", train_config, "run config file")->required();
    train->add_option("--checkpoint", train_ckpt, "checkpoint output path");
    train->add_option("--metrics", train_metrics, "metrics JSON-lines output path");
    OverrideOptions train_ov;
    train_ov.attach(train);

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_config, eval_ckpt, eval_task = "ranking", eval_metrics;
    bool eval_raw = false, eval_filtered = false;
    eval->add_option("--config", eval_config, "run config file")->required();
    eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
    eval->add_option("--task", eval_task, "ranking|auc-pr|classification");
    eval->add_flag("--raw", eval_raw, "raw ranking only");
    eval->add_flag("--filtered", eval_filtered, "filtered ranking only");
    eval->add_option("--metrics", eval_metrics, "also write metric records here");
    OverrideOptions eval_ov;
    eval_ov.attach(eval);

    // rules
    auto* rules = app.add_subcommand("rules", "decode induced rules");
    std::string rules_config, rules_ckpt;
    double min_confidence = 0.5;
    rules->add_option("--config", rules_config, "run config file")->required();
    rules->add_option("--checkpoint", rules_ckpt, "trained checkpoint")->required();
    auto* minc_opt =
        rules->add_option("--min-confidence", min_confidence, "confidence cutoff (default 0.5)");
    OverrideOptions rules_ov;
    rules_ov.attach(rules);

    // ann-bench
    auto* bench = app.add_subcommand("ann-bench", "HNSW vs brute-force benchmark");
    int bn = 10000, bdim = 64, bq = 1000, bk = 10, bef = 64, bm = 16, befc = 200;
    std::uint64_t bseed = 0;
    bench->add_option("--n", bn, "indexed vectors");
    bench->add_option("--dim", bdim, "vector dimension");
    bench->add_option("--queries", bq, "query count");
    bench->add_option("--k", bk, "neighbours per query");
    bench->add_option("--ef", bef, "ef_search");
    bench->add_option("--M", bm, "HNSW M");
    bench->add_option("--efc", befc, "HNSW ef_construction");
    bench->add_option("--seed", bseed, "RNG seed");

    // prove
    auto* prove = app.add_subcommand("prove", "prove a single query");
    std::string pv_kb, pv_query, pv_templates, pv_ckpt, pv_mode = "exhaustive";
    int pv_dim = 100, pv_depth = 2, pv_k = 10;
    double pv_mu = 1.0;
    std::uint64_t pv_seed = 0;
    bool pv_explain = false;
    std::vector<std::string> pv_ties;
    prove->add_option("--kb", pv_kb, "knowledge base file")->required();
    prove->add_option("--query", pv_query, "goal atom, e.g. 'grandpaOf(abe, bart)'")->required();
    prove->add_option("--templates", pv_templates, "rule template file");
    prove->add_option("--checkpoint", pv_ckpt, "load embeddings from checkpoint");
    prove->add_option("--dim", pv_dim, "embedding dimension for fresh init");
    prove->add_option("--mu", pv_mu, "RBF kernel bandwidth");
    prove->add_option("--seed", pv_seed, "RNG seed for fresh init");
    prove->add_option("--depth", pv_depth, "max proof depth");
    prove->add_option("--k", pv_k, "fact neighbours per goal");
    prove->add_option("--mode", pv_mode, "exhaustive|exact-knn|hnsw");
    prove->add_flag("--explain", pv_explain, "per-step unification scores");
    prove->add_option("--tie", pv_ties, "copy embeddings, A=B sets theta_A := theta_B");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed())
            return cli::cmd_train(train_config, train_ov.harvest(), train_ckpt, train_metrics);
        if (eval->parsed())
            return cli::cmd_eval(eval_config, eval_ov.harvest(), eval_ckpt, eval_task, eval_raw,
                                 eval_filtered, eval_metrics);
        if (rules->parsed())
            return cli::cmd_rules(rules_config, rules_ov.harvest(), rules_ckpt, min_confidence,
                                  minc_opt->count() > 0);
        if (bench->parsed()) return cli::cmd_ann_bench(bn, bdim, bq, bk, bef, bm, befc, bseed);
        if (prove->parsed())
            return cli::cmd_prove(pv_kb, pv_query, pv_templates, pv_ckpt, pv_dim, pv_mu, pv_seed,
                                  pv_depth, pv_k, pv_mode, pv_explain, pv_ties);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
