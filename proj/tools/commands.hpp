// Subcommand implementations, kept in their own translation unit so the hot
// library code is compiled apart from the CLI11 option machinery.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cli {

// Values for config keys that may be overridden on the command line; the
// *_set flags record whether the user actually passed the option.
struct Overrides {
    std::uint64_t seed = 0;
    int k = 0;
    std::string mode;
    bool seed_set = false, k_set = false, mode_set = false;
};

int cmd_train(const std::string& config_path, const Overrides& ov, std::string checkpoint_path,
              std::string metrics_path);

int cmd_eval(const std::string& config_path, const Overrides& ov, const std::string& ckpt,
             const std::string& task, bool raw_only, bool filtered_only, std::string metrics_path);

int cmd_rules(const std::string& config_path, const Overrides& ov, const std::string& ckpt,
              double min_confidence, bool min_confidence_set);

int cmd_ann_bench(int n, int dim, int queries, int k, int ef, int m, int efc, std::uint64_t seed);

int cmd_prove(const std::string& kb_path, const std::string& query_text,
              const std::string& templates_path, const std::string& ckpt, int dim, double mu,
              std::uint64_t seed, int depth, int k, const std::string& mode, bool explain,
              const std::vector<std::string>& ties);

}  // namespace cli
