#pragma once

#include <optional>
#include <string>

#include "matte/config.hpp"

namespace matte::cli {

struct CommonOpts {
  std::string config_path;  // empty = built-in defaults
  std::string out_dir;
  std::optional<std::uint64_t> seed;  // overrides every section seed
  bool quiet = false;
};

RunConfig load_config(const CommonOpts& opts);

// Each command writes its outputs plus a manifest under opts.out_dir and
// throws ValidationError / NumericError on failure; the binary maps those to
// exit codes 1 and 2.
void cmd_gen(const CommonOpts& opts);
void cmd_train(const CommonOpts& opts, const std::string& dataset_dir);
void cmd_eval(const CommonOpts& opts, const std::string& checkpoint_dir,
              const std::string& dataset_dir);
void cmd_intervene(const CommonOpts& opts, const std::string& checkpoint_dir,
                   const std::string& dataset_dir);
// eq4_mode: "auto" enforces the overlap objective exactly when Assumption 2
// holds; "on"/"off" force it. allow_violations drops the assumption
// preconditions and merely records them, for probing counterexamples.
void cmd_theory(const CommonOpts& opts, const std::string& support_json_path,
                const std::string& eq4_mode, bool allow_violations);
void cmd_ablate(const CommonOpts& opts, const std::string& dataset_dir);
void cmd_print_defaults();

}  // namespace matte::cli
