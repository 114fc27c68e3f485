#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "matte/cli.hpp"
#include "matte/types.hpp"

namespace {

void add_common(CLI::App* app, matte::cli::CommonOpts& opts, std::uint64_t& seed_slot,
                bool& seed_set) {
  app->add_option("--config", opts.config_path, "JSON config path (defaults when omitted)");
  app->add_option("--out", opts.out_dir, "output directory")->required();
  app->add_option("--seed", seed_slot, "override every section seed")
      ->each([&seed_set](const std::string&) { seed_set = true; });
  app->add_flag("--quiet", opts.quiet, "suppress progress output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic laboratory for sparsity-identified content/style models"};
  app.require_subcommand(1);

  matte::cli::CommonOpts opts;
  std::uint64_t seed_slot = 0;
  bool seed_set = false;
  std::string dataset_dir, checkpoint_dir, support_path;
  std::string eq4_mode = "auto";
  bool allow_violations = false;

  CLI::App* gen = app.add_subcommand("gen", "generate a dataset");
  add_common(gen, opts, seed_slot, seed_set);

  CLI::App* tr = app.add_subcommand("train", "train a model on a dataset");
  add_common(tr, opts, seed_slot, seed_set);
  tr->add_option("--data", dataset_dir, "dataset directory")->required();

  CLI::App* ev = app.add_subcommand("eval", "identifiability report for a checkpoint");
  add_common(ev, opts, seed_slot, seed_set);
  ev->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  ev->add_option("--data", dataset_dir, "dataset directory")->required();

  CLI::App* iv = app.add_subcommand("intervene", "style-flip NLL comparison");
  add_common(iv, opts, seed_slot, seed_set);
  iv->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  iv->add_option("--data", dataset_dir, "dataset directory")->required();

  CLI::App* th = app.add_subcommand("theory", "exhaustive theorem check on a support matrix");
  add_common(th, opts, seed_slot, seed_set);
  th->add_option("--support", support_path, "support-matrix JSON path")->required();
  th->add_option("--eq4", eq4_mode, "auto | on | off");
  th->add_flag("--allow-violations", allow_violations,
               "record assumption failures instead of refusing");

  CLI::App* ab = app.add_subcommand("ablate", "train and score the five ablation rows");
  add_common(ab, opts, seed_slot, seed_set);
  ab->add_option("--data", dataset_dir, "dataset directory")->required();

  CLI::App* pd = app.add_subcommand("print-defaults", "print the default config JSON");
  pd->add_option("--config", opts.config_path, "ignored");
  pd->add_option("--out", opts.out_dir, "ignored");
  pd->add_flag("--quiet", opts.quiet, "ignored");

  CLI11_PARSE(app, argc, argv);
  if (seed_set) opts.seed = seed_slot;

  try {
    if (gen->parsed()) matte::cli::cmd_gen(opts);
    if (tr->parsed()) matte::cli::cmd_train(opts, dataset_dir);
    if (ev->parsed()) matte::cli::cmd_eval(opts, checkpoint_dir, dataset_dir);
    if (iv->parsed()) matte::cli::cmd_intervene(opts, checkpoint_dir, dataset_dir);
    if (th->parsed()) matte::cli::cmd_theory(opts, support_path, eq4_mode, allow_violations);
    if (ab->parsed()) matte::cli::cmd_ablate(opts, dataset_dir);
    if (pd->parsed()) matte::cli::cmd_print_defaults();
  } catch (const matte::ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 1;
  } catch (const matte::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
