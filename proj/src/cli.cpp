#include "matte/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>

#include "json.hpp"
#include "matte/intervene.hpp"
#include "matte/io.hpp"
#include "matte/metrics.hpp"

namespace matte::cli {

namespace {

using Clock = std::chrono::steady_clock;

long ms_since(Clock::time_point t0) {
  return static_cast<long>(
      std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count());
}

void say(const CommonOpts& opts, const std::string& line) {
  if (!opts.quiet) std::printf("%s\n", line.c_str());
}

RunConfig dataset_config(const std::string& dataset_dir) {
  check_manifest(dataset_dir);
  return run_config_from_json(io::read_text(dataset_dir + "/config.json"));
}

ModelParams build_model(const RunConfig& cfg) {
  return init_model(cfg.process.partition, cfg.process.n_domains, cfg.process.u_dim, cfg.arch,
                    cfg.train.seed);
}

TrainResult run_training(const CommonOpts& opts, const RunConfig& cfg, const TrainData& data) {
  const ModelParams p0 = build_model(cfg);
  TrainResult res = train(p0, data, cfg.train);
  for (const EpochLog& e : res.log) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "epoch %2d  total %10.4f  val_recon %10.4f  val_kl %8.4f",
                  e.epoch, e.loss.total, e.val_recon, e.val_kl);
    say(opts, buf);
  }
  return res;
}

}  // namespace

RunConfig load_config(const CommonOpts& opts) {
  RunConfig cfg = opts.config_path.empty()
                      ? default_run_config()
                      : run_config_from_json(io::read_text(opts.config_path));
  if (opts.seed) {
    cfg.process.seed = *opts.seed;
    cfg.mask_gen.seed = *opts.seed;
    cfg.train.seed = *opts.seed;
    cfg.eval.seed = *opts.seed;
  }
  return cfg;
}

void cmd_gen(const CommonOpts& opts) {
  const auto t0 = Clock::now();
  RunConfig cfg = load_config(opts);
  resolve_mask(cfg);
  const GroundTruthProcess proc = build_process(cfg.process);

  const std::string& out = opts.out_dir;
  std::filesystem::create_directories(out);
  const LatentBatch train_b = sample_mixed_batch(proc, cfg.data.n_train, cfg.process.seed + 1000);
  const LatentBatch val_b = sample_mixed_batch(proc, cfg.data.n_val, cfg.process.seed + 2000);
  const LatentBatch test_b = sample_mixed_batch(proc, cfg.data.n_test, cfg.process.seed + 3000);
  save_batch_dir(out + "/train", cfg.process, train_b);
  save_batch_dir(out + "/val", cfg.process, val_b);
  save_batch_dir(out + "/test", cfg.process, test_b);
  io::write_text(out + "/config.json", run_config_to_json(cfg));

  RunManifest m;
  m.config_hash = config_hash(cfg);
  m.seeds = {{"process", cfg.process.seed}, {"mask_gen", cfg.mask_gen.seed}};
  m.outputs = {{"train", out + "/train"}, {"val", out + "/val"}, {"test", out + "/test"}};
  m.duration_ms = ms_since(t0);
  write_manifest(out, m);
  say(opts, "wrote dataset to " + out);
}

void cmd_train(const CommonOpts& opts, const std::string& dataset_dir) {
  const auto t0 = Clock::now();
  const RunConfig user = load_config(opts);
  RunConfig cfg = dataset_config(dataset_dir);  // process section is authoritative
  cfg.train = user.train;
  cfg.arch = user.arch;
  cfg.eval = user.eval;
  if (opts.seed) cfg.train.seed = *opts.seed;

  TrainData data;
  data.train = load_batch_dir(dataset_dir + "/train");
  data.val = load_batch_dir(dataset_dir + "/val");

  const TrainResult res = run_training(opts, cfg, data);

  const std::string& out = opts.out_dir;
  save_checkpoint(out, res);
  io::write_text(out + "/config.json", run_config_to_json(cfg));
  RunManifest m;
  m.config_hash = config_hash(cfg);
  m.seeds = {{"train", cfg.train.seed}};
  m.inputs = {{"dataset", dataset_dir}};
  m.outputs = {{"checkpoint", out}};
  m.duration_ms = ms_since(t0);
  write_manifest(out, m);
  say(opts, "wrote checkpoint to " + out);
}

void cmd_eval(const CommonOpts& opts, const std::string& checkpoint_dir,
              const std::string& dataset_dir) {
  const auto t0 = Clock::now();
  const RunConfig user = load_config(opts);
  RunConfig cfg = dataset_config(dataset_dir);
  cfg.eval = user.eval;
  if (opts.seed) cfg.eval.seed = *opts.seed;
  check_manifest(checkpoint_dir);

  const ModelParams p = load_checkpoint(checkpoint_dir);
  const GroundTruthProcess proc = build_process(cfg.process);
  const IdentReport rep =
      identifiability_report(p, proc, cfg.eval.n_eval, cfg.eval.seed, cfg.eval.folds);
  const IdentReport base =
      ground_truth_report(proc, cfg.eval.n_eval, cfg.eval.seed, cfg.eval.folds);

  const std::string& out = opts.out_dir;
  std::filesystem::create_directories(out);
  io::write_text(out + "/ident_report.json", ident_report_to_json(rep));
  io::write_text(out + "/baseline_report.json", ident_report_to_json(base));
  io::write_text(out + "/report.csv", ident_report_csv_header() + "\n" +
                                          ident_report_csv_row(rep, "model") + "\n" +
                                          ident_report_csv_row(base, "ground_truth_baseline") +
                                          "\n");
  RunManifest m;
  m.config_hash = config_hash(cfg);
  m.seeds = {{"eval", cfg.eval.seed}};
  m.inputs = {{"checkpoint", checkpoint_dir}, {"dataset", dataset_dir}};
  m.outputs = {{"report", out + "/ident_report.json"}};
  m.duration_ms = ms_since(t0);
  write_manifest(out, m);
  say(opts, "r2_c_from_chat " + std::to_string(rep.r2_c_from_chat) + ", leak_s_from_chat " +
                std::to_string(rep.leak_s_from_chat));
}

void cmd_intervene(const CommonOpts& opts, const std::string& checkpoint_dir,
                   const std::string& dataset_dir) {
  const auto t0 = Clock::now();
  const RunConfig user = load_config(opts);
  RunConfig cfg = dataset_config(dataset_dir);
  cfg.eval = user.eval;
  check_manifest(checkpoint_dir);

  const ModelParams p = load_checkpoint(checkpoint_dir);
  const LatentBatch donors = load_batch_dir(dataset_dir + "/train");
  LatentBatch test = load_batch_dir(dataset_dir + "/test");
  if (test.size() > cfg.eval.n_nll) {
    test.x.conservativeResize(cfg.eval.n_nll, Eigen::NoChange);
    test.c.conservativeResize(cfg.eval.n_nll, Eigen::NoChange);
    test.s.conservativeResize(cfg.eval.n_nll, Eigen::NoChange);
    test.s_tilde.conservativeResize(cfg.eval.n_nll, Eigen::NoChange);
    test.domain.resize(static_cast<std::size_t>(cfg.eval.n_nll));
  }

  const NLLStats stats = flip_comparison(p, test, donors, cfg.eval.donors_per_style,
                                         cfg.eval.restrict_donor_domain);
  const std::string& out = opts.out_dir;
  std::filesystem::create_directories(out);
  io::write_text(out + "/nll_stats.csv", nll_stats_to_csv(stats));
  nlohmann::json summary{{"mean_base", stats.mean_base},
                         {"mean_flip_s", stats.mean_flip_s},
                         {"mean_flip_stilde", stats.mean_flip_stilde},
                         {"n", stats.nll_base.size()}};
  io::write_text(out + "/nll_summary.json", summary.dump(2));
  RunManifest m;
  m.config_hash = config_hash(cfg);
  m.inputs = {{"checkpoint", checkpoint_dir}, {"dataset", dataset_dir}};
  m.outputs = {{"nll_stats", out + "/nll_stats.csv"}};
  m.duration_ms = ms_since(t0);
  write_manifest(out, m);
  say(opts, "mean NLL base " + std::to_string(stats.mean_base) + ", flip s " +
                std::to_string(stats.mean_flip_s) + ", flip s~ " +
                std::to_string(stats.mean_flip_stilde));
}

void cmd_theory(const CommonOpts& opts, const std::string& support_json_path,
                const std::string& eq4_mode, bool allow_violations) {
  const auto t0 = Clock::now();
  int d_c = 0;
  const SupportMatrix g = support_from_json(io::read_text(support_json_path), &d_c);
  if (d_c <= 0 || d_c >= g.cols())
    throw ValidationError("cmd_theory: support JSON must carry 0 < d_c < cols");
  PartitionSpec part;
  part.d_c = d_c;
  part.d_s = static_cast<int>(g.cols()) - d_c;
  part.d_x = static_cast<int>(g.rows());

  bool enforce_eq4 = false;
  if (eq4_mode == "on")
    enforce_eq4 = true;
  else if (eq4_mode == "off")
    enforce_eq4 = false;
  else if (eq4_mode == "auto")
    enforce_eq4 = check_assumption_partial(g, part);
  else
    throw ValidationError("cmd_theory: eq4 mode must be auto, on or off");

  const TheoremReport rep =
      brute_force_theorem_check(g, part, enforce_eq4, !allow_violations);
  const std::string& out = opts.out_dir;
  std::filesystem::create_directories(out);
  io::write_text(out + "/theorem_report.json", theorem_report_to_json(rep, d_c));
  RunManifest m;
  m.config_hash = io::fnv1a64_hex(support_to_json(g, d_c));
  m.inputs = {{"support", support_json_path}};
  m.outputs = {{"report", out + "/theorem_report.json"}};
  m.duration_ms = ms_since(t0);
  write_manifest(out, m);
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "objective3_min %ld  objective4_min %ld  upper_right_zero %s  lower_left_zero %s",
                rep.objective3_min, rep.objective4_min,
                rep.all_minimizers_block_zero_upper_right ? "yes" : "no",
                rep.all_minimizers_block_zero_lower_left ? "yes" : "no");
  say(opts, buf);
}

void cmd_ablate(const CommonOpts& opts, const std::string& dataset_dir) {
  const auto t0 = Clock::now();
  const RunConfig user = load_config(opts);
  RunConfig cfg = dataset_config(dataset_dir);
  cfg.train = user.train;
  cfg.arch = user.arch;
  cfg.eval = user.eval;
  if (opts.seed) cfg.train.seed = *opts.seed;

  TrainData data;
  data.train = load_batch_dir(dataset_dir + "/train");
  data.val = load_batch_dir(dataset_dir + "/val");
  const GroundTruthProcess proc = build_process(cfg.process);

  struct Row {
    const char* name;
    bool content_conditioning;
    bool use_sparsity, use_partial, use_cmask;
  };
  const Row rows[] = {
      {"indep", false, false, false, false},
      {"causal_dep", true, false, false, false},
      {"w_sparsity", true, true, false, false},
      {"w_partial", true, true, true, false},
      {"full", true, true, true, true},
  };

  std::string csv = ident_report_csv_header() + "\n";
  for (const Row& row : rows) {
    RunConfig rc = cfg;
    rc.train.lambda_sparsity = row.use_sparsity ? cfg.train.lambda_sparsity : 0.0;
    rc.train.lambda_partial = row.use_partial ? cfg.train.lambda_partial : 0.0;
    rc.train.lambda_cmask = row.use_cmask ? cfg.train.lambda_cmask : 0.0;
    ModelParams p0 = build_model(rc);
    p0.style_context_uses_content = row.content_conditioning;
    say(opts, std::string("ablation ") + row.name);
    const TrainResult res = train(p0, data, rc.train);
    const IdentReport rep =
        identifiability_report(res.params, proc, cfg.eval.n_eval, cfg.eval.seed, cfg.eval.folds);
    csv += ident_report_csv_row(rep, row.name) + "\n";
  }

  const std::string& out = opts.out_dir;
  std::filesystem::create_directories(out);
  io::write_text(out + "/ablate.csv", csv);
  const IdentReport base =
      ground_truth_report(proc, cfg.eval.n_eval, cfg.eval.seed, cfg.eval.folds);
  io::write_text(out + "/ablate_baseline.json", ident_report_to_json(base));
  RunManifest m;
  m.config_hash = config_hash(cfg);
  m.seeds = {{"train", cfg.train.seed}, {"eval", cfg.eval.seed}};
  m.inputs = {{"dataset", dataset_dir}};
  m.outputs = {{"ablate", out + "/ablate.csv"}};
  m.duration_ms = ms_since(t0);
  write_manifest(out, m);
  say(opts, "wrote " + out + "/ablate.csv");
}

void cmd_print_defaults() {
  std::printf("%s\n", run_config_to_json(default_run_config()).c_str());
}

}  // namespace matte::cli
