#include "matte/config.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>

#include "json.hpp"
#include "matte/io.hpp"

#ifndef MATTE_REVISION
#define MATTE_REVISION "unknown"
#endif

namespace matte {

const char* const kRevision = MATTE_REVISION;
const char* const kVersion = "0.1.0";

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.process.partition = {4, 2, 20};
  cfg.process.n_domains = 4;
  cfg.process.u_dim = 8;
  cfg.process.dependence_strength = 0.6;
  cfg.process.domain_shift_strength = 0.6;
  cfg.process.seed = 1;
  cfg.process.require_partial = true;
  cfg.mask_explicit = false;
  return cfg;
}

namespace {

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json p;
  p["d_c"] = cfg.process.partition.d_c;
  p["d_s"] = cfg.process.partition.d_s;
  p["d_x"] = cfg.process.partition.d_x;
  p["n_domains"] = cfg.process.n_domains;
  p["u_dim"] = cfg.process.u_dim;
  p["dependence_strength"] = cfg.process.dependence_strength;
  p["domain_shift_strength"] = cfg.process.domain_shift_strength;
  p["seed"] = cfg.process.seed;
  p["require_partial"] = cfg.process.require_partial;
  p["n_train"] = cfg.data.n_train;
  p["n_val"] = cfg.data.n_val;
  p["n_test"] = cfg.data.n_test;
  if (cfg.mask_explicit)
    p["mask"] = nlohmann::json::parse(
        support_to_json(cfg.process.support_mask, cfg.process.partition.d_c));
  else
    p["mask_gen"] = {{"content_lo", cfg.mask_gen.content_lo},
                     {"content_hi", cfg.mask_gen.content_hi},
                     {"style_lo", cfg.mask_gen.style_lo},
                     {"style_hi", cfg.mask_gen.style_hi},
                     {"seed", cfg.mask_gen.seed}};

  nlohmann::json t;
  t["lambda_sparsity"] = cfg.train.lambda_sparsity;
  t["lambda_partial"] = cfg.train.lambda_partial;
  t["lambda_cmask"] = cfg.train.lambda_cmask;
  t["k_select"] = cfg.train.k_select;
  t["epochs"] = cfg.train.epochs;
  t["batch_size"] = cfg.train.batch_size;
  t["lr_adam"] = cfg.train.lr_adam;
  t["lr_decoder"] = cfg.train.lr_decoder;
  t["partial_start_epoch"] = cfg.train.partial_start_epoch;
  t["early_stop_patience"] = cfg.train.early_stop_patience;
  t["seed"] = cfg.train.seed;
  t["arch"] = {{"enc_hidden", cfg.arch.enc_hidden},
               {"dec_hidden", cfg.arch.dec_hidden},
               {"flow_layers", cfg.arch.flow_layers},
               {"flow_hidden", cfg.arch.flow_hidden},
               {"spline_bins", cfg.arch.spline_bins},
               {"spline_bound", cfg.arch.spline_bound},
               {"hyper_hidden", cfg.arch.hyper_hidden}};

  nlohmann::json e;
  e["n_eval"] = cfg.eval.n_eval;
  e["folds"] = cfg.eval.folds;
  e["donors_per_style"] = cfg.eval.donors_per_style;
  e["n_nll"] = cfg.eval.n_nll;
  e["restrict_donor_domain"] = cfg.eval.restrict_donor_domain;
  e["seed"] = cfg.eval.seed;

  return nlohmann::json{{"process", p}, {"train", t}, {"eval", e}};
}

RunConfig from_json(const nlohmann::json& j) {
  RunConfig cfg = default_run_config();
  if (j.contains("process")) {
    const auto& p = j["process"];
    cfg.process.partition.d_c = p.value("d_c", cfg.process.partition.d_c);
    cfg.process.partition.d_s = p.value("d_s", cfg.process.partition.d_s);
    cfg.process.partition.d_x = p.value("d_x", cfg.process.partition.d_x);
    cfg.process.n_domains = p.value("n_domains", cfg.process.n_domains);
    cfg.process.u_dim = p.value("u_dim", cfg.process.u_dim);
    cfg.process.dependence_strength =
        p.value("dependence_strength", cfg.process.dependence_strength);
    cfg.process.domain_shift_strength =
        p.value("domain_shift_strength", cfg.process.domain_shift_strength);
    cfg.process.seed = p.value("seed", cfg.process.seed);
    cfg.process.require_partial = p.value("require_partial", cfg.process.require_partial);
    cfg.data.n_train = p.value("n_train", cfg.data.n_train);
    cfg.data.n_val = p.value("n_val", cfg.data.n_val);
    cfg.data.n_test = p.value("n_test", cfg.data.n_test);
    if (p.contains("mask")) {
      cfg.mask_explicit = true;
      cfg.process.support_mask = support_from_json(p["mask"].dump());
    } else if (p.contains("mask_gen")) {
      const auto& g = p["mask_gen"];
      cfg.mask_gen.content_lo = g.value("content_lo", cfg.mask_gen.content_lo);
      cfg.mask_gen.content_hi = g.value("content_hi", cfg.mask_gen.content_hi);
      cfg.mask_gen.style_lo = g.value("style_lo", cfg.mask_gen.style_lo);
      cfg.mask_gen.style_hi = g.value("style_hi", cfg.mask_gen.style_hi);
      cfg.mask_gen.seed = g.value("seed", cfg.mask_gen.seed);
    }
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    cfg.train.lambda_sparsity = t.value("lambda_sparsity", cfg.train.lambda_sparsity);
    cfg.train.lambda_partial = t.value("lambda_partial", cfg.train.lambda_partial);
    cfg.train.lambda_cmask = t.value("lambda_cmask", cfg.train.lambda_cmask);
    cfg.train.k_select = t.value("k_select", cfg.train.k_select);
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.lr_adam = t.value("lr_adam", cfg.train.lr_adam);
    cfg.train.lr_decoder = t.value("lr_decoder", cfg.train.lr_decoder);
    cfg.train.partial_start_epoch =
        t.value("partial_start_epoch", cfg.train.partial_start_epoch);
    cfg.train.early_stop_patience =
        t.value("early_stop_patience", cfg.train.early_stop_patience);
    cfg.train.seed = t.value("seed", cfg.train.seed);
    if (t.contains("arch")) {
      const auto& a = t["arch"];
      cfg.arch.enc_hidden = a.value("enc_hidden", cfg.arch.enc_hidden);
      cfg.arch.dec_hidden = a.value("dec_hidden", cfg.arch.dec_hidden);
      cfg.arch.flow_layers = a.value("flow_layers", cfg.arch.flow_layers);
      cfg.arch.flow_hidden = a.value("flow_hidden", cfg.arch.flow_hidden);
      cfg.arch.spline_bins = a.value("spline_bins", cfg.arch.spline_bins);
      cfg.arch.spline_bound = a.value("spline_bound", cfg.arch.spline_bound);
      cfg.arch.hyper_hidden = a.value("hyper_hidden", cfg.arch.hyper_hidden);
    }
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    cfg.eval.n_eval = e.value("n_eval", cfg.eval.n_eval);
    cfg.eval.folds = e.value("folds", cfg.eval.folds);
    cfg.eval.donors_per_style = e.value("donors_per_style", cfg.eval.donors_per_style);
    cfg.eval.n_nll = e.value("n_nll", cfg.eval.n_nll);
    cfg.eval.restrict_donor_domain =
        e.value("restrict_donor_domain", cfg.eval.restrict_donor_domain);
    cfg.eval.seed = e.value("seed", cfg.eval.seed);
  }
  return cfg;
}

}  // namespace

std::string run_config_to_json(const RunConfig& cfg) { return to_json(cfg).dump(2); }

RunConfig run_config_from_json(const std::string& text) {
  try {
    return from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("run config parse failure: " + std::string(e.what()));
  }
}

std::string config_hash(const RunConfig& cfg) {
  const std::string canonical = to_json(cfg).dump();
  return io::fnv1a64_hex(canonical);
}

void resolve_mask(RunConfig& cfg) {
  if (!cfg.mask_explicit) {
    Rng rng(cfg.mask_gen.seed);
    cfg.process.support_mask = random_valid_mask(
        cfg.process.partition, cfg.process.partition.d_x, rng, cfg.mask_gen.content_lo,
        cfg.mask_gen.content_hi, cfg.mask_gen.style_lo, cfg.mask_gen.style_hi,
        cfg.process.require_partial);
    cfg.mask_explicit = true;
  }
  cfg.process.validate();
}

void write_manifest(const std::string& dir, const RunManifest& m) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["config_hash"] = m.config_hash;
  nlohmann::json seeds;
  for (const auto& [k, v] : m.seeds) seeds[k] = v;
  j["seeds"] = seeds;
  nlohmann::json inputs, outputs;
  for (const auto& [k, v] : m.inputs) inputs[k] = v;
  for (const auto& [k, v] : m.outputs) outputs[k] = v;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["versions"] = {{"matte", kVersion}};
  j["revision"] = kRevision;
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&tt));
  j["wall_clock_utc"] = buf;
  j["duration_ms"] = m.duration_ms;
  io::write_text(dir + "/manifest.json", j.dump(2));
}

void check_manifest(const std::string& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_text(dir + "/manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest parse failure in " + dir + ": " + e.what());
  }
  const std::string recorded = manifest.at("config_hash").get<std::string>();
  const RunConfig cfg = run_config_from_json(io::read_text(dir + "/config.json"));
  if (config_hash(cfg) != recorded)
    throw ValidationError("manifest hash mismatch in " + dir +
                          ": config.json does not match the recorded config_hash");
}

}  // namespace matte
