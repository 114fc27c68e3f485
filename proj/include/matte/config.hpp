#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "matte/model.hpp"
#include "matte/synth.hpp"
#include "matte/train.hpp"

namespace matte {

struct MaskGenConfig {
  int content_lo = 10;
  int content_hi = 14;
  int style_lo = 3;
  int style_hi = 5;
  std::uint64_t seed = 7;
};

struct DataConfig {
  Index n_train = 4096;
  Index n_val = 1024;
  Index n_test = 2048;
};

struct EvalConfig {
  Index n_eval = 2000;
  int folds = 5;
  int donors_per_style = 100;
  Index n_nll = 1000;
  bool restrict_donor_domain = false;
  std::uint64_t seed = 99;
};

// One JSON document with sections process / train / eval. The support mask is
// either given explicitly ("mask") or generated from "mask_gen" norms; gen
// resolves the latter into an explicit mask before anything is persisted.
struct RunConfig {
  ProcessConfig process;
  bool mask_explicit = false;
  MaskGenConfig mask_gen;
  DataConfig data;
  TrainConfig train;
  ModelArch arch;
  EvalConfig eval;
};

RunConfig default_run_config();
std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);

// Hash of the canonical (sorted-key) JSON form.
std::string config_hash(const RunConfig& cfg);

// Fills in the support mask from mask_gen when none was given, then validates.
void resolve_mask(RunConfig& cfg);

struct RunManifest {
  std::string config_hash;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::vector<std::pair<std::string, std::string>> inputs;   // role -> path
  std::vector<std::pair<std::string, std::string>> outputs;  // role -> path
  long duration_ms = 0;
};

void write_manifest(const std::string& dir, const RunManifest& m);
// Recomputes the hash of <dir>/config.json and compares it with the manifest
// record; throws ValidationError on mismatch.
void check_manifest(const std::string& dir);

extern const char* const kRevision;
extern const char* const kVersion;

}  // namespace matte
