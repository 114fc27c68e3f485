#pragma once

#include <string>
#include <vector>

#include "matte/model.hpp"
#include "matte/synth.hpp"

namespace matte {

struct TrainConfig {
  double lambda_sparsity = 1e-4;
  double lambda_partial = 3e-3;
  double lambda_cmask = 1e-4;
  int k_select = 8;  // K rows for the partial-overlap selection
  int epochs = 25;
  int batch_size = 64;
  double lr_adam = 1e-3;    // encoder, flows, attention, embeddings, mask
  double lr_decoder = 0.1;  // plain SGD
  int partial_start_epoch = 3;
  int early_stop_patience = 3;
  std::uint64_t seed = 0;
};

// Unweighted loss terms; total = recon + kl + lambda_sparsity * sparsity
// + lambda_partial * partial + lambda_cmask * cmask. Terms whose lambda is
// zero (or not yet scheduled) are logged as 0 and not computed.
struct LossBreakdown {
  double recon = 0.0;
  double kl = 0.0;
  double sparsity = 0.0;
  double partial = 0.0;
  double cmask = 0.0;
  double total = 0.0;
};

struct EpochLog {
  int epoch = 0;
  LossBreakdown loss;
  double val_recon = 0.0;
  double val_kl = 0.0;
};

struct TrainData {
  LatentBatch train;
  LatentBatch val;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
  int epochs_run = 0;
  // Training-state record for the checkpoint.
  ModelParams adam_m, adam_v;
  long adam_t = 0;
  std::string rng_state;
};

// Stochastic training with the partial-overlap term entering at
// partial_start_epoch and early stop on the validation reconstruction loss.
// Bitwise deterministic in cfg.seed, including batch shuffling.
TrainResult train(const ModelParams& p0, const TrainData& data, const TrainConfig& cfg);

// Mean reconstruction and KL on a batch with caller-supplied noise rows.
std::pair<double, double> eval_recon_kl(const ModelParams& p, const LatentBatch& batch,
                                        const Matrix& noise);

std::string train_log_to_jsonl(const std::vector<EpochLog>& log);

// Checkpoint directory: model.json + params.{json,bin} + moments.{json,bin}
// + state.json + train_log.jsonl.
void save_checkpoint(const std::string& dir, const TrainResult& result);
ModelParams load_checkpoint(const std::string& dir);

}  // namespace matte
