#include "matte/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "json.hpp"
#include "matte/io.hpp"
#include "matte/rng.hpp"

namespace matte {

namespace {

struct TensorView {
  std::string name;
  double* data;
  Index size;
};

std::vector<TensorView> views(ModelParams& p) {
  std::vector<TensorView> out;
  for_each_tensor(p, [&](const std::string& name, auto& t) {
    out.push_back({name, t.data(), t.size()});
  });
  return out;
}

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void check_config(const TrainConfig& cfg, const PartitionSpec& part) {
  if (cfg.batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (cfg.epochs < 0) throw ValidationError("train: epochs must be >= 0");
  if (cfg.k_select < 0 || cfg.k_select > part.d_x)
    throw ValidationError("train: K must lie in [0, d_x]");
  // A start epoch at or beyond `epochs` is fine: the partial term just never
  // activates in that run.
  if (cfg.partial_start_epoch < 0)
    throw ValidationError("train: partial_start_epoch must be >= 0");
}

}  // namespace

std::pair<double, double> eval_recon_kl(const ModelParams& p, const LatentBatch& batch,
                                        const Matrix& noise) {
  if (noise.rows() != batch.size() || noise.cols() != p.part.d_z())
    throw ValidationError("eval_recon_kl: noise shape mismatch");
  double recon = 0.0, kl = 0.0;
  for (Index i = 0; i < batch.size(); ++i) {
    const Vector x = batch.x.row(i).transpose();
    const Vector nz = noise.row(i).transpose();
    const auto [r, k] = loss_vae<double>(p, x, static_cast<int>(batch.domain[static_cast<std::size_t>(i)]), nz);
    recon += r;
    kl += k;
  }
  const double n = static_cast<double>(std::max<Index>(batch.size(), 1));
  return {recon / n, kl / n};
}

TrainResult train(const ModelParams& p0, const TrainData& data, const TrainConfig& cfg) {
  check_config(cfg, p0.part);
  const Index n = data.train.size();
  if (n < 1) throw ValidationError("train: empty training set");

  // The dataset must cover every domain embedding that will be trained.
  std::set<std::uint32_t> seen(data.train.domain.begin(), data.train.domain.end());
  for (int d = 0; d < p0.n_domains; ++d)
    if (!seen.count(static_cast<std::uint32_t>(d)))
      throw ValidationError("train: training data does not cover domain " + std::to_string(d));
  for (std::uint32_t d : seen)
    if (d >= static_cast<std::uint32_t>(p0.n_domains))
      throw ValidationError("train: domain id exceeds the embedding table");

  TrainResult res;
  res.params = p0;
  res.adam_m = zeros_like(p0);
  res.adam_v = zeros_like(p0);
  res.adam_t = 0;

  Rng rng(cfg.seed);
  Rng val_rng = rng.fork(0x7a1);
  Matrix val_noise(data.val.size(), p0.part.d_z());
  for (Index i = 0; i < val_noise.rows(); ++i)
    for (Index j = 0; j < val_noise.cols(); ++j) val_noise(i, j) = val_rng.normal();

  const int d_z = p0.part.d_z();
  ad::Tape tape;
  tape.reserve(1u << 20);
  ad::Tape* prev_tape = ad::active_tape();
  ad::active_tape() = &tape;

  double best_val = std::numeric_limits<double>::infinity();
  int stall = 0;

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    const bool partial_active = cfg.lambda_partial != 0.0 && epoch >= cfg.partial_start_epoch;
    double sum_recon = 0.0, sum_kl = 0.0, sum_sp = 0.0, sum_pa = 0.0, sum_cm = 0.0;
    Index counted = 0;

    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index stop = std::min<Index>(start + cfg.batch_size, n);
      const Index bs = stop - start;

      tape.clear();
      const ModelParamsT<ad::Var> lifted = lift(res.params);

      ad::Var batch_recon(0.0), batch_kl(0.0);
      std::vector<VectorT<ad::Var>> dec_inputs;
      dec_inputs.reserve(static_cast<std::size_t>(bs));
      for (Index bi = start; bi < stop; ++bi) {
        const Index row = order[static_cast<std::size_t>(bi)];
        VectorT<ad::Var> x(p0.part.d_x);
        for (Index j = 0; j < p0.part.d_x; ++j) x[j] = ad::Var(data.train.x(row, j));
        VectorT<ad::Var> noise(d_z);
        for (Index j = 0; j < d_z; ++j) noise[j] = ad::Var(rng.normal());
        const int domain = static_cast<int>(data.train.domain[static_cast<std::size_t>(row)]);

        const EncodeResult<ad::Var> enc = encode(lifted, x, noise);
        const auto [c, s] = split_and_mask(lifted, enc.z);
        const ExogenizeResult<ad::Var> ex = exogenize(lifted, c, s, domain);
        VectorT<ad::Var> dec_in(d_z);
        dec_in << c, s;
        const VectorT<ad::Var> x_hat = dense_forward(lifted.decoder, dec_in);

        ad::Var recon(0.5 * p0.part.d_x * kLog2Pi);
        for (Index j = 0; j < x.size(); ++j) {
          const ad::Var d = x[j] - x_hat[j];
          recon += ad::Var(0.5) * d * d;
        }
        ad::Var log_q(0.0);
        for (Index j = 0; j < d_z; ++j)
          log_q -= ad::log(enc.sigma[j]) + ad::Var(0.5) * noise[j] * noise[j];
        ad::Var log_prior(0.0);
        for (Index j = 0; j < ex.c_tilde.size(); ++j)
          log_prior -= ad::Var(0.5) * ex.c_tilde[j] * ex.c_tilde[j];
        for (Index j = 0; j < ex.s_tilde.size(); ++j)
          log_prior -= ad::Var(0.5) * ex.s_tilde[j] * ex.s_tilde[j];

        batch_recon += recon;
        batch_kl += log_q - ex.logdet_c - ex.logdet_s - log_prior;
        dec_inputs.push_back(std::move(dec_in));
      }

      const ad::Var inv_bs(1.0 / static_cast<double>(bs));
      const ad::Var recon_mean = batch_recon * inv_bs;
      const ad::Var kl_mean = batch_kl * inv_bs;
      ad::Var sparsity(0.0), partial(0.0), cmask(0.0);
      if (cfg.lambda_sparsity != 0.0) sparsity = loss_sparsity(lifted, dec_inputs);
      if (partial_active) partial = loss_partial(lifted, dec_inputs, cfg.k_select);
      if (cfg.lambda_cmask != 0.0) cmask = loss_cmask(lifted);

      ad::Var total = recon_mean + kl_mean + ad::Var(cfg.lambda_sparsity) * sparsity +
                      ad::Var(partial_active ? cfg.lambda_partial : 0.0) * partial +
                      ad::Var(cfg.lambda_cmask) * cmask;
      if (!std::isfinite(total.v))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch starting at sample " + std::to_string(start));

      const std::vector<double> adj = tape.backward(total.idx);
      ModelParams grads = extract_grads(lifted, adj);

      res.adam_t += 1;
      const double b1c = 1.0 - std::pow(kBeta1, static_cast<double>(res.adam_t));
      const double b2c = 1.0 - std::pow(kBeta2, static_cast<double>(res.adam_t));
      auto pv = views(res.params);
      auto gv = views(grads);
      auto mv = views(res.adam_m);
      auto vv = views(res.adam_v);
      for (std::size_t t = 0; t < pv.size(); ++t) {
        const bool sgd = pv[t].name.rfind("decoder.", 0) == 0;
        for (Index i = 0; i < pv[t].size; ++i) {
          const double g = gv[t].data[i];
          if (sgd) {
            pv[t].data[i] -= cfg.lr_decoder * g;
          } else {
            double& m = mv[t].data[i];
            double& v = vv[t].data[i];
            m = kBeta1 * m + (1.0 - kBeta1) * g;
            v = kBeta2 * v + (1.0 - kBeta2) * g * g;
            pv[t].data[i] -= cfg.lr_adam * (m / b1c) / (std::sqrt(v / b2c) + kAdamEps);
          }
        }
      }

      sum_recon += recon_mean.v * static_cast<double>(bs);
      sum_kl += kl_mean.v * static_cast<double>(bs);
      sum_sp += sparsity.v * static_cast<double>(bs);
      sum_pa += partial.v * static_cast<double>(bs);
      sum_cm += cmask.v * static_cast<double>(bs);
      counted += bs;
    }

    EpochLog log;
    log.epoch = epoch;
    const double inv = 1.0 / static_cast<double>(counted);
    log.loss.recon = sum_recon * inv;
    log.loss.kl = sum_kl * inv;
    log.loss.sparsity = sum_sp * inv;
    log.loss.partial = sum_pa * inv;
    log.loss.cmask = sum_cm * inv;
    log.loss.total = log.loss.recon + log.loss.kl + cfg.lambda_sparsity * log.loss.sparsity +
                     cfg.lambda_partial * log.loss.partial + cfg.lambda_cmask * log.loss.cmask;

    const auto [vr, vk] = eval_recon_kl(res.params, data.val, val_noise);
    log.val_recon = vr;
    log.val_kl = vk;
    res.log.push_back(log);
    res.epochs_run = epoch + 1;

    if (vr < best_val) {
      best_val = vr;
      stall = 0;
    } else if (++stall >= cfg.early_stop_patience) {
      break;
    }
  }

  ad::active_tape() = prev_tape;
  res.rng_state = rng.state();
  return res;
}

std::string train_log_to_jsonl(const std::vector<EpochLog>& log) {
  std::string out;
  for (const EpochLog& e : log) {
    nlohmann::json j{
        {"epoch", e.epoch},         {"recon", e.loss.recon},   {"kl", e.loss.kl},
        {"sparsity", e.loss.sparsity}, {"partial", e.loss.partial}, {"cmask", e.loss.cmask},
        {"total", e.loss.total},    {"val_recon", e.val_recon}, {"val_kl", e.val_kl},
    };
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_checkpoint(const std::string& dir, const TrainResult& result) {
  save_model(dir, result.params);
  std::vector<NamedTensor> moments;
  for_each_tensor(result.adam_m, [&](const std::string& name, const auto& t) {
    moments.push_back({"adam_m." + name, Matrix(t)});
  });
  for_each_tensor(result.adam_v, [&](const std::string& name, const auto& t) {
    moments.push_back({"adam_v." + name, Matrix(t)});
  });
  save_tensors(dir + "/moments", moments);
  nlohmann::json state{{"epochs_run", result.epochs_run},
                       {"adam_t", result.adam_t},
                       {"rng", result.rng_state}};
  io::write_text(dir + "/state.json", state.dump(2));
  io::write_text(dir + "/train_log.jsonl", train_log_to_jsonl(result.log));
}

ModelParams load_checkpoint(const std::string& dir) { return load_model(dir); }

}  // namespace matte
