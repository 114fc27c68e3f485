#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "matte/rng.hpp"
#include "matte/support.hpp"
#include "matte/types.hpp"

namespace matte {

struct ProcessConfig {
  PartitionSpec partition;
  int n_domains = 4;
  int u_dim = 8;
  SupportMatrix support_mask;          // d_x x d_z
  double dependence_strength = 0.6;    // in [0, 1], scales c's influence on s
  double domain_shift_strength = 0.6;  // >= 0
  std::uint64_t seed = 1;
  // Masks for theory experiments must satisfy the relative-sparsity (and,
  // for Theorem 2 runs, partial-intersection) assumptions. Degenerate worlds
  // such as a square diagonal mask can opt out.
  bool require_sparsity = true;
  bool require_partial = true;

  // Throws ValidationError naming the violated assumption.
  void validate() const;
};

// Sampled ground-truth world:
//   c ~ prior(u):      c = mu_d + A_d (eps + 0.5 tanh(eps)),  eps ~ N(0, I)
//   s = g_s(s~; c, u):  s_j = s~_j * scale_j(c, u) + shift_j(c, u)
//   x = g(c, s):        x_i = b_i + skip_i . z + W2_i . tanh(W1_i z)
// with W1_i and skip_i zero outside row i of the support mask, and the tanh
// branch scaled so the skip term dominates every masked Jacobian entry. That
// keeps each g_i strictly monotone in its masked inputs and makes the
// Jacobian support equal to the mask at every point.
struct GroundTruthProcess {
  ProcessConfig cfg;

  Matrix domain_embeddings;  // n_domains x u_dim

  std::vector<Vector> prior_mu;  // per domain, d_c
  std::vector<Matrix> prior_A;   // per domain, d_c x d_c

  std::vector<Vector> style_shift_base;   // per domain, d_s
  std::vector<Vector> style_logscale_base;
  std::vector<Matrix> style_Wshift;       // per domain, d_s x d_c
  std::vector<Matrix> style_Wscale;

  int mix_hidden = 0;
  std::vector<Matrix> mix_W1;  // per output row, hidden x d_z (masked)
  Matrix mix_W2;               // d_x x hidden
  Matrix mix_skip;             // d_x x d_z (masked)
  Vector mix_b;                // d_x
};

// Row-aligned arrays of observations and the latents that produced them.
struct LatentBatch {
  Matrix x;        // n x d_x
  Matrix c;        // n x d_c
  Matrix s;        // n x d_s
  Matrix s_tilde;  // n x d_s
  std::vector<std::uint32_t> domain;

  Index size() const { return x.rows(); }
};

// Deterministic in cfg.seed. Verifies the Jacobian support against the mask
// and the numeric injectivity margin before returning; a bounded number of
// re-draws is attempted, after which construction fails naming the bad row.
GroundTruthProcess build_process(const ProcessConfig& cfg);

LatentBatch sample_batch(const GroundTruthProcess& proc, Index n, int domain,
                         std::uint64_t seed);

// n samples spread round-robin over all domains (remainder on the last one),
// concatenated in domain order.
LatentBatch sample_mixed_batch(const GroundTruthProcess& proc, Index n, std::uint64_t seed);

// Moment-matched symmetric Gaussian divergence between p(c, s | d1) and
// p(c, s | d2), estimated from n Monte-Carlo samples per domain. Only used to
// confirm that a config actually exhibits domain shift.
double domain_kl_diagnostic(const GroundTruthProcess& proc, int d1, int d2, Index n);

// Pointwise evaluation of the world, exposed for oracles and metrics.
Vector g_forward(const GroundTruthProcess& proc, const Vector& z);
Matrix g_jacobian(const GroundTruthProcess& proc, const Vector& z);
Vector gs_forward(const GroundTruthProcess& proc, const Vector& s_tilde, const Vector& c,
                  int domain);
Vector gs_inverse(const GroundTruthProcess& proc, const Vector& s, const Vector& c,
                  int domain);
Vector sample_content(const GroundTruthProcess& proc, int domain, Rng& rng);

// Random mask with every content column strictly denser than every style
// column, no dead rows or columns, and (optionally) no nested content/style
// pair. Norm bounds are inclusive.
SupportMatrix random_valid_mask(const PartitionSpec& p, Index d_x, Rng& rng,
                                int content_lo, int content_hi, int style_lo, int style_hi,
                                bool require_partial);

// --- dataset directory -----------------------------------------------------
// meta.json (config + checksums) plus row-major f64 arrays x.bin, c.bin,
// s.bin, stilde.bin and domain.u32.bin. Loading validates the checksums.

void save_batch_dir(const std::string& dir, const ProcessConfig& cfg, const LatentBatch& b);
LatentBatch load_batch_dir(const std::string& dir, ProcessConfig* cfg_out = nullptr);

// ProcessConfig <-> JSON (embedded in meta.json and in run configs).
std::string process_config_to_json(const ProcessConfig& cfg);
ProcessConfig process_config_from_json(const std::string& text);

}  // namespace matte
