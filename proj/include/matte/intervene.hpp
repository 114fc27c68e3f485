#pragma once

#include <string>
#include <vector>

#include "matte/model.hpp"
#include "matte/synth.hpp"

namespace matte {

struct TransferRequest {
  Vector x_source;
  int source_domain = 0;
  std::vector<Vector> donor_x;  // samples carrying the desired style
  std::vector<int> donor_domains;
};

struct TransferResult {
  Vector x_transfer;
  Vector c;  // source content, passed through untouched
  Vector s_transfer;
  Vector s_tilde_transfer;
};

// Counterfactual style transfer by exogenous replacement: the donor styles
// are averaged in exogenous space and pulled back through the inverse style
// flow at the SOURCE's context, so the content-style dependence of the source
// is preserved. Points outside the spline interval fall on the identity
// tails; that is part of the contract, not an error.
TransferResult transfer(const ModelParams& p, const TransferRequest& req);

struct NLLStats {
  std::vector<double> nll_base;
  std::vector<double> nll_flip_s;       // naive flip: replace s directly
  std::vector<double> nll_flip_stilde;  // causal flip: replace s~ and invert
  double mean_base = 0.0;
  double mean_flip_s = 0.0;
  double mean_flip_stilde = 0.0;
};

// Model NLL of x with the given latents: reconstruction term plus the
// standard-normal density of the exogenous variables through the flow
// logdets. This is the only density the model defines.
double model_nll(const ModelParams& p, const Vector& x, const Vector& c, const Vector& s,
                 int domain);

// For every test sample: NLL at the original latents, with s replaced by the
// mean donor style, and with s~ replaced by the mean donor exogenous style.
// "Style" on synthetic data is the sign of the first true exogenous style
// coordinate; donors are the donors_per_style pool samples with the largest
// (positive style) and smallest (negative style) values of that coordinate,
// and every test sample is flipped toward the opposite sign. With
// restrict_to_source_domain the donor pool is filtered per test domain.
NLLStats flip_comparison(const ModelParams& p, const LatentBatch& test_batch,
                         const LatentBatch& donor_pool, int donors_per_style,
                         bool restrict_to_source_domain = false);

// CSV columns: sample_id,nll_base,nll_flip_s,nll_flip_stilde.
std::string nll_stats_to_csv(const NLLStats& stats);

}  // namespace matte
