#pragma once

#include <optional>
#include <string>

#include "matte/model.hpp"
#include "matte/support.hpp"
#include "matte/synth.hpp"

namespace matte {

// Cross-validated R^2 of a kernel ridge regressor (RBF kernel with the
// median-heuristic bandwidth, ridge 1e-3), averaged over target coordinates
// and folds. Returns nullopt when every target coordinate is degenerate
// (zero variance) — a flag, not a score.
std::optional<double> nonlinear_r2(const Matrix& inputs, const Matrix& targets, int folds);

// Block-wise recovery scores. Leakage is meaningful only relative to the
// ground-truth-inverse baseline: with dependent content and style, s carries
// information about c even for a perfect estimator.
struct IdentReport {
  double r2_c_from_chat = 0.0;
  double r2_s_from_shat = 0.0;
  double leak_c_from_shat = 0.0;
  double leak_s_from_chat = 0.0;
  std::optional<double> support_f1;  // undefined when either support is empty
  std::optional<double> mcc_linear;
};

// The four predictability scores from explicit estimate/truth arrays.
IdentReport block_scores(const Matrix& chat, const Matrix& shat, const Matrix& c,
                         const Matrix& s, int folds);

// F1 between estimated and true decoder supports, maximized over column
// permutations within the content and style blocks.
std::optional<double> support_f1_blockwise(const SupportMatrix& est, const SupportMatrix& truth,
                                           int d_c);

// Evaluates a trained model against the world that generated it, on a fresh
// batch of n_eval samples spread over all domains.
IdentReport identifiability_report(const ModelParams& p, const GroundTruthProcess& proc,
                                   Index n_eval, std::uint64_t seed, int folds = 5);

// Same scores for the oracle inverse (chat = c, shat = s): the baseline the
// leakage numbers are judged against.
IdentReport ground_truth_report(const GroundTruthProcess& proc, Index n_eval,
                                std::uint64_t seed, int folds = 5);

std::string ident_report_to_json(const IdentReport& r);
std::string ident_report_csv_header();
std::string ident_report_csv_row(const IdentReport& r, const std::string& name);

}  // namespace matte
