#include "matte/metrics.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

#include "json.hpp"
#include "matte/rng.hpp"

namespace matte {

namespace {

constexpr double kRidge = 1e-3;
constexpr Index kBandwidthSubsample = 1024;

// Median pairwise distance over (a subsample of) the rows.
double median_heuristic(const Matrix& x) {
  const Index n = std::min<Index>(x.rows(), kBandwidthSubsample);
  const Index stride = std::max<Index>(1, x.rows() / n);
  std::vector<Index> idx;
  for (Index i = 0; i < x.rows() && static_cast<Index>(idx.size()) < n; i += stride)
    idx.push_back(i);
  std::vector<double> d2;
  d2.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = a + 1; b < idx.size(); ++b)
      d2.push_back((x.row(idx[a]) - x.row(idx[b])).squaredNorm());
  if (d2.empty()) return 1.0;
  const std::size_t mid = d2.size() / 2;
  std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid), d2.end());
  return std::sqrt(std::max(d2[mid], 1e-12));
}

Matrix rbf_kernel(const Matrix& a, const Matrix& b, double gamma2) {
  Matrix k(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      k(i, j) = std::exp(-(a.row(i) - b.row(j)).squaredNorm() / (2.0 * gamma2));
  return k;
}

}  // namespace

std::optional<double> nonlinear_r2(const Matrix& inputs, const Matrix& targets, int folds) {
  if (inputs.rows() != targets.rows()) throw ValidationError("nonlinear_r2: row mismatch");
  if (folds < 2) throw ValidationError("nonlinear_r2: need at least 2 folds");
  const Index n = inputs.rows();
  if (n < 10 * folds) throw ValidationError("nonlinear_r2: need n >= 10 * folds");

  bool any_live = false;
  for (Index j = 0; j < targets.cols(); ++j) {
    const double mean = targets.col(j).mean();
    if ((targets.col(j).array() - mean).square().sum() > 1e-15) any_live = true;
  }
  if (!any_live) return std::nullopt;

  const double gamma = median_heuristic(inputs);
  const double gamma2 = gamma * gamma;

  double score_sum = 0.0;
  long score_count = 0;
  for (int f = 0; f < folds; ++f) {
    std::vector<Index> tr, te;
    for (Index i = 0; i < n; ++i)
      ((i % folds == f) ? te : tr).push_back(i);
    Matrix xtr(static_cast<Index>(tr.size()), inputs.cols());
    Matrix ytr(static_cast<Index>(tr.size()), targets.cols());
    for (std::size_t i = 0; i < tr.size(); ++i) {
      xtr.row(static_cast<Index>(i)) = inputs.row(tr[i]);
      ytr.row(static_cast<Index>(i)) = targets.row(tr[i]);
    }
    Matrix xte(static_cast<Index>(te.size()), inputs.cols());
    Matrix yte(static_cast<Index>(te.size()), targets.cols());
    for (std::size_t i = 0; i < te.size(); ++i) {
      xte.row(static_cast<Index>(i)) = inputs.row(te[i]);
      yte.row(static_cast<Index>(i)) = targets.row(te[i]);
    }

    Matrix k = rbf_kernel(xtr, xtr, gamma2);
    k.diagonal().array() += kRidge;
    const Eigen::LDLT<Matrix> solver(k);
    const Matrix alpha = solver.solve(ytr);
    const Matrix pred = rbf_kernel(xte, xtr, gamma2) * alpha;

    for (Index j = 0; j < targets.cols(); ++j) {
      const double mean = yte.col(j).mean();
      const double ss_tot = (yte.col(j).array() - mean).square().sum();
      if (ss_tot < 1e-15) continue;
      const double ss_res = (yte.col(j) - pred.col(j)).squaredNorm();
      score_sum += 1.0 - ss_res / ss_tot;
      ++score_count;
    }
  }
  if (score_count == 0) return std::nullopt;
  return score_sum / static_cast<double>(score_count);
}

IdentReport block_scores(const Matrix& chat, const Matrix& shat, const Matrix& c,
                         const Matrix& s, int folds) {
  const auto need = [](std::optional<double> v, const char* what) {
    if (!v) throw ValidationError(std::string("block_scores: degenerate targets for ") + what);
    return *v;
  };
  IdentReport r;
  r.r2_c_from_chat = need(nonlinear_r2(chat, c, folds), "c from chat");
  r.r2_s_from_shat = need(nonlinear_r2(shat, s, folds), "s from shat");
  r.leak_c_from_shat = need(nonlinear_r2(shat, c, folds), "c from shat");
  r.leak_s_from_chat = need(nonlinear_r2(chat, s, folds), "s from chat");
  return r;
}

namespace {

void permutations(int n, std::vector<std::vector<int>>& out) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
}

}  // namespace

std::optional<double> support_f1_blockwise(const SupportMatrix& est, const SupportMatrix& truth,
                                           int d_c) {
  if (est.rows() != truth.rows() || est.cols() != truth.cols())
    throw ValidationError("support_f1_blockwise: shape mismatch");
  if (est.count() == 0 || truth.count() == 0) return std::nullopt;
  const int d_z = static_cast<int>(est.cols());
  const int d_s = d_z - d_c;
  std::vector<std::vector<int>> perms_c, perms_s;
  permutations(d_c, perms_c);
  permutations(d_s, perms_s);

  double best = 0.0;
  for (const auto& pc : perms_c)
    for (const auto& ps : perms_s) {
      long tp = 0, fp = 0, fn = 0;
      for (Index i = 0; i < est.rows(); ++i)
        for (int j = 0; j < d_z; ++j) {
          const int src = j < d_c ? pc[static_cast<std::size_t>(j)]
                                  : d_c + ps[static_cast<std::size_t>(j - d_c)];
          const bool e = est(i, src);
          const bool t = truth(i, j);
          tp += (e && t) ? 1 : 0;
          fp += (e && !t) ? 1 : 0;
          fn += (!e && t) ? 1 : 0;
        }
      const double f1 = (2.0 * tp) / std::max<double>(2.0 * tp + fp + fn, 1.0);
      best = std::max(best, f1);
    }
  return best;
}

namespace {

// Mean absolute within-block correlation under the best block permutation.
std::optional<double> linear_mcc(const Matrix& est, const Matrix& truth) {
  const Index n = est.rows();
  const Index d = est.cols();
  if (truth.cols() != d || truth.rows() != n) return std::nullopt;
  Matrix corr(d, d);
  for (Index a = 0; a < d; ++a)
    for (Index b = 0; b < d; ++b) {
      const double ma = est.col(a).mean();
      const double mb = truth.col(b).mean();
      const double cov = ((est.col(a).array() - ma) * (truth.col(b).array() - mb)).mean();
      const double va = (est.col(a).array() - ma).square().mean();
      const double vb = (truth.col(b).array() - mb).square().mean();
      if (va < 1e-15 || vb < 1e-15) return std::nullopt;
      corr(a, b) = std::abs(cov / std::sqrt(va * vb));
    }
  std::vector<std::vector<int>> perms;
  permutations(static_cast<int>(d), perms);
  double best = 0.0;
  for (const auto& p : perms) {
    double acc = 0.0;
    for (Index j = 0; j < d; ++j) acc += corr(p[static_cast<std::size_t>(j)], j);
    best = std::max(best, acc / static_cast<double>(d));
  }
  return best;
}

}  // namespace

IdentReport identifiability_report(const ModelParams& p, const GroundTruthProcess& proc,
                                   Index n_eval, std::uint64_t seed, int folds) {
  if (p.part.d_x != proc.cfg.partition.d_x)
    throw ValidationError("identifiability_report: model and process disagree on d_x");
  const LatentBatch batch = sample_mixed_batch(proc, n_eval, seed);
  const Vector zero_noise = Vector::Zero(p.part.d_z());

  Matrix chat(n_eval, p.part.d_c), shat(n_eval, p.part.d_s);
  std::vector<Vector> dec_points;
  const Index jac_stride = std::max<Index>(1, n_eval / 200);
  for (Index i = 0; i < n_eval; ++i) {
    const Vector x = batch.x.row(i).transpose();
    const EncodeResult<double> enc = encode(p, x, zero_noise);
    const auto [c, s] = split_and_mask(p, enc.z);
    chat.row(i) = c.transpose();
    shat.row(i) = s.transpose();
    if (i % jac_stride == 0) {
      Vector dec_in(p.part.d_z());
      dec_in << c, s;
      dec_points.push_back(std::move(dec_in));
    }
  }

  IdentReport r = block_scores(chat, shat, batch.c, batch.s, folds);

  // Decoder support against the true mask: absolute threshold at 10% of the
  // largest Jacobian magnitude seen on the evaluation points.
  double max_abs = 0.0;
  for (const Vector& z : dec_points)
    max_abs = std::max(max_abs, dense_jacobian(p.decoder, z).cwiseAbs().maxCoeff());
  const SupportMatrix est = estimate_support(
      [&p](const Vector& z) { return dense_jacobian(p.decoder, z); }, dec_points,
      0.1 * max_abs);
  r.support_f1 = support_f1_blockwise(est, proc.cfg.support_mask, p.part.d_c);

  const auto mcc_c = linear_mcc(chat, batch.c);
  const auto mcc_s = linear_mcc(shat, batch.s);
  if (mcc_c && mcc_s)
    r.mcc_linear = (*mcc_c * p.part.d_c + *mcc_s * p.part.d_s) / p.part.d_z();
  return r;
}

IdentReport ground_truth_report(const GroundTruthProcess& proc, Index n_eval,
                                std::uint64_t seed, int folds) {
  const LatentBatch batch = sample_mixed_batch(proc, n_eval, seed);
  IdentReport r = block_scores(batch.c, batch.s, batch.c, batch.s, folds);
  r.support_f1 = 1.0;
  r.mcc_linear = 1.0;
  return r;
}

std::string ident_report_to_json(const IdentReport& r) {
  nlohmann::json j{
      {"r2_c_from_chat", r.r2_c_from_chat},
      {"r2_s_from_shat", r.r2_s_from_shat},
      {"leak_c_from_shat", r.leak_c_from_shat},
      {"leak_s_from_chat", r.leak_s_from_chat},
  };
  j["support_f1"] = r.support_f1 ? nlohmann::json(*r.support_f1) : nlohmann::json(nullptr);
  j["mcc_linear"] = r.mcc_linear ? nlohmann::json(*r.mcc_linear) : nlohmann::json(nullptr);
  return j.dump(2);
}

std::string ident_report_csv_header() {
  return "name,r2_c_from_chat,r2_s_from_shat,leak_c_from_shat,leak_s_from_chat,"
         "support_f1,mcc_linear";
}

std::string ident_report_csv_row(const IdentReport& r, const std::string& name) {
  char buf[256];
  const double sf = r.support_f1.value_or(std::nan(""));
  const double mc = r.mcc_linear.value_or(std::nan(""));
  std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g", name.c_str(),
                r.r2_c_from_chat, r.r2_s_from_shat, r.leak_c_from_shat, r.leak_s_from_chat,
                sf, mc);
  return std::string(buf);
}

}  // namespace matte
