#include "matte/intervene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace matte {

namespace {

// Style-flow context for a given content vector, mirroring exogenize.
Vector style_context(const ModelParams& p, const Vector& c, int domain) {
  const Vector u = p.U.row(domain).transpose();
  Vector attn_in(p.part.d_c + p.u_dim);
  if (p.style_context_uses_content)
    attn_in << c, u;
  else
    attn_in << Vector::Zero(p.part.d_c), u;
  const Vector alpha = dense_forward(p.attention, attn_in);
  return p.style_context_uses_content ? Vector(alpha.cwiseProduct(c)) : alpha;
}

struct Encoded {
  Vector c, s, s_tilde;
  int domain;
};

Encoded encode_mean(const ModelParams& p, const Vector& x, int domain) {
  const Vector zero_noise = Vector::Zero(p.part.d_z());
  const EncodeResult<double> enc = encode(p, x, zero_noise);
  const auto [c, s] = split_and_mask(p, enc.z);
  const ExogenizeResult<double> ex = exogenize(p, c, s, domain);
  return {c, s, ex.s_tilde, domain};
}

}  // namespace

double model_nll(const ModelParams& p, const Vector& x, const Vector& c, const Vector& s,
                 int domain) {
  Vector dec_in(p.part.d_z());
  dec_in << c, s;
  const Vector x_hat = dense_forward(p.decoder, dec_in);
  double nll = 0.5 * (x - x_hat).squaredNorm() + 0.5 * p.part.d_x * kLog2Pi;
  const ExogenizeResult<double> ex = exogenize(p, c, s, domain);
  nll += 0.5 * (ex.c_tilde.squaredNorm() + ex.s_tilde.squaredNorm()) +
         0.5 * p.part.d_z() * kLog2Pi;
  nll -= ex.logdet_c + ex.logdet_s;
  return nll;
}

TransferResult transfer(const ModelParams& p, const TransferRequest& req) {
  if (req.donor_x.empty()) throw ValidationError("transfer: donor set is empty");
  if (req.donor_x.size() != req.donor_domains.size())
    throw ValidationError("transfer: donor domains do not align with donor samples");

  const Encoded src = encode_mean(p, req.x_source, req.source_domain);

  Vector s_tilde_mean = Vector::Zero(p.part.d_s);
  for (std::size_t i = 0; i < req.donor_x.size(); ++i) {
    const Encoded d = encode_mean(p, req.donor_x[i], req.donor_domains[i]);
    s_tilde_mean += d.s_tilde;
  }
  s_tilde_mean /= static_cast<double>(req.donor_x.size());

  TransferResult out;
  out.c = src.c;
  out.s_tilde_transfer = s_tilde_mean;
  out.s_transfer =
      style_flow_inverse(p.r_s, s_tilde_mean, style_context(p, src.c, req.source_domain));
  Vector dec_in(p.part.d_z());
  dec_in << src.c, out.s_transfer;
  out.x_transfer = dense_forward(p.decoder, dec_in);
  return out;
}

NLLStats flip_comparison(const ModelParams& p, const LatentBatch& test_batch,
                         const LatentBatch& donor_pool, int donors_per_style,
                         bool restrict_to_source_domain) {
  if (donors_per_style < 1) throw ValidationError("flip_comparison: donors_per_style must be >= 1");

  // Rank pool samples by the first true exogenous style coordinate.
  const Index pool_n = donor_pool.size();
  std::vector<Index> order(static_cast<std::size_t>(pool_n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return donor_pool.s_tilde(a, 0) < donor_pool.s_tilde(b, 0);
  });

  struct DonorSet {
    Vector mean_s = Vector();
    Vector mean_s_tilde = Vector();
    Index count = 0;
  };
  // Donor means per (sign, domain-or-all). Index 0 = unrestricted.
  const int n_groups = restrict_to_source_domain ? p.n_domains : 1;
  std::vector<DonorSet> neg(static_cast<std::size_t>(n_groups)),
      pos(static_cast<std::size_t>(n_groups));

  const auto accumulate = [&](DonorSet& ds, Index row) {
    const Encoded e = encode_mean(
        p, donor_pool.x.row(row).transpose(),
        static_cast<int>(donor_pool.domain[static_cast<std::size_t>(row)]));
    if (ds.count == 0) {
      ds.mean_s = Vector::Zero(p.part.d_s);
      ds.mean_s_tilde = Vector::Zero(p.part.d_s);
    }
    ds.mean_s += e.s;
    ds.mean_s_tilde += e.s_tilde;
    ds.count += 1;
  };

  for (int g = 0; g < n_groups; ++g) {
    Index taken = 0;
    for (Index k = 0; k < pool_n && taken < donors_per_style; ++k) {
      const Index row = order[static_cast<std::size_t>(k)];
      if (restrict_to_source_domain &&
          static_cast<int>(donor_pool.domain[static_cast<std::size_t>(row)]) != g)
        continue;
      accumulate(neg[static_cast<std::size_t>(g)], row);
      ++taken;
    }
    taken = 0;
    for (Index k = pool_n; k > 0 && taken < donors_per_style; --k) {
      const Index row = order[static_cast<std::size_t>(k - 1)];
      if (restrict_to_source_domain &&
          static_cast<int>(donor_pool.domain[static_cast<std::size_t>(row)]) != g)
        continue;
      accumulate(pos[static_cast<std::size_t>(g)], row);
      ++taken;
    }
    if (neg[static_cast<std::size_t>(g)].count == 0 ||
        pos[static_cast<std::size_t>(g)].count == 0)
      throw ValidationError("flip_comparison: donor pool has no sample for a style group");
  }
  for (int g = 0; g < n_groups; ++g) {
    for (DonorSet* ds : {&neg[static_cast<std::size_t>(g)], &pos[static_cast<std::size_t>(g)]}) {
      ds->mean_s /= static_cast<double>(ds->count);
      ds->mean_s_tilde /= static_cast<double>(ds->count);
    }
  }

  NLLStats stats;
  const Index n = test_batch.size();
  stats.nll_base.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const int domain = static_cast<int>(test_batch.domain[static_cast<std::size_t>(i)]);
    const int g = restrict_to_source_domain ? domain : 0;
    const Vector x = test_batch.x.row(i).transpose();
    const Encoded e = encode_mean(p, x, domain);

    // Flip toward the opposite of the sample's true style sign.
    const bool is_positive = test_batch.s_tilde(i, 0) >= 0.0;
    const DonorSet& target =
        is_positive ? neg[static_cast<std::size_t>(g)] : pos[static_cast<std::size_t>(g)];

    const double base = model_nll(p, x, e.c, e.s, domain);
    const double naive = model_nll(p, x, e.c, target.mean_s, domain);
    const Vector s_causal =
        style_flow_inverse(p.r_s, target.mean_s_tilde, style_context(p, e.c, domain));
    const double causal = model_nll(p, x, e.c, s_causal, domain);

    stats.nll_base.push_back(base);
    stats.nll_flip_s.push_back(naive);
    stats.nll_flip_stilde.push_back(causal);
  }
  const double inv = 1.0 / static_cast<double>(std::max<Index>(n, 1));
  stats.mean_base = std::accumulate(stats.nll_base.begin(), stats.nll_base.end(), 0.0) * inv;
  stats.mean_flip_s =
      std::accumulate(stats.nll_flip_s.begin(), stats.nll_flip_s.end(), 0.0) * inv;
  stats.mean_flip_stilde =
      std::accumulate(stats.nll_flip_stilde.begin(), stats.nll_flip_stilde.end(), 0.0) * inv;
  return stats;
}

std::string nll_stats_to_csv(const NLLStats& stats) {
  std::string out = "sample_id,nll_base,nll_flip_s,nll_flip_stilde\n";
  char buf[160];
  for (std::size_t i = 0; i < stats.nll_base.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g\n", i, stats.nll_base[i],
                  stats.nll_flip_s[i], stats.nll_flip_stilde[i]);
    out += buf;
  }
  return out;
}

}  // namespace matte
