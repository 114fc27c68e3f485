#pragma once

#include <algorithm>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "matte/autodiff.hpp"
#include "matte/dense.hpp"
#include "matte/flows.hpp"
#include "matte/types.hpp"

namespace matte {

struct ModelArch {
  int enc_hidden = 16;
  int dec_hidden = 16;
  int flow_layers = 2;   // content flow depth; 0 disables it
  int flow_hidden = 8;   // dense-sigmoid width
  int spline_bins = 8;
  double spline_bound = 5.0;
  int hyper_hidden = 16;
};

// All learnable state of the estimator. The same struct instantiated with the
// reverse-mode scalar is what the training step differentiates through.
template <class T>
struct ModelParamsT {
  PartitionSpec part;
  int n_domains = 0;
  int u_dim = 0;
  // When false the style flow is conditioned on the domain only — the
  // independence-assuming ablation.
  bool style_context_uses_content = true;

  DenseMapT<T> encoder;    // x -> [mu, log sigma]
  DenseMapT<T> decoder;    // [c, s] -> x_hat
  ContentFlowT<T> r_c;     // c -> c~ given u
  StyleFlowT<T> r_s;       // s -> s~ given (alpha ? c)
  DenseMapT<T> attention;  // [c, u] -> alpha (tanh)
  MatrixT<T> U;            // n_domains x u_dim domain embeddings
  VectorT<T> mask_logits;  // d_c soft-mask logits
};

using ModelParams = ModelParamsT<double>;

ModelParams init_model(const PartitionSpec& part, int n_domains, int u_dim,
                       const ModelArch& arch, std::uint64_t seed);

// Visits every parameter tensor in a fixed order; the same order defines the
// flattened parameter vector, the tape leaf layout and the checkpoint layout.
template <class T, class F>
void for_each_tensor(ModelParamsT<T>& p, F&& f) {
  const auto dense = [&](const std::string& name, DenseMapT<T>& m) {
    for (std::size_t l = 0; l < m.W.size(); ++l) {
      f(name + ".W" + std::to_string(l), m.W[l]);
      f(name + ".b" + std::to_string(l), m.b[l]);
    }
  };
  dense("encoder", p.encoder);
  dense("decoder", p.decoder);
  dense("r_c.hyper", p.r_c.hyper);
  dense("r_s.hyper", p.r_s.hyper);
  dense("attention", p.attention);
  f("U", p.U);
  f("mask_logits", p.mask_logits);
}

template <class T, class F>
void for_each_tensor(const ModelParamsT<T>& p, F&& f) {
  for_each_tensor(const_cast<ModelParamsT<T>&>(p), [&](const std::string& n, auto& t) {
    f(n, static_cast<const std::remove_reference_t<decltype(t)>&>(t));
  });
}

namespace detail {

template <class T2, class T1, class Conv>
DenseMapT<T2> cast_dense(const DenseMapT<T1>& m, Conv conv) {
  DenseMapT<T2> out;
  out.act = m.act;
  for (const auto& w : m.W) {
    MatrixT<T2> o(w.rows(), w.cols());
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) o(i, j) = conv(w(i, j));
    out.W.push_back(std::move(o));
  }
  for (const auto& b : m.b) {
    VectorT<T2> o(b.size());
    for (Index i = 0; i < b.size(); ++i) o[i] = conv(b[i]);
    out.b.push_back(std::move(o));
  }
  return out;
}

}  // namespace detail

template <class T2, class T1, class Conv>
ModelParamsT<T2> cast_params(const ModelParamsT<T1>& p, Conv conv) {
  ModelParamsT<T2> out;
  out.part = p.part;
  out.n_domains = p.n_domains;
  out.u_dim = p.u_dim;
  out.style_context_uses_content = p.style_context_uses_content;
  out.encoder = detail::cast_dense<T2>(p.encoder, conv);
  out.decoder = detail::cast_dense<T2>(p.decoder, conv);
  out.r_c.dim = p.r_c.dim;
  out.r_c.n_layers = p.r_c.n_layers;
  out.r_c.hidden = p.r_c.hidden;
  out.r_c.hyper = detail::cast_dense<T2>(p.r_c.hyper, conv);
  out.r_s.dim = p.r_s.dim;
  out.r_s.n_bins = p.r_s.n_bins;
  out.r_s.bound = p.r_s.bound;
  out.r_s.hyper = detail::cast_dense<T2>(p.r_s.hyper, conv);
  out.attention = detail::cast_dense<T2>(p.attention, conv);
  out.U.resize(p.U.rows(), p.U.cols());
  for (Index j = 0; j < p.U.cols(); ++j)
    for (Index i = 0; i < p.U.rows(); ++i) out.U(i, j) = conv(p.U(i, j));
  out.mask_logits.resize(p.mask_logits.size());
  for (Index i = 0; i < p.mask_logits.size(); ++i) out.mask_logits[i] = conv(p.mask_logits[i]);
  return out;
}

// Parameters as tape leaves, in for_each_tensor order, on the active tape.
inline ModelParamsT<ad::Var> lift(const ModelParams& p) {
  return cast_params<ad::Var>(p, [](double v) { return ad::Var::leaf(v); });
}

inline ModelParams zeros_like(const ModelParams& p) {
  return cast_params<double>(p, [](double) { return 0.0; });
}

// Adjoints of the lifted parameters, shaped like the parameter struct.
ModelParams extract_grads(const ModelParamsT<ad::Var>& lifted, const std::vector<double>& adj);

// --- model operations -------------------------------------------------------

template <class T>
struct EncodeResult {
  VectorT<T> mu, sigma, z;
};

// Reparameterized posterior sample: z = mu + sigma .* noise with the noise
// supplied by the caller.
template <class T>
EncodeResult<T> encode(const ModelParamsT<T>& p, const VectorT<T>& x, const VectorT<T>& noise) {
  using std::exp;
  const int d_z = p.part.d_z();
  if (x.size() != p.part.d_x) throw ValidationError("encode: x has wrong length");
  if (noise.size() != d_z) throw ValidationError("encode: noise has wrong length");
  const VectorT<T> out = dense_forward(p.encoder, x);
  EncodeResult<T> r;
  r.mu = out.head(d_z);
  r.sigma.resize(d_z);
  for (Index i = 0; i < d_z; ++i) r.sigma[i] = exp(out[d_z + i]);
  r.z = r.mu + r.sigma.cwiseProduct(noise);
  return r;
}

// c = sigmoid(mask) .* z_content, s = z_style.
template <class T>
std::pair<VectorT<T>, VectorT<T>> split_and_mask(const ModelParamsT<T>& p, const VectorT<T>& z) {
  if (z.size() != p.part.d_z()) throw ValidationError("split_and_mask: z has wrong length");
  VectorT<T> c(p.part.d_c);
  for (Index i = 0; i < p.part.d_c; ++i)
    c[i] = detail::sigmoid_s(p.mask_logits[i]) * z[i];
  VectorT<T> s = z.tail(p.part.d_s);
  return {std::move(c), std::move(s)};
}

template <class T>
struct ExogenizeResult {
  VectorT<T> c_tilde, s_tilde;
  T logdet_c, logdet_s;
};

// Pushes (c, s) through the conditional flows. The style-flow context is
// alpha .* c with alpha from the attention map over [c, u]; in the
// independence ablation it is the attention output over [0, u] alone.
template <class T>
ExogenizeResult<T> exogenize(const ModelParamsT<T>& p, const VectorT<T>& c, const VectorT<T>& s,
                             int domain) {
  if (domain < 0 || domain >= p.n_domains)
    throw ValidationError("exogenize: domain id out of range");
  const VectorT<T> u = p.U.row(domain).transpose();

  ExogenizeResult<T> r;
  const FlowResult<T> fc = content_flow_forward(p.r_c, c, u);
  r.c_tilde = fc.out;
  r.logdet_c = fc.logdet;

  VectorT<T> attn_in(p.part.d_c + p.u_dim);
  if (p.style_context_uses_content)
    attn_in << c, u;
  else
    attn_in << VectorT<T>(VectorT<T>::Zero(p.part.d_c)), u;
  const VectorT<T> alpha = dense_forward(p.attention, attn_in);
  const VectorT<T> ctx = p.style_context_uses_content ? VectorT<T>(alpha.cwiseProduct(c)) : alpha;

  const FlowResult<T> fs = style_flow_forward(p.r_s, s, ctx);
  r.s_tilde = fs.out;
  r.logdet_s = fs.logdet;
  return r;
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Reconstruction NLL under a unit-variance Gaussian decoder plus the
// single-sample KL in exogenous space: the Gaussian posterior log-density at
// the drawn z, pushed through the flows via their logdets, against
// log N(z~; 0, I). The 2*pi constants cancel between the two densities; when
// the flows are the identity and q(z|x) = N(0, I) the estimate is exactly
// zero at every draw.
template <class T>
std::pair<T, T> loss_vae(const ModelParamsT<T>& p, const VectorT<T>& x, int domain,
                         const VectorT<T>& noise) {
  using std::log;
  const EncodeResult<T> enc = encode(p, x, noise);
  const auto [c, s] = split_and_mask(p, enc.z);
  const ExogenizeResult<T> ex = exogenize(p, c, s, domain);

  VectorT<T> dec_in(p.part.d_z());
  dec_in << c, s;
  const VectorT<T> x_hat = dense_forward(p.decoder, dec_in);

  T recon = T(0.5 * p.part.d_x * kLog2Pi);
  for (Index i = 0; i < x.size(); ++i) {
    const T d = x[i] - x_hat[i];
    recon += T(0.5) * d * d;
  }

  // log q(z|x) at the sample, without the 2*pi constant
  T log_q(0.0);
  for (Index i = 0; i < enc.sigma.size(); ++i)
    log_q -= log(enc.sigma[i]) + T(0.5) * noise[i] * noise[i];

  // log N(z~; 0, I), same constant dropped
  T log_prior(0.0);
  for (Index i = 0; i < ex.c_tilde.size(); ++i)
    log_prior -= T(0.5) * ex.c_tilde[i] * ex.c_tilde[i];
  for (Index i = 0; i < ex.s_tilde.size(); ++i)
    log_prior -= T(0.5) * ex.s_tilde[i] * ex.s_tilde[i];

  const T kl = log_q - ex.logdet_c - ex.logdet_s - log_prior;
  return {recon, kl};
}

// Mean over the batch of the l1 mass of the decoder-Jacobian style columns.
// The gradient flows through the Jacobian entries themselves.
template <class T>
T loss_sparsity(const ModelParamsT<T>& p, const std::vector<VectorT<T>>& z_batch) {
  if (z_batch.empty()) throw ValidationError("loss_sparsity: empty batch");
  using std::abs;
  T acc(0.0);
  for (const VectorT<T>& z : z_batch) {
    const MatrixT<T> jac = dense_jacobian(p.decoder, z);
    for (Index j = p.part.d_c; j < p.part.d_z(); ++j)
      for (Index i = 0; i < jac.rows(); ++i) acc += abs(jac(i, j));
  }
  return acc / T(static_cast<double>(z_batch.size()));
}

// From the batch-mean absolute Jacobian, pick the K rows most driven by style
// and the K rows least driven by content (selection under stop-gradient, ties
// broken toward the lower row index) and penalize the content mass on their
// intersection.
template <class T>
T loss_partial(const ModelParamsT<T>& p, const std::vector<VectorT<T>>& z_batch, int k_select) {
  if (z_batch.empty()) throw ValidationError("loss_partial: empty batch");
  if (k_select < 0 || k_select > p.part.d_x)
    throw ValidationError("loss_partial: K must lie in [0, d_x]");
  using std::abs;
  const Index d_x = p.part.d_x;
  const Index d_z = p.part.d_z();
  MatrixT<T> mean_abs(d_x, d_z);
  for (Index j = 0; j < d_z; ++j)
    for (Index i = 0; i < d_x; ++i) mean_abs(i, j) = T(0.0);
  for (const VectorT<T>& z : z_batch) {
    const MatrixT<T> jac = dense_jacobian(p.decoder, z);
    for (Index j = 0; j < d_z; ++j)
      for (Index i = 0; i < d_x; ++i) mean_abs(i, j) += abs(jac(i, j));
  }
  const T inv_n(1.0 / static_cast<double>(z_batch.size()));
  for (Index j = 0; j < d_z; ++j)
    for (Index i = 0; i < d_x; ++i) mean_abs(i, j) *= inv_n;

  std::vector<double> style_mass(static_cast<std::size_t>(d_x), 0.0);
  std::vector<double> content_mass(static_cast<std::size_t>(d_x), 0.0);
  for (Index i = 0; i < d_x; ++i) {
    for (Index j = p.part.d_c; j < d_z; ++j)
      style_mass[static_cast<std::size_t>(i)] += ad::value(mean_abs(i, j));
    for (Index j = 0; j < p.part.d_c; ++j)
      content_mass[static_cast<std::size_t>(i)] += ad::value(mean_abs(i, j));
  }

  std::vector<Index> idx(static_cast<std::size_t>(d_x));
  for (Index i = 0; i < d_x; ++i) idx[static_cast<std::size_t>(i)] = i;
  auto top = idx;
  std::stable_sort(top.begin(), top.end(), [&](Index a, Index b) {
    return style_mass[static_cast<std::size_t>(a)] > style_mass[static_cast<std::size_t>(b)];
  });
  auto bottom = idx;
  std::stable_sort(bottom.begin(), bottom.end(), [&](Index a, Index b) {
    return content_mass[static_cast<std::size_t>(a)] < content_mass[static_cast<std::size_t>(b)];
  });

  std::vector<bool> in_style(static_cast<std::size_t>(d_x), false);
  for (int k = 0; k < k_select; ++k) in_style[static_cast<std::size_t>(top[k])] = true;
  T acc(0.0);
  for (int k = 0; k < k_select; ++k) {
    const Index i = bottom[static_cast<std::size_t>(k)];
    if (!in_style[static_cast<std::size_t>(i)]) continue;
    for (Index j = 0; j < p.part.d_c; ++j) acc += mean_abs(i, j);
  }
  return acc;
}

// l1 of the active soft-mask weights.
template <class T>
T loss_cmask(const ModelParamsT<T>& p) {
  T acc(0.0);
  for (Index i = 0; i < p.mask_logits.size(); ++i)
    acc += detail::sigmoid_s(p.mask_logits[i]);
  return acc;
}

// --- checkpoints -------------------------------------------------------------

// Writes <dir>/model.json (architecture) and <dir>/params.{json,bin}.
void save_model(const std::string& dir, const ModelParams& p);
ModelParams load_model(const std::string& dir);

}  // namespace matte
