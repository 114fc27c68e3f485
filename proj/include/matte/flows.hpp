#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "matte/autodiff.hpp"
#include "matte/dense.hpp"
#include "matte/types.hpp"

namespace matte {

template <class T>
struct FlowResult {
  VectorT<T> out;
  T logdet;
};

namespace detail {

template <class T>
T sigmoid_s(const T& x) {
  using std::exp;
  if (ad::value(x) >= 0.0) return T(1.0) / (T(1.0) + exp(-x));
  const T e = exp(x);
  return e / (T(1.0) + e);
}

template <class T>
T softplus_s(const T& x) {
  using std::exp;
  using std::log;
  if (ad::value(x) > 30.0) return x;
  return log(T(1.0) + exp(x));
}

inline bool finite_value(double x) { return std::isfinite(x); }
inline bool finite_value(const ad::Var& x) { return std::isfinite(x.v); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Content flow: a stack of dense-sigmoid layers applied per coordinate,
//   y = sum_h w_h * sigmoid(a_h * x + b_h),  w = softmax(logits), a = exp(raw),
// so the map is strictly increasing in x for any parameter values. All layer
// parameters come from a hyper-map evaluated on the conditioning vector; a
// zero hyper-map yields exactly the sigmoid link per layer. n_layers = 0 is
// the identity flow.
// ---------------------------------------------------------------------------

template <class T>
struct ContentFlowT {
  int dim = 0;
  int n_layers = 0;
  int hidden = 8;
  DenseMapT<T> hyper;  // ctx -> n_layers * dim * 3*hidden

  Index param_count() const { return static_cast<Index>(n_layers) * dim * 3 * hidden; }
};

using ContentFlow = ContentFlowT<double>;

template <class T>
FlowResult<T> content_flow_forward(const ContentFlowT<T>& f, const VectorT<T>& c,
                                   const VectorT<T>& ctx) {
  if (c.size() != f.dim) throw ValidationError("content_flow_forward: input dim mismatch");
  if (f.n_layers == 0) return {c, T(0.0)};
  const VectorT<T> theta = dense_forward(f.hyper, ctx);
  if (theta.size() != f.param_count())
    throw ValidationError("content_flow_forward: hyper-map output size mismatch");

  using std::exp;
  using std::log;
  const int H = f.hidden;
  VectorT<T> x = c;
  T logdet(0.0);
  for (int l = 0; l < f.n_layers; ++l) {
    for (int k = 0; k < f.dim; ++k) {
      const Index base = (static_cast<Index>(l) * f.dim + k) * 3 * H;
      // softmax over the mixing logits, shifted by the max for stability
      double mx = ad::value(theta[base + 2 * H]);
      for (int h = 1; h < H; ++h) mx = std::max(mx, ad::value(theta[base + 2 * H + h]));
      T wsum(0.0);
      VectorT<T> w(H);
      for (int h = 0; h < H; ++h) {
        w[h] = exp(theta[base + 2 * H + h] - mx);
        wsum += w[h];
      }
      T y(0.0), dy(0.0);
      for (int h = 0; h < H; ++h) {
        const T a = exp(theta[base + h]);
        const T pre = a * x[k] + theta[base + H + h];
        const T t = detail::sigmoid_s(pre);
        const T wn = w[h] / wsum;
        y += wn * t;
        dy += wn * a * t * (T(1.0) - t);
      }
      logdet += log(dy);
      x[k] = y;
    }
  }
  for (Index k = 0; k < x.size(); ++k)
    if (!detail::finite_value(x[k]))
      throw NumericError("content_flow_forward: non-finite output");
  if (!detail::finite_value(logdet))
    throw NumericError("content_flow_forward: non-finite logdet");
  return {std::move(x), logdet};
}

inline ContentFlow make_content_flow(int dim, int n_layers, int hidden, int ctx_dim,
                                     int hyper_hidden = 16) {
  ContentFlow f;
  f.dim = dim;
  f.n_layers = n_layers;
  f.hidden = hidden;
  if (n_layers > 0) {
    const Index out = f.param_count();
    f.hyper.W = {Matrix::Zero(hyper_hidden, ctx_dim), Matrix::Zero(out, hyper_hidden)};
    f.hyper.b = {Vector::Zero(hyper_hidden), Vector::Zero(out)};
    f.hyper.act = {Act::Tanh, Act::Identity};
  }
  return f;
}

// ---------------------------------------------------------------------------
// Style flow: monotone rational-quadratic spline per coordinate with K bins on
// [-B, B] and identity tails. Knot parameters come from a hyper-map on the
// conditioning vector; a zero hyper-map gives the exact identity. Analytically
// invertible, which is what makes the exogenous-style intervention possible.
// ---------------------------------------------------------------------------

template <class T>
struct StyleFlowT {
  int dim = 0;
  int n_bins = 8;
  double bound = 5.0;
  DenseMapT<T> hyper;  // ctx -> dim * (3*n_bins - 1)

  Index param_count() const { return static_cast<Index>(dim) * (3 * n_bins - 1); }
};

using StyleFlow = StyleFlowT<double>;

namespace detail {

template <class T>
struct SplineKnots {
  VectorT<T> xk;  // K+1 knot positions
  VectorT<T> yk;  // K+1 knot values
  VectorT<T> dk;  // K+1 derivatives, dk[0] = dk[K] = 1 for the identity tails
};

constexpr double kMinBinFraction = 1e-3;

// Raw parameter layout per coordinate: [K width logits | K height logits |
// K-1 interior derivative raws]. Throws when the resulting knots are not
// strictly monotone (possible only through non-finite parameters).
template <class T>
SplineKnots<T> make_knots(const VectorT<T>& raw, int n_bins, double bound) {
  using std::exp;
  const int K = n_bins;
  if (raw.size() != 3 * K - 1) throw ValidationError("make_knots: raw parameter size mismatch");

  auto fractions = [&](Index offset) {
    double mx = ad::value(raw[offset]);
    for (int k = 1; k < K; ++k) mx = std::max(mx, ad::value(raw[offset + k]));
    VectorT<T> e(K);
    T sum(0.0);
    for (int k = 0; k < K; ++k) {
      e[k] = exp(raw[offset + k] - mx);
      sum += e[k];
    }
    VectorT<T> fr(K);
    for (int k = 0; k < K; ++k)
      fr[k] = T(kMinBinFraction) + (T(1.0) - T(K * kMinBinFraction)) * (e[k] / sum);
    return fr;
  };

  const VectorT<T> wf = fractions(0);
  const VectorT<T> hf = fractions(K);

  SplineKnots<T> kn;
  kn.xk.resize(K + 1);
  kn.yk.resize(K + 1);
  kn.dk.resize(K + 1);
  kn.xk[0] = T(-bound);
  kn.yk[0] = T(-bound);
  const double span = 2.0 * bound;
  for (int k = 0; k < K; ++k) {
    kn.xk[k + 1] = kn.xk[k] + T(span) * wf[k];
    kn.yk[k + 1] = kn.yk[k] + T(span) * hf[k];
  }
  // Pin the endpoints so the tails join exactly.
  kn.xk[K] = T(bound);
  kn.yk[K] = T(bound);

  // softplus shifted so a zero raw parameter maps to derivative 1
  const double shift = std::log(std::exp(1.0) - 1.0);
  kn.dk[0] = T(1.0);
  kn.dk[K] = T(1.0);
  for (int k = 1; k < K; ++k) kn.dk[k] = softplus_s(T(raw[2 * K + k - 1] + T(shift)));

  for (int k = 0; k < K; ++k) {
    const bool ok = detail::finite_value(kn.xk[k + 1]) && detail::finite_value(kn.yk[k + 1]) &&
                    ad::value(kn.xk[k + 1]) > ad::value(kn.xk[k]) &&
                    ad::value(kn.yk[k + 1]) > ad::value(kn.yk[k]) &&
                    detail::finite_value(kn.dk[k]);
    if (!ok) throw ValidationError("make_knots: non-monotone or non-finite knots");
  }
  return kn;
}

template <class T>
std::vector<SplineKnots<T>> knots_from_ctx(const StyleFlowT<T>& f, const VectorT<T>& ctx) {
  const VectorT<T> theta = dense_forward(f.hyper, ctx);
  if (theta.size() != f.param_count())
    throw ValidationError("style flow: hyper-map output size mismatch");
  std::vector<SplineKnots<T>> all;
  all.reserve(static_cast<std::size_t>(f.dim));
  const Index per = 3 * f.n_bins - 1;
  for (int k = 0; k < f.dim; ++k)
    all.push_back(make_knots<T>(theta.segment(k * per, per), f.n_bins, f.bound));
  return all;
}

// y and log dy/dx for one coordinate.
template <class T>
std::pair<T, T> spline_forward_1d(const SplineKnots<T>& kn, const T& x, double bound) {
  using std::log;
  const int K = static_cast<int>(kn.xk.size()) - 1;
  if (ad::value(x) <= -bound || ad::value(x) >= bound) return {x, T(0.0)};
  int bin = K - 1;
  for (int k = 0; k < K; ++k)
    if (ad::value(x) < ad::value(kn.xk[k + 1])) {
      bin = k;
      break;
    }
  const T w = kn.xk[bin + 1] - kn.xk[bin];
  const T h = kn.yk[bin + 1] - kn.yk[bin];
  const T s = h / w;
  const T d0 = kn.dk[bin], d1 = kn.dk[bin + 1];
  const T xi = (x - kn.xk[bin]) / w;
  const T om = T(1.0) - xi;
  const T q = xi * om;
  const T den = s + (d1 + d0 - T(2.0) * s) * q;
  const T y = kn.yk[bin] + h * (s * xi * xi + d0 * q) / den;
  const T deriv = s * s * (d1 * xi * xi + T(2.0) * s * q + d0 * om * om) / (den * den);
  return {y, log(deriv)};
}

template <class T>
T spline_inverse_1d(const SplineKnots<T>& kn, const T& y, double bound) {
  using std::sqrt;
  const int K = static_cast<int>(kn.xk.size()) - 1;
  if (ad::value(y) <= -bound || ad::value(y) >= bound) return y;
  int bin = K - 1;
  for (int k = 0; k < K; ++k)
    if (ad::value(y) < ad::value(kn.yk[k + 1])) {
      bin = k;
      break;
    }
  const T w = kn.xk[bin + 1] - kn.xk[bin];
  const T h = kn.yk[bin + 1] - kn.yk[bin];
  const T s = h / w;
  const T d0 = kn.dk[bin], d1 = kn.dk[bin + 1];
  const T dy = y - kn.yk[bin];
  const T mix = d1 + d0 - T(2.0) * s;
  const T a = h * (s - d0) + dy * mix;
  const T b = h * d0 - dy * mix;
  const T c = -s * dy;
  const T xi = (T(2.0) * c) / (-b - sqrt(b * b - T(4.0) * a * c));
  return kn.xk[bin] + xi * w;
}

}  // namespace detail

template <class T>
FlowResult<T> style_flow_forward(const StyleFlowT<T>& f, const VectorT<T>& s,
                                 const VectorT<T>& ctx) {
  if (s.size() != f.dim) throw ValidationError("style_flow_forward: input dim mismatch");
  const auto knots = detail::knots_from_ctx(f, ctx);
  VectorT<T> out(f.dim);
  T logdet(0.0);
  for (int k = 0; k < f.dim; ++k) {
    auto [y, ld] = detail::spline_forward_1d(knots[static_cast<std::size_t>(k)], s[k], f.bound);
    out[k] = y;
    logdet += ld;
  }
  for (Index k = 0; k < out.size(); ++k)
    if (!detail::finite_value(out[k])) throw NumericError("style_flow_forward: non-finite output");
  if (!detail::finite_value(logdet))
    throw NumericError("style_flow_forward: non-finite logdet");
  return {std::move(out), logdet};
}

template <class T>
VectorT<T> style_flow_inverse(const StyleFlowT<T>& f, const VectorT<T>& s_tilde,
                              const VectorT<T>& ctx) {
  if (s_tilde.size() != f.dim) throw ValidationError("style_flow_inverse: input dim mismatch");
  const auto knots = detail::knots_from_ctx(f, ctx);
  VectorT<T> out(f.dim);
  for (int k = 0; k < f.dim; ++k)
    out[k] = detail::spline_inverse_1d(knots[static_cast<std::size_t>(k)], s_tilde[k], f.bound);
  return out;
}

inline StyleFlow make_style_flow(int dim, int n_bins, double bound, int ctx_dim,
                                 int hyper_hidden = 16) {
  StyleFlow f;
  f.dim = dim;
  f.n_bins = n_bins;
  f.bound = bound;
  const Index out = f.param_count();
  f.hyper.W = {Matrix::Zero(hyper_hidden, ctx_dim), Matrix::Zero(out, hyper_hidden)};
  f.hyper.b = {Vector::Zero(hyper_hidden), Vector::Zero(out)};
  f.hyper.act = {Act::Tanh, Act::Identity};
  return f;
}

}  // namespace matte
