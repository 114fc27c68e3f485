#pragma once

#include <vector>

#include "matte/rng.hpp"
#include "matte/types.hpp"

namespace matte {

enum class Act { Identity, Tanh };

// Plain feed-forward map. Templated on the scalar so the same code runs on
// double for evaluation and on the reverse-mode scalar during training.
template <class T>
struct DenseMapT {
  std::vector<MatrixT<T>> W;  // out x in per layer
  std::vector<VectorT<T>> b;
  std::vector<Act> act;

  Index n_layers() const { return static_cast<Index>(W.size()); }
  Index in_dim() const { return W.empty() ? 0 : W.front().cols(); }
  Index out_dim() const { return W.empty() ? 0 : W.back().rows(); }
};

using DenseMap = DenseMapT<double>;

template <class T>
VectorT<T> dense_forward(const DenseMapT<T>& m, const VectorT<T>& v) {
  if (m.W.empty()) return v;
  if (v.size() != m.in_dim())
    throw ValidationError("dense_forward: input size does not match first layer");
  VectorT<T> h = v;
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    VectorT<T> pre = m.W[l] * h + m.b[l];
    if (m.act[l] == Act::Tanh) {
      using std::tanh;
      for (Index i = 0; i < pre.size(); ++i) pre[i] = tanh(pre[i]);
    }
    h = std::move(pre);
  }
  return h;
}

// Exact input-output Jacobian: product of per-layer Jacobians accumulated
// alongside the forward pass.
template <class T>
MatrixT<T> dense_jacobian(const DenseMapT<T>& m, const VectorT<T>& v) {
  if (m.W.empty())
    return MatrixT<T>(MatrixT<T>::Identity(v.size(), v.size()));
  if (v.size() != m.in_dim())
    throw ValidationError("dense_jacobian: input size does not match first layer");
  VectorT<T> h = v;
  MatrixT<T> jac;
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    VectorT<T> pre = m.W[l] * h + m.b[l];
    MatrixT<T> layer = m.W[l];
    if (m.act[l] == Act::Tanh) {
      using std::tanh;
      for (Index i = 0; i < pre.size(); ++i) {
        pre[i] = tanh(pre[i]);
        const T d = T(1.0) - pre[i] * pre[i];
        layer.row(i) *= d;
      }
    }
    jac = (l == 0) ? layer : MatrixT<T>(layer * jac);
    h = std::move(pre);
  }
  return jac;
}

inline DenseMap make_dense(const std::vector<Index>& sizes, const std::vector<Act>& acts,
                           Rng& rng, double weight_scale) {
  if (sizes.size() < 2 || acts.size() != sizes.size() - 1)
    throw ValidationError("make_dense: need sizes.size() == acts.size() + 1");
  DenseMap m;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Matrix w(sizes[l + 1], sizes[l]);
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = weight_scale * rng.normal();
    m.W.push_back(std::move(w));
    m.b.push_back(Vector::Zero(sizes[l + 1]));
    m.act.push_back(acts[l]);
  }
  return m;
}

}  // namespace matte
