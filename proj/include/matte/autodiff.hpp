#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <vector>

#include "matte/types.hpp"

// Minimal reverse-mode tape. Local partial derivatives are stored at record
// time, so the backward sweep is a single reverse loop with no op dispatch.
// One tape is active per thread; training clears and refills it per batch.

namespace matte::ad {

class Tape {
 public:
  struct Node {
    std::int32_t a;
    std::int32_t b;
    double wa;
    double wb;
  };

  std::int32_t leaf() {
    nodes_.push_back({-1, -1, 0.0, 0.0});
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  std::int32_t record(std::int32_t a, double wa, std::int32_t b = -1, double wb = 0.0) {
    nodes_.push_back({a, b, wa, wb});
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  std::size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  // Adjoints of every node with respect to `root`; adj[i] = d root / d node_i.
  std::vector<double> backward(std::int32_t root) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    if (root < 0) return adj;
    adj[static_cast<std::size_t>(root)] = 1.0;
    for (std::int32_t i = root; i >= 0; --i) {
      const double g = adj[static_cast<std::size_t>(i)];
      if (g == 0.0) continue;
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.a >= 0) adj[static_cast<std::size_t>(n.a)] += n.wa * g;
      if (n.b >= 0) adj[static_cast<std::size_t>(n.b)] += n.wb * g;
    }
    return adj;
  }

 private:
  std::vector<Node> nodes_;
};

inline Tape*& active_tape() {
  thread_local Tape* tape = nullptr;
  return tape;
}

// Scalar carrying its value plus a tape index; idx < 0 marks a constant that
// does not participate in differentiation.
struct Var {
  double v = 0.0;
  std::int32_t idx = -1;

  Var() = default;
  Var(double c) : v(c) {}  // NOLINT: implicit constant lift is intended
  Var(double value, std::int32_t index) : v(value), idx(index) {}

  static Var leaf(double value) { return Var(value, active_tape()->leaf()); }

  Var& operator+=(const Var& o);
  Var& operator-=(const Var& o);
  Var& operator*=(const Var& o);
  Var& operator/=(const Var& o);
};

inline Var make_var(double value, const Var& a, double wa) {
  if (a.idx < 0) return Var(value);
  return Var(value, active_tape()->record(a.idx, wa));
}

inline Var make_var(double value, const Var& a, double wa, const Var& b, double wb) {
  if (a.idx < 0 && b.idx < 0) return Var(value);
  if (b.idx < 0) return Var(value, active_tape()->record(a.idx, wa));
  if (a.idx < 0) return Var(value, active_tape()->record(b.idx, wb));
  return Var(value, active_tape()->record(a.idx, wa, b.idx, wb));
}

inline Var operator+(const Var& a, const Var& b) { return make_var(a.v + b.v, a, 1.0, b, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return make_var(a.v - b.v, a, 1.0, b, -1.0); }
inline Var operator*(const Var& a, const Var& b) { return make_var(a.v * b.v, a, b.v, b, a.v); }
inline Var operator/(const Var& a, const Var& b) {
  const double inv = 1.0 / b.v;
  return make_var(a.v * inv, a, inv, b, -a.v * inv * inv);
}
inline Var operator-(const Var& a) { return make_var(-a.v, a, -1.0); }
inline Var operator+(const Var& a) { return a; }

inline Var& Var::operator+=(const Var& o) { return *this = *this + o; }
inline Var& Var::operator-=(const Var& o) { return *this = *this - o; }
inline Var& Var::operator*=(const Var& o) { return *this = *this * o; }
inline Var& Var::operator/=(const Var& o) { return *this = *this / o; }

inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }
inline bool operator<=(const Var& a, const Var& b) { return a.v <= b.v; }
inline bool operator>=(const Var& a, const Var& b) { return a.v >= b.v; }
inline bool operator==(const Var& a, const Var& b) { return a.v == b.v; }
inline bool operator!=(const Var& a, const Var& b) { return a.v != b.v; }

inline Var exp(const Var& a) {
  const double e = std::exp(a.v);
  return make_var(e, a, e);
}
inline Var log(const Var& a) { return make_var(std::log(a.v), a, 1.0 / a.v); }
inline Var sqrt(const Var& a) {
  const double r = std::sqrt(a.v);
  return make_var(r, a, 0.5 / r);
}
inline Var tanh(const Var& a) {
  const double t = std::tanh(a.v);
  return make_var(t, a, 1.0 - t * t);
}
inline Var sigmoid(const Var& a) {
  const double s = a.v >= 0.0 ? 1.0 / (1.0 + std::exp(-a.v))
                              : std::exp(a.v) / (1.0 + std::exp(a.v));
  return make_var(s, a, s * (1.0 - s));
}
// |x| with subgradient 0 at the kink.
inline Var abs(const Var& a) {
  const double s = a.v > 0.0 ? 1.0 : (a.v < 0.0 ? -1.0 : 0.0);
  return make_var(std::fabs(a.v), a, s);
}
inline Var pow(const Var& a, double p) {
  return make_var(std::pow(a.v, p), a, p * std::pow(a.v, p - 1.0));
}

// Eigen interop.
inline const Var& conj(const Var& a) { return a; }
inline const Var& real(const Var& a) { return a; }
inline Var imag(const Var&) { return Var(0.0); }
inline Var abs2(const Var& a) { return a * a; }

inline double value(const Var& a) { return a.v; }
inline double value(double a) { return a; }

}  // namespace matte::ad

namespace Eigen {
template <>
struct NumTraits<matte::ad::Var> : NumTraits<double> {
  using Real = matte::ad::Var;
  using NonInteger = matte::ad::Var;
  using Nested = matte::ad::Var;
  using Literal = double;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 3,
    MulCost = 3,
  };
};

template <typename BinaryOp>
struct ScalarBinaryOpTraits<matte::ad::Var, double, BinaryOp> {
  typedef matte::ad::Var ReturnType;
};
template <typename BinaryOp>
struct ScalarBinaryOpTraits<double, matte::ad::Var, BinaryOp> {
  typedef matte::ad::Var ReturnType;
};
}  // namespace Eigen
