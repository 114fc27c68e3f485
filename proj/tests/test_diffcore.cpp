#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "matte/autodiff.hpp"
#include "matte/dense.hpp"
#include "matte/flows.hpp"
#include "matte/gradcheck.hpp"
#include "matte/io.hpp"
#include "matte/rng.hpp"

using namespace matte;

namespace {

Vector randn(Index n, Rng& rng) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Numerical log|det| of a map with diagonal Jacobian (both flows transform
// coordinates independently).
template <class Fwd>
double numeric_diag_logdet(Fwd&& f, const Vector& x, double h = 1e-6) {
  double acc = 0.0;
  for (Index k = 0; k < x.size(); ++k) {
    Vector xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    acc += std::log(std::abs((f(xp)[k] - f(xm)[k]) / (2.0 * h)));
  }
  return acc;
}

}  // namespace

TEST_CASE("dense forward identity and bias cases") {
  DenseMap id;
  id.W = {Matrix::Identity(3, 3)};
  id.b = {Vector::Zero(3)};
  id.act = {Act::Identity};
  const Vector v = (Vector(3) << 0.3, -1.2, 2.0).finished();
  CHECK((dense_forward(id, v) - v).norm() == doctest::Approx(0.0));

  DenseMap biased;
  biased.W = {Matrix::Zero(2, 3)};
  biased.b = {(Vector(2) << 0.5, -0.25).finished()};
  biased.act = {Act::Tanh};
  const Vector out = dense_forward(biased, v);
  CHECK(out[0] == doctest::Approx(std::tanh(0.5)));
  CHECK(out[1] == doctest::Approx(std::tanh(-0.25)));
}

TEST_CASE("dense forward on basis vectors matches per-column evaluation") {
  Rng rng(1234);
  const DenseMap m = make_dense({4, 6, 3}, {Act::Tanh, Act::Identity}, rng, 0.5);
  for (Index j = 0; j < 4; ++j) {
    Vector e = Vector::Zero(4);
    e[j] = 1.0;
    const Vector manual =
        m.W[1] * Vector((m.W[0] * e + m.b[0]).array().tanh().matrix()) + m.b[1];
    CHECK((dense_forward(m, e) - manual).norm() < 1e-12);
  }
}

TEST_CASE("dense jacobian exact cases") {
  DenseMap lin;
  Rng rng(7);
  lin.W = {Matrix::Random(3, 4)};
  lin.b = {Vector::Random(3)};
  lin.act = {Act::Identity};
  const Vector at = randn(4, rng);
  CHECK((dense_jacobian(lin, at) - lin.W[0]).norm() < 1e-14);

  DenseMap unit;
  unit.W = {Matrix::Ones(1, 1)};
  unit.b = {Vector::Zero(1)};
  unit.act = {Act::Tanh};
  CHECK(dense_jacobian(unit, Vector(Vector::Zero(1)))(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("dense jacobian matches central differences") {
  Rng rng(21);
  const DenseMap m = make_dense({5, 8, 4}, {Act::Tanh, Act::Identity}, rng, 0.6);
  const Vector at = randn(5, rng);
  const Matrix jac = dense_jacobian(m, at);
  const double h = 1e-4;
  for (Index j = 0; j < 5; ++j) {
    Vector xp = at, xm = at;
    xp[j] += h;
    xm[j] -= h;
    const Vector col = (dense_forward(m, xp) - dense_forward(m, xm)) / (2.0 * h);
    for (Index i = 0; i < 4; ++i) {
      const double denom = std::max({std::abs(jac(i, j)), std::abs(col[i]), 1e-12});
      CHECK(std::abs(jac(i, j) - col[i]) / denom < 1e-5);
    }
  }
}

TEST_CASE("content flow with zero hyper-map is the sigmoid link") {
  ContentFlow f = make_content_flow(3, 1, 8, 4);
  Rng rng(3);
  const Vector c = randn(3, rng);
  const Vector ctx = randn(4, rng);
  const auto res = content_flow_forward(f, c, ctx);
  double logdet_expected = 0.0;
  for (Index k = 0; k < 3; ++k) {
    CHECK(res.out[k] == doctest::Approx(sigmoid(c[k])));
    logdet_expected += std::log(sigmoid(c[k]) * (1.0 - sigmoid(c[k])));
  }
  CHECK(res.logdet == doctest::Approx(logdet_expected));
  const double numeric = numeric_diag_logdet(
      [&](const Vector& x) { return content_flow_forward(f, x, ctx).out; }, c);
  CHECK(std::abs(res.logdet - numeric) < 1e-5);
}

TEST_CASE("content flow conditioning is live") {
  ContentFlow f = make_content_flow(2, 2, 8, 3);
  Rng rng(5);
  for (auto& w : f.hyper.W)
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = 0.4 * rng.normal();
  const Vector c = randn(2, rng);
  const auto a = content_flow_forward(f, c, (Vector(3) << 1.0, 0.0, -0.5).finished());
  const auto b = content_flow_forward(f, c, (Vector(3) << -1.0, 0.7, 0.2).finished());
  CHECK((a.out - b.out).norm() > 1e-6);
}

TEST_CASE("content flow logdet matches numerics across layers") {
  Rng rng(9);
  ContentFlow two = make_content_flow(3, 2, 8, 4);
  for (auto& w : two.hyper.W)
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = 0.3 * rng.normal();
  for (int trial = 0; trial < 100; ++trial) {
    const Vector c = randn(3, rng);
    const Vector ctx = randn(4, rng);
    const auto res = content_flow_forward(two, c, ctx);
    const double numeric = numeric_diag_logdet(
        [&](const Vector& x) { return content_flow_forward(two, x, ctx).out; }, c);
    CHECK(std::abs(res.logdet - numeric) < 1e-5);
  }
}

TEST_CASE("zero-layer content flow is the identity") {
  const ContentFlow f = make_content_flow(3, 0, 8, 4);
  Rng rng(10);
  const Vector c = randn(3, rng);
  const auto res = content_flow_forward(f, c, randn(4, rng));
  CHECK((res.out - c).norm() == 0.0);
  CHECK(res.logdet == 0.0);
}

TEST_CASE("identity-initialized spline is the identity") {
  const StyleFlow f = make_style_flow(2, 8, 5.0, 3);
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector s = 3.0 * randn(2, rng);
    const Vector ctx = randn(3, rng);
    const auto res = style_flow_forward(f, s, ctx);
    CHECK((res.out - s).norm() < 1e-12);
    CHECK(std::abs(res.logdet) < 1e-12);
  }
}

TEST_CASE("spline round trip under random parameters") {
  StyleFlow f = make_style_flow(2, 8, 5.0, 3);
  Rng rng(13);
  for (auto& w : f.hyper.W)
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = 0.5 * rng.normal();
  for (auto& b : f.hyper.b)
    for (Index i = 0; i < b.size(); ++i) b[i] = 0.5 * rng.normal();

  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Vector s = 4.0 * randn(2, rng);  // some points land on the tails
    const Vector ctx = randn(3, rng);
    const auto fwd = style_flow_forward(f, s, ctx);
    const Vector back = style_flow_inverse(f, fwd.out, ctx);
    worst = std::max(worst, (back - s).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("spline identity tails outside the bound") {
  StyleFlow f = make_style_flow(1, 8, 5.0, 2);
  Rng rng(15);
  f.hyper.b[1] = randn(f.param_count(), rng);
  const Vector ctx = Vector::Zero(2);
  for (double v : {-9.0, -5.5, 5.5, 7.25}) {
    const Vector s = Vector::Constant(1, v);
    const auto res = style_flow_forward(f, s, ctx);
    CHECK(res.out[0] == v);  // exactly
  }
}

TEST_CASE("spline forward is strictly increasing per coordinate") {
  StyleFlow f = make_style_flow(1, 8, 5.0, 2);
  Rng rng(17);
  f.hyper.b[1] = randn(f.param_count(), rng);
  const Vector ctx = randn(2, rng);
  double prev = -1e18;
  for (double v = -6.0; v <= 6.0; v += 0.01) {
    const double out = style_flow_forward(f, Vector(Vector::Constant(1, v)), ctx).out[0];
    CHECK(out > prev);
    prev = out;
  }
}

TEST_CASE("spline logdet matches numerical jacobian") {
  StyleFlow f = make_style_flow(2, 8, 5.0, 3);
  Rng rng(19);
  f.hyper.b[1] = 0.7 * randn(f.param_count(), rng);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector s = 3.0 * randn(2, rng);
    const Vector ctx = randn(3, rng);
    const auto res = style_flow_forward(f, s, ctx);
    const double numeric = numeric_diag_logdet(
        [&](const Vector& x) { return style_flow_forward(f, x, ctx).out; }, s);
    CHECK(std::abs(res.logdet - numeric) < 1e-5);
  }
}

TEST_CASE("malformed knot parameters are rejected") {
  Vector raw = Vector::Zero(3 * 8 - 1);
  raw[0] = std::nan("");
  CHECK_THROWS_AS(detail::make_knots<double>(raw, 8, 5.0), ValidationError);
}

TEST_CASE("grad_check on a linear map") {
  Rng rng(23);
  const Vector w = randn(6, rng);
  const auto f = [&w](const Vector& x) { return w.dot(x); };
  const auto g = [&w](const Vector&) { return w; };
  const GradCheckReport rep = grad_check(f, g, randn(6, rng), 1e-5);
  CHECK(rep.max_rel_err < 1e-9);
}

TEST_CASE("grad_check flags a corrupted coordinate") {
  Rng rng(29);
  const Vector w = randn(5, rng);
  const auto f = [&w](const Vector& x) { return w.dot(x); };
  const auto g = [&w](const Vector&) {
    Vector bad = w;
    bad[3] += 0.05;
    return bad;
  };
  const GradCheckReport rep = grad_check(f, g, randn(5, rng), 1e-5);
  CHECK(rep.max_rel_err > 1e-3);
  CHECK(rep.failing_coordinate == 3);
}

TEST_CASE("reverse-mode tape agrees with central differences") {
  ad::Tape tape;
  ad::active_tape() = &tape;
  const auto loss = [&tape](const Vector& x) {
    tape.clear();
    std::vector<ad::Var> v;
    for (Index i = 0; i < x.size(); ++i) v.push_back(ad::Var::leaf(x[i]));
    ad::Var out = ad::tanh(v[0] * v[1]) + ad::exp(v[2] * ad::Var(0.3)) / (v[3] + ad::Var(2.0)) +
                  ad::abs(v[4]) * ad::sigmoid(v[0] - v[4]) +
                  ad::sqrt(v[2] * v[2] + ad::Var(1.0)) + ad::log(v[1] * v[1] + ad::Var(0.5));
    return out;
  };
  const auto f = [&](const Vector& x) { return loss(x).v; };
  const auto g = [&](const Vector& x) {
    const ad::Var out = loss(x);
    const std::vector<double> adj = tape.backward(out.idx);
    Vector grad(x.size());
    for (Index i = 0; i < x.size(); ++i) grad[i] = adj[static_cast<std::size_t>(i)];
    return grad;
  };
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const GradCheckReport rep = grad_check(f, g, randn(5, rng), 1e-5);
    CHECK(rep.max_rel_err < 1e-7);
  }
  ad::active_tape() = nullptr;
}

TEST_CASE("tape works through Eigen matrix products") {
  ad::Tape tape;
  ad::active_tape() = &tape;
  MatrixT<ad::Var> a(2, 2);
  a(0, 0) = ad::Var::leaf(1.5);
  a(0, 1) = ad::Var::leaf(-0.5);
  a(1, 0) = ad::Var::leaf(2.0);
  a(1, 1) = ad::Var::leaf(0.25);
  VectorT<ad::Var> x(2);
  x[0] = ad::Var(0.7);
  x[1] = ad::Var(-1.1);
  const VectorT<ad::Var> y = a * x;
  const ad::Var out = y[0] * y[0] + y[1];
  const std::vector<double> adj = tape.backward(out.idx);
  const double y0 = 1.5 * 0.7 + -0.5 * -1.1;
  CHECK(adj[static_cast<std::size_t>(a(0, 0).idx)] == doctest::Approx(2.0 * y0 * 0.7));
  CHECK(adj[static_cast<std::size_t>(a(1, 1).idx)] == doctest::Approx(-1.1));
  ad::active_tape() = nullptr;
}

TEST_CASE("named tensor container round trip") {
  const std::string dir = "build_test_tensors";
  std::filesystem::create_directories(dir);
  Rng rng(37);
  std::vector<NamedTensor> tensors;
  tensors.push_back({"a", Matrix::Random(3, 4)});
  tensors.push_back({"b.W0", Matrix::Random(2, 2)});
  tensors.push_back({"c", Matrix(randn(5, rng))});
  save_tensors(dir + "/snap", tensors);
  const auto back = load_tensors(dir + "/snap");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].name == tensors[i].name);
    CHECK((back[i].value - tensors[i].value).norm() == 0.0);
  }
  std::filesystem::remove_all(dir);
}
