#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "rkam/error.hpp"
#include "rkam/revstruct.hpp"

using namespace rkam;

namespace {

// Random field with modes |j|_inf <= fill inside a box of order jmax.
AffineTorusField random_field(int n, int N, int jmax, int fill, std::mt19937_64& rng) {
  std::normal_distribution<double> N01;
  AffineTorusField v(n, N, jmax);
  for (auto* s : {&v.a, &v.b, &v.c})
    for (int mode = 0; mode < s->modes(); ++mode) {
      bool inside = true;
      for (int j : s->index(mode)) inside = inside && std::abs(j) <= fill;
      if (!inside) continue;
      for (int c = 0; c < s->dim(); ++c) (*s)(mode, c) = cplx(N01(rng), N01(rng)) * 0.3;
    }
  v.enforce_reality();
  return v;
}

// The affine field as a map on T^n x R^N.
Vec full_eval(const AffineTorusField& v, const Vec& x, const Vec& X) {
  Vec out(v.n() + v.N());
  out.head(v.n()) = v.a.evaluate(as_span(x));
  out.tail(v.N()) = v.b.evaluate(as_span(x)) + v.c.evaluate_matrix(as_span(x)) * X;
  return out;
}

Mat fd_jacobian(const AffineTorusField& v, const Vec& x, const Vec& X, double h = 1e-6) {
  const int n = v.n(), N = v.N();
  Mat J(n + N, n + N);
  for (int k = 0; k < n + N; ++k) {
    Vec xp = x, xm = x, Xp = X, Xm = X;
    if (k < n) {
      xp[k] += h;
      xm[k] -= h;
    } else {
      Xp[k - n] += h;
      Xm[k - n] -= h;
    }
    J.col(k) = (full_eval(v, xp, Xp) - full_eval(v, xm, Xm)) / (2 * h);
  }
  return J;
}

}  // namespace

TEST_CASE("involution acts as (-x, delta y, K z)") {
  InvolutionSpec g(2, 1, 2, -1);
  CHECK(g.N() == 5);
  CHECK(g.fix_dimension() == 2);
  CHECK(InvolutionSpec(2, 1, 2, 1).fix_dimension() == 3);
  CHECK(g.fiber_signs() == (Vec(5) << -1, 1, -1, 1, -1).finished());
  double x[2] = {0.5, -1.0};
  double X[5] = {1, 2, 3, 4, 5};
  g.apply(x, X);
  CHECK(x[0] == -0.5);
  CHECK(x[1] == 1.0);
  CHECK(X[0] == -1.0);
  CHECK(X[1] == 2.0);
  CHECK(X[2] == -3.0);
  CHECK(X[3] == 4.0);
  CHECK_THROWS_AS(InvolutionSpec(1, 0, 1, 0), Error);
}

TEST_CASE("ad_G matches the pointwise push-forward and is an involution") {
  std::mt19937_64 rng(2);
  InvolutionSpec g(1, 1, 1, -1);
  const AffineTorusField v = random_field(1, 3, 3, 3, rng);
  const AffineTorusField w = ad_G(v, g);
  const Vec L = g.fiber_signs();
  for (double x0 : {0.4, 2.5}) {
    Vec x(1), X(3);
    x << x0;
    X << 0.3, -0.7, 1.1;
    // TG V(G w) with G(x, X) = (-x, L X)
    const Vec img = full_eval(v, -x, L.asDiagonal() * X);
    Vec expect(4);
    expect[0] = -img[0];
    expect.tail(3) = L.asDiagonal() * img.tail(3);
    CHECK((full_eval(w, x, X) - expect).cwiseAbs().maxCoeff() < 1e-13);
  }
  CHECK((ad_G(w, g) - v).max_abs_coeff() < 1e-15);

  const auto [plus, minus] = split_pm(v, g);
  CHECK((plus + minus - v).max_abs_coeff() < 1e-15);
  CHECK((ad_G(plus, g) - plus).max_abs_coeff() < 1e-15);
  CHECK((ad_G(minus, g) + minus).max_abs_coeff() < 1e-15);
}

TEST_CASE("lie_bracket equals DU.V - DV.U by finite differences") {
  std::mt19937_64 rng(4);
  const int n = 2, N = 2, jmax = 4;
  const AffineTorusField v = random_field(n, N, jmax, 2, rng);
  const AffineTorusField u = random_field(n, N, jmax, 2, rng);
  const AffineTorusField br = lie_bracket(v, u);
  for (int trial = 0; trial < 4; ++trial) {
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    Vec x(n), X(N);
    for (int i = 0; i < n; ++i) x[i] = U(rng);
    for (int i = 0; i < N; ++i) X[i] = U(rng);
    const Vec expect = fd_jacobian(u, x, X) * full_eval(v, x, X) - fd_jacobian(v, x, X) * full_eval(u, x, X);
    CHECK((full_eval(br, x, X) - expect).cwiseAbs().maxCoeff() < 1e-7);
  }
  CHECK((lie_bracket(v, u) + lie_bracket(u, v)).max_abs_coeff() < 1e-14);
}

TEST_CASE("brackets of reversible fields are G-symmetric") {
  std::mt19937_64 rng(9);
  InvolutionSpec g(1, 1, 1, -1);
  const AffineTorusField v = split_pm(random_field(1, 3, 6, 2, rng), g).second;
  const AffineTorusField u = split_pm(random_field(1, 3, 6, 2, rng), g).second;
  const AffineTorusField br = lie_bracket(v, u);
  CHECK((ad_G(br, g) - br).max_abs_coeff() < 1e-14);
  CHECK(br.max_abs_coeff() > 1e-3);
}

TEST_CASE("pack and unpack are inverse") {
  std::mt19937_64 rng(1);
  const AffineTorusField v = random_field(2, 3, 2, 2, rng);
  CHECK(v.pack().size() == v.packed_size());
  AffineTorusField w(2, 3, 2);
  w.unpack(v.pack());
  CHECK((w - v).max_abs_coeff() == 0.0);
}

TEST_CASE("context classification by Fix G dimension") {
  // torus codimension m + 2p
  CHECK(classify_context(InvolutionSpec(1, 1, 1, -1), 3).context == ReversibleContext::Context2);
  CHECK(classify_context(InvolutionSpec(1, 1, 1, 1), 3).context == ReversibleContext::Context1);
  CHECK(classify_context(InvolutionSpec(1, 2, 0, 1), 2).context == ReversibleContext::Extreme1);
  CHECK(classify_context(InvolutionSpec(1, 2, 0, -1), 2).context == ReversibleContext::Extreme2);
  CHECK(classify_context(InvolutionSpec(1, 0, 2, -1), 4).is_context1);
}

TEST_CASE("torus involution normalization and fixed points") {
  const Vec delta = (Vec(2) << 1.0, 7.0).finished();
  const Vec shift = normalize_torus_involution([&](const Vec& phi) { return Vec(delta - phi); }, 2);
  CHECK(shift[0] == doctest::Approx(0.5));
  CHECK(shift[1] == doctest::Approx(std::fmod(7.0, 2 * std::numbers::pi) / 2));
  CHECK_THROWS_AS(normalize_torus_involution([](const Vec& phi) { return Vec(phi); }, 2), Error);

  const auto pts = fixed_points_on_torus(3);
  CHECK(pts.size() == 8);
  for (const Vec& p : pts)
    for (int i = 0; i < 3; ++i) CHECK((p[i] == 0.0 || p[i] == std::numbers::pi));
}

TEST_CASE("reversibility residual separates reversible from generic fields") {
  InvolutionSpec g(1, 1, 1, -1);
  // x' = y^2 + cos x, y' = cos x, z' = T z with T = [[0, b], [-b, 0]]
  const FullFieldFn rev = [](const Vec& x, const Vec& X, const Vec& nu, double) {
    Vec out(4);
    out << X[0] * X[0] + std::cos(x[0]), std::cos(x[0]), nu[0] * X[2], -nu[0] * X[1];
    return out;
  };
  const FullFieldFn bad = [&](const Vec& x, const Vec& X, const Vec& nu, double e) {
    Vec out = rev(x, X, nu, e);
    out[1] += std::sin(x[0]);
    return out;
  };
  CHECK(reversibility_residual(rev, g, 1, 50) < 1e-14);
  CHECK(reversibility_residual(bad, g, 1, 50) > 1e-2);
}
