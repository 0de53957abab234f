#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "rkam/error.hpp"
#include "rkam/small_divisors.hpp"

using namespace rkam;

namespace {

const double kGolden = (1.0 + std::sqrt(5.0)) / 2.0;

// Plain nested loops over the box |j_i| <= R, filtered by 0 < |j|_1 <= R.
double brute_min_ratio(const Vec& omega, const Vec& beta, double tau, int R) {
  double best = std::numeric_limits<double>::infinity();
  const int n = omega.size(), d = beta.size();
  std::vector<int> j(n, -R);
  while (true) {
    int l1 = 0;
    double jw = 0.0;
    for (int i = 0; i < n; ++i) {
      l1 += std::abs(j[i]);
      jw += j[i] * omega[i];
    }
    if (l1 > 0 && l1 <= R) {
      std::vector<int> J(d, -2);
      while (true) {
        int L1 = 0;
        double v = jw;
        for (int i = 0; i < d; ++i) {
          L1 += std::abs(J[i]);
          v += J[i] * beta[i];
        }
        if (L1 <= 2) best = std::min(best, std::abs(v) * std::pow(l1, tau));
        int k = 0;
        while (k < d && ++J[k] > 2) J[k++] = -2;
        if (k == d) break;
      }
    }
    int k = 0;
    while (k < n && ++j[k] > R) j[k++] = -R;
    if (k == n) break;
  }
  return best;
}

AffineTorusField random_field(const InvolutionSpec& g, int jmax, std::mt19937_64& rng) {
  std::normal_distribution<double> N01;
  AffineTorusField r(g.n, g.N(), jmax);
  for (auto* s : {&r.a, &r.b, &r.c})
    for (auto& z : s->data()) z = cplx(N01(rng), N01(rng));
  r.enforce_reality();
  return r;
}

AffineTorusField random_minus_rhs(const InvolutionSpec& g, int jmax, std::mt19937_64& rng) {
  return split_pm(random_field(g, jmax, rng), g).second;
}

}  // namespace

TEST_CASE("Diophantine minimum agrees with brute-force enumeration") {
  const Vec omega = (Vec(2) << 1.0, kGolden).finished();
  const Vec beta = (Vec(1) << 0.7).finished();
  for (double tau : {1.2, 2.0})
    for (int R : {3, 6}) {
      const DiophantineCertificate c = diophantine_check(omega, beta, tau, R);
      CHECK(c.gamma == doctest::Approx(brute_min_ratio(omega, beta, tau, R)).epsilon(1e-14));
      CHECK(c.argmin_j.size() == 2);
      CHECK(c.argmin_J.size() == 1);
      double v = c.argmin_J[0] * beta[0];
      int l1 = 0;
      for (int i = 0; i < 2; ++i) {
        v += c.argmin_j[i] * omega[i];
        l1 += std::abs(c.argmin_j[i]);
      }
      CHECK(std::abs(v) * std::pow(l1, tau) == doctest::Approx(c.gamma).epsilon(1e-14));
    }
  const Vec none;
  const Vec w1 = (Vec(1) << std::sqrt(2.0)).finished();
  CHECK(diophantine_check(w1, none, 1.0, 10).gamma == doctest::Approx(brute_min_ratio(w1, none, 1.0, 10)));
}

TEST_CASE("exact resonances are reported with their minimizer") {
  const Vec omega = (Vec(2) << 1.0, 0.5).finished();
  try {
    diophantine_check(omega, Vec(), 1.5, 8);
    FAIL("expected a resonance");
  } catch (const ResonanceError& e) {
    CHECK(e.kind() == ErrorKind::Hypothesis);
    CHECK(e.j() == std::vector<int>{1, -2});
  }
  // beta resonance: <j, omega> = beta
  const Vec w = (Vec(1) << kGolden).finished();
  const Vec b = (Vec(1) << 2 * kGolden).finished();
  CHECK_THROWS_AS(diophantine_check(w, b, 1.0, 4), ResonanceError);
  CHECK_THROWS_AS(diophantine_check(omega, Vec(), 0.5, 8), Error);
}

TEST_CASE("modifying terms round-trip through coordinates and assembly") {
  const TMatrixSpec t(1, 1, 1, (Vec(2) << 0.5, 0.9).finished(), (Vec(2) << 1.3, 1.7).finished());
  const InvolutionSpec g(2, 1, t.p(), -1);
  const Vec coords = (Vec(7) << 0.1, -0.2, 0.3, 0.4, 0.5, 0.6, 0.7).finished();
  const ModifyingTerms mt = ModifyingTerms::from_coords(coords, g, t);
  CHECK(mt.coords() == coords);
  CHECK(mt.norm_inf() == 0.7);
  const AffineTorusField k = mt.assemble(g, t, 2);
  CHECK((ModifyingTerms::extract(k, g, t).coords() - coords).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((ad_G(k, g) + k).max_abs_coeff() < 1e-15);
  CHECK(ad_D_action(k, (Vec(2) << 1.0, kGolden).finished(), omega_matrix(g.m, t)).max_abs_coeff() < 1e-14);
  CHECK_THROWS_AS(ModifyingTerms::from_coords(Vec::Zero(3), g, t), Error);
}

TEST_CASE("ad_D_action agrees with the dense operator") {
  std::mt19937_64 rng(1);
  const TMatrixSpec t(0, 1, 0, Vec(), (Vec(1) << 0.7).finished());
  const InvolutionSpec g(2, 1, 1, -1);
  const Vec omega = (Vec(2) << 1.0, kGolden).finished();
  const AffineTorusField v = random_minus_rhs(g, 2, rng);
  const CMat A = oracle::dense_ad_D(2, 3, 2, omega, omega_matrix(1, t));
  const CVec expect = A * oracle::flatten(v);
  CHECK((oracle::flatten(ad_D_action(v, omega, omega_matrix(1, t))) - expect).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("homological solve matches the dense minimal-norm solution") {
  std::mt19937_64 rng(17);
  const Vec omega = (Vec(2) << 1.0, kGolden).finished();
  for (const TMatrixSpec& t : {TMatrixSpec(0, 1, 0, Vec(), (Vec(1) << 0.7).finished()),
                               TMatrixSpec(1, 0, 0, (Vec(1) << 0.6).finished(), Vec())}) {
    const InvolutionSpec g(2, 1, 1, -1);
    const int jmax = 3;
    const DiophantineCertificate cert = diophantine_check(omega, t.beta, 1.5, 2 * jmax);
    const oracle::DenseHomological dense(2, 3, jmax, omega, omega_matrix(1, t));
    for (int trial = 0; trial < 3; ++trial) {
      const AffineTorusField rhs = random_minus_rhs(g, jmax, rng);
      const HomologicalSolution sol = homological_solve(rhs, omega, t, g, cert);
      const auto [v, kernel] = dense.solve(rhs);
      CHECK((sol.v - v).max_abs_coeff() <= 1e-9 * v.max_abs_coeff());
      CHECK((sol.kernel - kernel).max_abs_coeff() <= 1e-9 * rhs.max_abs_coeff());
      CHECK(sol.kernel_residual < 1e-13);
      CHECK((sol.terms.assemble(g, t, jmax) - sol.kernel).max_abs_coeff() < 1e-13);
      // solution is G-symmetric
      CHECK((ad_G(sol.v, g) - sol.v).max_abs_coeff() < 1e-13);
      CHECK(sol.min_certified_ratio >= cert.gamma * (1 - 1e-9));
    }
  }
}

TEST_CASE("homological solve refuses mismatched certificates and non-reversible data") {
  std::mt19937_64 rng(2);
  const TMatrixSpec t(0, 1, 0, Vec(), (Vec(1) << 0.7).finished());
  const InvolutionSpec g(1, 1, 1, -1);
  const Vec omega = (Vec(1) << kGolden).finished();
  const AffineTorusField rhs = random_minus_rhs(g, 3, rng);
  const DiophantineCertificate short_cert = diophantine_check(omega, t.beta, 1.0, 2);
  CHECK_THROWS_AS(homological_solve(rhs, omega, t, g, short_cert), Error);
  const DiophantineCertificate other = diophantine_check((Vec(1) << 1.1).finished(), t.beta, 1.0, 3);
  CHECK_THROWS_AS(homological_solve(rhs, omega, t, g, other), Error);
  const DiophantineCertificate cert = diophantine_check(omega, t.beta, 1.0, 3);
  CHECK_NOTHROW(homological_solve(rhs, omega, t, g, cert));
  CHECK_THROWS_AS(homological_solve(random_field(g, 3, rng), omega, t, g, cert), Error);
}
