#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rkam/error.hpp"
#include "rkam/linalg_forms.hpp"
#include "rkam/small_divisors.hpp"

using namespace rkam;

namespace {

TMatrixSpec spec(int d1, int d2, int d3) {
  Vec a(d1 + d3), b(d2 + d3);
  for (int i = 0; i < a.size(); ++i) a[i] = 0.5 + 0.3 * i;
  for (int i = 0; i < b.size(); ++i) b[i] = 1.1 + 0.4 * i;
  return TMatrixSpec(d1, d2, d3, a, b);
}

bool same_spectrum(std::vector<cplx> a, std::vector<cplx> b, double tol) {
  if (a.size() != b.size()) return false;
  auto key = [](cplx x, cplx y) { return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag(); };
  for (auto* v : {&a, &b})
    for (auto& z : *v) z = cplx(std::round(z.real() * 1e8) / 1e8, std::round(z.imag() * 1e8) / 1e8);
  std::sort(a.begin(), a.end(), key);
  std::sort(b.begin(), b.end(), key);
  for (size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > tol) return false;
  return true;
}

double max_diff(const Vec& a, const Vec& b) { return a.size() ? (a - b).cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TEST_CASE("T-matrices anti-commute with K and have the listed spectrum") {
  for (auto [d1, d2, d3] : {std::tuple{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}, {2, 1, 0}}) {
    const TMatrixSpec t = spec(d1, d2, d3);
    const Mat T = tmatrix_dense(t);
    const Mat K = k_normal(t.p());
    CHECK(T.rows() == 2 * t.p());
    CHECK((K * T + T * K).cwiseAbs().maxCoeff() == 0.0);
    Eigen::EigenSolver<Mat> es(T);
    std::vector<cplx> ev(es.eigenvalues().data(), es.eigenvalues().data() + T.rows());
    CHECK(same_spectrum(ev, tmatrix_spectrum(t), 1e-10));
    CHECK(tmatrix_spectral_gap(t) > 0.1);
  }
  CHECK_THROWS_AS(TMatrixSpec(1, 0, 0, Vec(), Vec()).validate(), Error);
}

TEST_CASE("omega and L matrices") {
  const TMatrixSpec t = spec(0, 1, 0);
  const Mat O = omega_matrix(2, t);
  CHECK(O.rows() == 4);
  CHECK(O.topRows(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(O(2, 3) == t.beta[0]);
  CHECK(O(3, 2) == -t.beta[0]);
  const Mat L = l_matrix(InvolutionSpec(1, 2, 1, -1));
  CHECK(L.diagonal() == (Vec(4) << -1, -1, 1, -1).finished());
}

TEST_CASE("classification recovers blocks after a random similarity") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> N01;
  for (auto [d1, d2, d3] : {std::tuple{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 0, 1}}) {
    const TMatrixSpec t = spec(d1, d2, d3);
    const int dim = 2 * t.p();
    const Mat S = Mat::Identity(dim, dim) + 0.3 * Mat::NullaryExpr(dim, dim, [&] { return N01(rng); });
    const Mat Si = S.inverse();
    const SpectrumClassification c = classify_anticommuting_pair(S * k_normal(t.p()) * Si, S * tmatrix_dense(t) * Si);
    CHECK(c.form.d1 == d1);
    CHECK(c.form.d2 == d2);
    CHECK(c.form.d3 == d3);
    Vec a = c.form.alpha, b = c.form.beta;
    std::sort(a.data(), a.data() + a.size());
    std::sort(b.data(), b.data() + b.size());
    CHECK(max_diff(a, t.alpha) < 1e-9);
    CHECK(max_diff(b, t.beta) < 1e-9);
    const Mat Bi = c.basis.inverse();
    const Mat L = S * tmatrix_dense(t) * Si;
    CHECK((Bi * L * c.basis - tmatrix_dense(c.form)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("classification rejects commuting or degenerate pairs") {
  const Mat K = k_normal(1);
  CHECK_THROWS_AS(classify_anticommuting_pair(K, Mat::Identity(2, 2)), Error);
  // zero eigenvalue pair: Lambda = 0
  CHECK_THROWS_AS(classify_anticommuting_pair(K, Mat::Zero(2, 2)), Error);
}

TEST_CASE("commutant basis spans the brute-force commutant") {
  for (int m : {0, 1, 2}) {
    const TMatrixSpec t = spec(1, 1, 1);
    const Mat O = omega_matrix(m, t);
    const auto basis = commutant_basis(m, t);
    CHECK(static_cast<int>(basis.size()) == m * m + 2 * t.p());
    const int N = O.rows();
    Mat stacked(N * N, basis.size());
    for (size_t k = 0; k < basis.size(); ++k) {
      CHECK((O * basis[k] - basis[k] * O).cwiseAbs().maxCoeff() < 1e-13);
      stacked.col(k) = Eigen::Map<const Vec>(basis[k].data(), N * N);
    }
    CHECK(oracle::numerical_rank(stacked) == static_cast<int>(basis.size()));
    // c -> O c - c O as a dense N^2 x N^2 matrix
    Mat ad(N * N, N * N);
    for (int k = 0; k < N * N; ++k) {
      Mat e = Mat::Zero(N, N);
      e(k % N, k / N) = 1.0;
      const Mat img = O * e - e * O;
      ad.col(k) = Eigen::Map<const Vec>(img.data(), N * N);
    }
    CHECK(N * N - oracle::numerical_rank(ad) == static_cast<int>(basis.size()));
  }
}

TEST_CASE("reversible kernel generators are -G and annihilated by ad D") {
  const Vec omega = (Vec(1) << std::sqrt(2.0)).finished();
  for (int delta : {-1, 1})
    for (auto [d1, d2, d3] : {std::tuple{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}}) {
      const TMatrixSpec t = spec(d1, d2, d3);
      const InvolutionSpec g(1, 1, t.p(), delta);
      const KernelBasis kb = kernel_basis_minus(t, g, 1);
      const int expected = g.n + (delta == -1 ? g.m : 0) + (d1 + d3) + (d2 + d3);
      CHECK(kb.size() == expected);
      CHECK(kb.labels.size() == kb.generators.size());
      for (const auto& v : kb.generators) {
        CHECK(ad_D_action(v, omega, omega_matrix(g.m, t)).max_abs_coeff() < 1e-14);
        CHECK((ad_G(v, g) + v).max_abs_coeff() < 1e-15);
      }
      CHECK(oracle::brute_force_kernel_dimension(t, g, omega, 1) == expected);
    }
}
