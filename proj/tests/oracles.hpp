#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <random>

#include <Eigen/Dense>

#include "rkam/linalg_forms.hpp"
#include "rkam/revstruct.hpp"
#include "rkam/small_divisors.hpp"

namespace oracle {

using namespace rkam;

// Dense complex matrix of ad D on the whole truncated coefficient space,
// unknowns ordered per mode as (a, b, c row-major). For mode j:
//   a -> i<j,w> a,  b -> i<j,w> b - Omega b,  c -> i<j,w> c + c Omega - Omega c.
inline CMat dense_ad_D(int n, int N, int jmax, const Vec& omega, const Mat& Omega) {
  const FourierSeries box(n, jmax, 1);
  const int per = n + N + N * N;
  const int dim = box.modes() * per;
  CMat A = CMat::Zero(dim, dim);
  const CMat O = Omega.cast<cplx>();
  const CMat I = CMat::Identity(N, N);
  for (int mode = 0; mode < box.modes(); ++mode) {
    const auto j = box.index(mode);
    double jw = 0.0;
    for (int k = 0; k < n; ++k) jw += j[k] * omega[k];
    const cplx d(0.0, jw);
    const int o = mode * per;
    for (int i = 0; i < n; ++i) A(o + i, o + i) = d;
    A.block(o + n, o + n, N, N) = d * I - O;
    // vec_row(c O - O c) = (I kron O^T - O kron I) vec_row(c)
    CMat C = d * CMat::Identity(N * N, N * N);
    for (int r = 0; r < N; ++r)
      for (int s = 0; s < N; ++s)
        for (int k = 0; k < N; ++k) {
          C(r * N + s, r * N + k) += O(k, s);
          C(r * N + s, k * N + s) -= O(r, k);
        }
    A.block(o + n + N, o + n + N, N * N, N * N) = C;
  }
  return A;
}

inline CVec flatten(const AffineTorusField& v) {
  const int n = v.n(), N = v.N(), per = n + N + N * N;
  CVec out(v.a.modes() * per);
  for (int mode = 0; mode < v.a.modes(); ++mode) {
    const int o = mode * per;
    for (int i = 0; i < n; ++i) out[o + i] = v.a(mode, i);
    for (int i = 0; i < N; ++i) out[o + n + i] = v.b(mode, i);
    for (int i = 0; i < N * N; ++i) out[o + n + N + i] = v.c(mode, i);
  }
  return out;
}

inline AffineTorusField unflatten(const CVec& x, int n, int N, int jmax) {
  AffineTorusField v(n, N, jmax);
  const int per = n + N + N * N;
  for (int mode = 0; mode < v.a.modes(); ++mode) {
    const int o = mode * per;
    for (int i = 0; i < n; ++i) v.a(mode, i) = x[o + i];
    for (int i = 0; i < N; ++i) v.b(mode, i) = x[o + n + i];
    for (int i = 0; i < N * N; ++i) v.c(mode, i) = x[o + n + N + i];
  }
  return v;
}

// Minimal-norm least-squares solution of ad_D v = rhs and the leftover
// rhs - ad_D v, from a rank-revealing decomposition of the dense matrix.
struct DenseHomological {
  Eigen::CompleteOrthogonalDecomposition<CMat> cod;
  CMat A;
  int n, N, jmax;

  DenseHomological(int n_, int N_, int jmax_, const Vec& omega, const Mat& Omega, double threshold = 1e-8)
      : A(dense_ad_D(n_, N_, jmax_, omega, Omega)), n(n_), N(N_), jmax(jmax_) {
    cod.setThreshold(threshold);
    cod.compute(A);
  }

  std::pair<AffineTorusField, AffineTorusField> solve(const AffineTorusField& rhs) const {
    const CVec r = flatten(rhs);
    const CVec x = cod.solve(r);
    return {unflatten(x, n, N, jmax), unflatten(r - A * x, n, N, jmax)};
  }
};

inline int numerical_rank(const Mat& M, double rel = 1e-9) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(M);
  const Vec& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  int r = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > rel * s[0]) ++r;
  return r;
}

// dim {V real affine field of order jmax : ad_D V = 0, Ad_G V = -V} from the
// ranks of dense matrices over a spanning set of real fields.
inline int brute_force_kernel_dimension(const TMatrixSpec& t, const InvolutionSpec& g, const Vec& omega, int jmax) {
  const Mat Omega = omega_matrix(g.m, t);
  const AffineTorusField proto(g.n, g.N(), jmax);
  const int P = proto.packed_size();
  Mat span(P, P), image(2 * P, P);
  for (int k = 0; k < P; ++k) {
    AffineTorusField v = proto;
    Vec e = Vec::Zero(P);
    e[k] = 1.0;
    v.unpack(e);
    v.enforce_reality();
    span.col(k) = v.pack();
    image.col(k).head(P) = ad_D_action(v, omega, Omega).pack();
    image.col(k).tail(P) = (ad_G(v, g) + v).pack();
  }
  const int null_image = P - numerical_rank(image);
  const int null_span = P - numerical_rank(span);
  return null_image - null_span;
}

}  // namespace oracle
