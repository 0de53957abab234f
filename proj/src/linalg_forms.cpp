#include "rkam/linalg_forms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "rkam/error.hpp"

namespace rkam {

TMatrixSpec::TMatrixSpec(int d1_, int d2_, int d3_, Vec alpha_, Vec beta_)
    : d1(d1_), d2(d2_), d3(d3_), alpha(std::move(alpha_)), beta(std::move(beta_)) {
  validate();
}

void TMatrixSpec::validate() const {
  require(d1 >= 0 && d2 >= 0 && d3 >= 0, "linalg_forms", "block counts must be nonnegative");
  require(alpha.size() == d1 + d3, "linalg_forms", "alpha must have d1 + d3 entries");
  require(beta.size() == d2 + d3, "linalg_forms", "beta must have d2 + d3 entries");
}

Mat tmatrix_dense(const TMatrixSpec& t) {
  t.validate();
  Mat M = Mat::Zero(2 * t.p(), 2 * t.p());
  int o = 0;
  for (int k = 0; k < t.d1; ++k, o += 2) {
    M(o, o + 1) = t.alpha[k];
    M(o + 1, o) = t.alpha[k];
  }
  for (int l = 0; l < t.d2; ++l, o += 2) {
    M(o, o + 1) = t.beta[l];
    M(o + 1, o) = -t.beta[l];
  }
  for (int i = 0; i < t.d3; ++i, o += 4) {
    const double a = t.alpha[t.d1 + i];
    const double b = t.beta[t.d2 + i];
    M.block(o, o, 4, 4) << 0, a, 0, b,  //
        a, 0, b, 0,                     //
        0, -b, 0, a,                    //
        -b, 0, a, 0;
  }
  return M;
}

std::vector<cplx> tmatrix_spectrum(const TMatrixSpec& t) {
  t.validate();
  std::vector<cplx> ev;
  for (int k = 0; k < t.d1; ++k) {
    ev.emplace_back(t.alpha[k], 0.0);
    ev.emplace_back(-t.alpha[k], 0.0);
  }
  for (int l = 0; l < t.d2; ++l) {
    ev.emplace_back(0.0, t.beta[l]);
    ev.emplace_back(0.0, -t.beta[l]);
  }
  for (int i = 0; i < t.d3; ++i) {
    const double a = t.alpha[t.d1 + i];
    const double b = t.beta[t.d2 + i];
    ev.emplace_back(a, b);
    ev.emplace_back(a, -b);
    ev.emplace_back(-a, b);
    ev.emplace_back(-a, -b);
  }
  return ev;
}

Mat k_normal(int p) {
  Mat K = Mat::Zero(2 * p, 2 * p);
  for (int i = 0; i < 2 * p; ++i) K(i, i) = (i % 2 == 0) ? 1.0 : -1.0;
  return K;
}

Mat omega_matrix(int m, const TMatrixSpec& t) {
  const int N = m + 2 * t.p();
  Mat O = Mat::Zero(N, N);
  O.bottomRightCorner(2 * t.p(), 2 * t.p()) = tmatrix_dense(t);
  return O;
}

Mat l_matrix(const InvolutionSpec& g) { return g.fiber_signs().asDiagonal(); }

double tmatrix_spectral_gap(const TMatrixSpec& t) {
  const auto ev = tmatrix_spectrum(t);
  double gap = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < ev.size(); ++i) {
    gap = std::min(gap, std::abs(ev[i]));
    for (size_t j = i + 1; j < ev.size(); ++j) gap = std::min(gap, std::abs(ev[i] - ev[j]));
  }
  return gap;
}

namespace {

constexpr const char* kStage = "linalg_forms.classify";

enum class GroupKind { Real, Imag, Quad };

struct Group {
  GroupKind kind;
  double alpha = 0.0;
  double beta = 0.0;
  Mat span;  // real invariant subspace, 2p x (2 or 4)
};

// Right null space of A with singular values below rel * sigma_max.
Mat null_space(const Mat& A, double rel) {
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullV);
  const Vec& s = svd.singularValues();
  const double smax = s.size() ? s[0] : 0.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > rel * std::max(smax, 1.0)) ++rank;
  return svd.matrixV().rightCols(A.cols() - rank);
}

// X with Lw X = X Tb and Kw X = X Kb, chosen invertible.
Mat intertwiner(const Mat& Lw, const Mat& Kw, const Mat& Tb, const Mat& Kb) {
  const int k = static_cast<int>(Lw.rows());
  const Mat I = Mat::Identity(k, k);
  Mat A(2 * k * k, k * k);
  // vec(L X - X T) = (I (x) L - T^T (x) I) vec X
  Mat kron1(k * k, k * k), kron2(k * k, k * k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) {
      kron1.block(a * k, b * k, k, k) = I(a, b) * Lw - Tb(b, a) * I;
      kron2.block(a * k, b * k, k, k) = I(a, b) * Kw - Kb(b, a) * I;
    }
  A << kron1, kron2;
  const Mat ns = null_space(A, 1e-8);
  if (ns.cols() == 0) throw Error(ErrorKind::Hypothesis, kStage, "no basis realizes the normal form");

  // Deterministic candidates; keep the best conditioned one.
  std::vector<Vec> coeffs;
  for (int i = 0; i < ns.cols(); ++i) coeffs.push_back(Vec::Unit(ns.cols(), i));
  if (ns.cols() > 1) {
    Vec w = Vec::Zero(ns.cols());
    for (int i = 0; i < ns.cols(); ++i) w[i] = 1.0 / (1.0 + i);
    coeffs.push_back(w);
    for (int i = 0; i < ns.cols(); ++i) w[i] = (i % 2 == 0) ? 1.0 : -0.5;
    coeffs.push_back(w);
  }
  Mat best;
  double best_cond = -1.0;
  for (const auto& c : coeffs) {
    const Vec v = ns * c;
    const Mat X = Eigen::Map<const Mat>(v.data(), k, k);
    Eigen::JacobiSVD<Mat> svd(X);
    const double cond = svd.singularValues()[k - 1] / svd.singularValues()[0];
    if (cond > best_cond) {
      best_cond = cond;
      best = X;
    }
  }
  if (best_cond < 1e-10) throw Error(ErrorKind::Hypothesis, kStage, "degenerate normal-form basis");
  return best;
}

Mat block_t(const Group& g) {
  TMatrixSpec t;
  if (g.kind == GroupKind::Real) t = TMatrixSpec(1, 0, 0, Vec::Constant(1, g.alpha), Vec());
  if (g.kind == GroupKind::Imag) t = TMatrixSpec(0, 1, 0, Vec(), Vec::Constant(1, g.beta));
  if (g.kind == GroupKind::Quad) t = TMatrixSpec(0, 0, 1, Vec::Constant(1, g.alpha), Vec::Constant(1, g.beta));
  return tmatrix_dense(t);
}

}  // namespace

SpectrumClassification classify_anticommuting_pair(const Mat& K, const Mat& Lambda, const ClassifyTolerances& tol) {
  require(K.rows() == K.cols() && Lambda.rows() == Lambda.cols() && K.rows() == Lambda.rows() && K.rows() % 2 == 0,
          kStage, "K and Lambda must be square of equal even size");
  const int dim = static_cast<int>(K.rows());
  const int p = dim / 2;
  const double scale = std::max(Lambda.norm(), std::numeric_limits<double>::min());

  if ((K * K - Mat::Identity(dim, dim)).cwiseAbs().maxCoeff() > tol.anticommute)
    throw Error(ErrorKind::Hypothesis, kStage, "K is not involutive");
  if ((Lambda * K + K * Lambda).cwiseAbs().maxCoeff() > tol.anticommute * std::max(1.0, scale))
    throw Error(ErrorKind::Hypothesis, kStage, "not anti-commuting");

  Eigen::EigenSolver<Mat> es(Lambda);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::Internal, kStage, "eigensolver failed");
  const CVec ev = es.eigenvalues();
  const CMat evec = es.eigenvectors();

  const double pair_tol = tol.pair_rel * scale;
  const double gap_tol = tol.gap_rel * scale;
  for (int i = 0; i < dim; ++i)
    if (std::abs(ev[i]) <= gap_tol) throw Error(ErrorKind::Hypothesis, kStage, "zero eigenvalue");
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j)
      if (std::abs(ev[i] - ev[j]) < gap_tol) throw Error(ErrorKind::Hypothesis, kStage, "spectrum not simple");

  auto find = [&](cplx target) {
    int best = -1;
    double d = pair_tol;
    for (int i = 0; i < dim; ++i)
      if (std::abs(ev[i] - target) <= d) {
        d = std::abs(ev[i] - target);
        best = i;
      }
    if (best < 0) throw Error(ErrorKind::Hypothesis, kStage, "eigenvalues do not pair as +-lambda");
    return best;
  };

  std::vector<Group> real, imag, quad;
  std::vector<bool> used(dim, false);
  for (int i = 0; i < dim; ++i) {
    const double re = ev[i].real(), im = ev[i].imag();
    const bool is_real = std::abs(im) <= pair_tol;
    const bool is_imag = std::abs(re) <= pair_tol;
    if (is_real && re > 0) {
      const int j = find(-ev[i]);
      used[i] = used[j] = true;
      Mat span(dim, 2);
      span.col(0) = evec.col(i).real().normalized();
      span.col(1) = evec.col(j).real().normalized();
      real.push_back({GroupKind::Real, re, 0.0, span});
    } else if (is_imag && im > 0) {
      const int j = find(std::conj(ev[i]));
      used[i] = used[j] = true;
      const CVec v = evec.col(i);
      Mat span(dim, 2);
      span.col(0) = v.real();
      span.col(1) = v.imag();
      imag.push_back({GroupKind::Imag, 0.0, im, span});
    } else if (!is_real && !is_imag && re > 0 && im > 0) {
      const int j1 = find(std::conj(ev[i]));
      const int j2 = find(-ev[i]);
      const int j3 = find(-std::conj(ev[i]));
      used[i] = used[j1] = used[j2] = used[j3] = true;
      const CVec v = evec.col(i);
      const CVec w = evec.col(j3);  // -conj(lambda) = -a + i b
      Mat span(dim, 4);
      span << v.real(), v.imag(), w.real(), w.imag();
      quad.push_back({GroupKind::Quad, re, im, span});
    }
  }
  if (std::find(used.begin(), used.end(), false) != used.end())
    throw Error(ErrorKind::Hypothesis, kStage, "eigenvalues do not pair as +-lambda");

  std::sort(real.begin(), real.end(), [](const Group& a, const Group& b) { return a.alpha < b.alpha; });
  std::sort(imag.begin(), imag.end(), [](const Group& a, const Group& b) { return a.beta < b.beta; });
  std::sort(quad.begin(), quad.end(), [](const Group& a, const Group& b) {
    return a.alpha < b.alpha || (a.alpha == b.alpha && a.beta < b.beta);
  });

  SpectrumClassification out;
  auto& t = out.form;
  t.d1 = static_cast<int>(real.size());
  t.d2 = static_cast<int>(imag.size());
  t.d3 = static_cast<int>(quad.size());
  if (t.p() != p) throw Error(ErrorKind::Hypothesis, kStage, "eigenvalue grouping does not tile the space");
  t.alpha.resize(t.d1 + t.d3);
  t.beta.resize(t.d2 + t.d3);
  for (int k = 0; k < t.d1; ++k) t.alpha[k] = real[k].alpha;
  for (int l = 0; l < t.d2; ++l) t.beta[l] = imag[l].beta;
  for (int i = 0; i < t.d3; ++i) {
    t.alpha[t.d1 + i] = quad[i].alpha;
    t.beta[t.d2 + i] = quad[i].beta;
  }

  out.basis = Mat::Zero(dim, dim);
  int o = 0;
  for (const auto* list : {&real, &imag, &quad})
    for (const auto& g : *list) {
      const Mat& W = g.span;
      const int k = static_cast<int>(W.cols());
      const Mat Wp = W.completeOrthogonalDecomposition().pseudoInverse();
      const Mat Lw = Wp * Lambda * W;
      const Mat Kw = Wp * K * W;
      const Mat X = intertwiner(Lw, Kw, block_t(g), k_normal(k / 2));
      out.basis.middleCols(o, k) = W * X;
      o += k;
    }

  // Normalize the overall scale so the largest basis entry is one.
  const double mx = out.basis.cwiseAbs().maxCoeff();
  if (mx > 0) out.basis /= mx;

  const Eigen::FullPivLU<Mat> lu(out.basis);
  if (!lu.isInvertible()) throw Error(ErrorKind::Hypothesis, kStage, "normal-form basis is singular");
  return out;
}

std::vector<Mat> commutant_basis(int m, const TMatrixSpec& t, double gap_rel) {
  t.validate();
  require(m >= 0, "linalg_forms.commutant_basis", "m must be nonnegative");
  const double scale = tmatrix_dense(t).norm();
  if (t.p() > 0 && tmatrix_spectral_gap(t) < gap_rel * std::max(scale, 1e-300))
    throw Error(ErrorKind::Hypothesis, "linalg_forms.commutant_basis", "Lambda spectrum not simple");

  const int N = m + 2 * t.p();
  std::vector<Mat> basis;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      Mat E = Mat::Zero(N, N);
      E(i, j) = 1.0;
      basis.push_back(E);
    }
  int o = m;
  for (int k = 0; k < t.d1 + t.d2; ++k, o += 2) {
    Mat W = Mat::Zero(N, N), Q = Mat::Zero(N, N);
    W(o, o) = W(o + 1, o + 1) = 1.0;
    Q(o, o + 1) = 1.0;
    Q(o + 1, o) = (k < t.d1) ? 1.0 : -1.0;
    basis.push_back(W);
    basis.push_back(Q);
  }
  for (int i = 0; i < t.d3; ++i, o += 4) {
    Mat W = Mat::Zero(N, N), Q = Mat::Zero(N, N), T = Mat::Zero(N, N), R = Mat::Zero(N, N);
    for (int d = 0; d < 4; ++d) W(o + d, o + d) = 1.0;
    Q(o, o + 1) = Q(o + 1, o) = Q(o + 2, o + 3) = Q(o + 3, o + 2) = 1.0;
    T(o, o + 2) = T(o + 1, o + 3) = 1.0;
    T(o + 2, o) = T(o + 3, o + 1) = -1.0;
    R(o, o + 3) = R(o + 1, o + 2) = 1.0;
    R(o + 2, o + 1) = R(o + 3, o) = -1.0;
    basis.push_back(W);
    basis.push_back(Q);
    basis.push_back(T);
    basis.push_back(R);
  }
  return basis;
}

KernelBasis kernel_basis_minus(const TMatrixSpec& t, const InvolutionSpec& g, int jmax, double gap_rel) {
  require(t.p() == g.p, "linalg_forms.kernel_basis_minus", "T-matrix size does not match the involution");
  // Validates simplicity; the generators themselves are explicit.
  (void)commutant_basis(g.m, t, gap_rel);

  const int n = g.n, N = g.N();
  KernelBasis kb;
  const Vec zn = Vec::Zero(n), zN = Vec::Zero(N);
  const Mat zNN = Mat::Zero(N, N);
  for (int i = 0; i < n; ++i) {
    kb.generators.push_back(constant_field(n, jmax, Vec::Unit(n, i), zN, zNN));
    kb.labels.push_back("lambda[" + std::to_string(i) + "]");
  }
  if (g.delta == -1)
    for (int i = 0; i < g.m; ++i) {
      kb.generators.push_back(constant_field(n, jmax, zn, Vec::Unit(N, i), zNN));
      kb.labels.push_back("mu[" + std::to_string(i) + "]");
    }
  const int nq = t.d1 + t.d3, nr = t.d2 + t.d3;
  for (int k = 0; k < nq; ++k) {
    TMatrixSpec u(t.d1, t.d2, t.d3, Vec::Unit(nq, k), Vec::Zero(nr));
    kb.generators.push_back(constant_field(n, jmax, zn, zN, omega_matrix(g.m, u)));
    kb.labels.push_back("q[" + std::to_string(k) + "]");
  }
  for (int l = 0; l < nr; ++l) {
    TMatrixSpec u(t.d1, t.d2, t.d3, Vec::Zero(nq), Vec::Unit(nr, l));
    kb.generators.push_back(constant_field(n, jmax, zn, zN, omega_matrix(g.m, u)));
    kb.labels.push_back("r[" + std::to_string(l) + "]");
  }
  return kb;
}

}  // namespace rkam
