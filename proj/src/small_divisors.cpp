#include "rkam/small_divisors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace rkam {

namespace {

std::string format_index(const std::vector<int>& v) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ")";
  return os.str();
}

void enumerate_l1(int dim, int radius, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == dim) {
    out.push_back(cur);
    return;
  }
  int used = 0;
  for (int v : cur) used += std::abs(v);
  for (int v = -(radius - used); v <= radius - used; ++v) {
    cur.push_back(v);
    enumerate_l1(dim, radius, cur, out);
    cur.pop_back();
  }
}

int l1(const std::vector<int>& v) {
  int s = 0;
  for (int x : v) s += std::abs(x);
  return s;
}

}  // namespace

ResonanceError::ResonanceError(std::vector<int> j, std::vector<int> J, double value)
    : Error(ErrorKind::Hypothesis, "small_divisors.diophantine_check",
            "resonance detected at j=" + format_index(j) + ", J=" + format_index(J) +
                " (|<j,omega>+<J,beta>| = " + std::to_string(value) + ")"),
      j_(std::move(j)),
      J_(std::move(J)) {}

DiophantineCertificate diophantine_check(const Vec& omega, const Vec& beta, double tau, int jmax_checked,
                                         double resonance_floor) {
  const int n = static_cast<int>(omega.size());
  const int d = static_cast<int>(beta.size());
  require(n >= 1, "small_divisors.diophantine_check", "omega must be nonempty");
  require(tau > n - 1, "small_divisors.diophantine_check", "tau must exceed n - 1");
  require(jmax_checked >= 1, "small_divisors.diophantine_check", "jmax_checked must be >= 1");

  std::vector<std::vector<int>> js, Js;
  std::vector<int> cur;
  enumerate_l1(n, jmax_checked, cur, js);
  enumerate_l1(d, 2, cur, Js);

  // Half space: j and -j give the same moduli once J is negated as well.
  std::erase_if(js, [](const std::vector<int>& j) {
    for (int v : j)
      if (v != 0) return v < 0;
    return true;
  });
  std::stable_sort(js.begin(), js.end(), [](const auto& a, const auto& b) { return l1(a) < l1(b); });

  DiophantineCertificate c;
  c.omega = omega;
  c.beta = beta;
  c.tau = tau;
  c.jmax_checked = jmax_checked;
  c.min_ratio = std::numeric_limits<double>::infinity();
  for (const auto& j : js) {
    double jw = 0.0;
    for (int i = 0; i < n; ++i) jw += j[i] * omega[i];
    const double w = std::pow(static_cast<double>(l1(j)), tau);
    for (const auto& J : Js) {
      double v = jw;
      for (int i = 0; i < d; ++i) v += J[i] * beta[i];
      const double a = std::abs(v);
      if (a <= resonance_floor) throw ResonanceError(j, J, a);
      ++c.pairs_checked;
      if (a * w < c.min_ratio) {
        c.min_ratio = a * w;
        c.argmin_j = j;
        c.argmin_J = J;
      }
    }
  }
  c.gamma = c.min_ratio;
  return c;
}

// ------------------------------------------------------------ ModifyingTerms

ModifyingTerms ModifyingTerms::zero(const InvolutionSpec& g, const TMatrixSpec& t) {
  ModifyingTerms r;
  r.lambda = Vec::Zero(g.n);
  r.mu = Vec::Zero(g.delta == -1 ? g.m : 0);
  r.q = Vec::Zero(t.d1 + t.d3);
  r.r = Vec::Zero(t.d2 + t.d3);
  return r;
}

Vec ModifyingTerms::coords() const {
  Vec v(lambda.size() + mu.size() + q.size() + r.size());
  v << lambda, mu, q, r;
  return v;
}

ModifyingTerms ModifyingTerms::from_coords(const Vec& v, const InvolutionSpec& g, const TMatrixSpec& t) {
  ModifyingTerms r = zero(g, t);
  require(v.size() == r.coords().size(), "small_divisors", "modifying-term coordinate vector has wrong length");
  Eigen::Index o = 0;
  for (Vec* part : {&r.lambda, &r.mu, &r.q, &r.r}) {
    *part = v.segment(o, part->size());
    o += part->size();
  }
  return r;
}

double ModifyingTerms::norm_inf() const {
  const Vec c = coords();
  return c.size() ? c.cwiseAbs().maxCoeff() : 0.0;
}

AffineTorusField ModifyingTerms::assemble(const InvolutionSpec& g, const TMatrixSpec& t, int jmax) const {
  Vec b0 = Vec::Zero(g.N());
  if (mu.size()) b0.head(mu.size()) = mu;
  const TMatrixSpec qr(t.d1, t.d2, t.d3, q, r);
  return constant_field(g.n, jmax, lambda, b0, omega_matrix(g.m, qr));
}

ModifyingTerms ModifyingTerms::extract(const AffineTorusField& k, const InvolutionSpec& g, const TMatrixSpec& t) {
  ModifyingTerms out = zero(g, t);
  const int z = k.a.zero_mode();
  for (int i = 0; i < g.n; ++i) out.lambda[i] = k.a(z, i).real();
  for (int i = 0; i < out.mu.size(); ++i) out.mu[i] = k.b(z, i).real();
  auto c = [&](int r, int col) { return k.c(z, r, col).real(); };
  int o = g.m;
  for (int i = 0; i < t.d1; ++i, o += 2) out.q[i] = 0.5 * (c(o, o + 1) + c(o + 1, o));
  for (int i = 0; i < t.d2; ++i, o += 2) out.r[i] = 0.5 * (c(o, o + 1) - c(o + 1, o));
  for (int i = 0; i < t.d3; ++i, o += 4) {
    out.q[t.d1 + i] = 0.25 * (c(o, o + 1) + c(o + 1, o) + c(o + 2, o + 3) + c(o + 3, o + 2));
    out.r[t.d2 + i] = 0.25 * (c(o, o + 3) + c(o + 1, o + 2) - c(o + 2, o + 1) - c(o + 3, o));
  }
  return out;
}

// ------------------------------------------------------------------ ad_D

AffineTorusField ad_D_action(const AffineTorusField& v, const Vec& omega, const Mat& Omega) {
  require(omega.size() == v.n() && Omega.rows() == v.N() && Omega.cols() == v.N(), "small_divisors.ad_D_action",
          "shape mismatch");
  const std::span<const double> w(omega.data(), omega.size());
  AffineTorusField r(v.n(), v.N(), v.jmax());
  r.a = omega_derivative(v.a, w);
  r.b = omega_derivative(v.b, w);
  r.c = omega_derivative(v.c, w);
  const CMat O = Omega.cast<cplx>();
  for (int mode = 0; mode < v.a.modes(); ++mode) {
    const CMat b = v.b.mode_matrix(mode);
    const CMat c = v.c.mode_matrix(mode);
    r.b.set_mode_matrix(mode, r.b.mode_matrix(mode) - O * b);
    r.c.set_mode_matrix(mode, r.c.mode_matrix(mode) + c * O - O * c);
  }
  return r;
}

// -------------------------------------------------------- homological solve

HomologicalSolution homological_solve(const AffineTorusField& rhs, const Vec& omega, const TMatrixSpec& t,
                                      const InvolutionSpec& g, const DiophantineCertificate& cert,
                                      const HomologicalOptions& opt) {
  constexpr const char* stage = "small_divisors.homological_solve";
  const int n = g.n, m = g.m, N = g.N();
  require(rhs.n() == n && rhs.N() == N, stage, "rhs shape does not match the involution");
  require(omega.size() == n, stage, "omega has wrong length");
  require(t.p() == g.p, stage, "T-matrix size does not match the involution");
  const int jmax = rhs.jmax();

  auto close = [](const Vec& a, const Vec& b) {
    return a.size() == b.size() && (a.size() == 0 || (a - b).cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + b.norm()));
  };
  if (!close(cert.omega, omega) || !close(cert.beta, t.beta))
    throw Error(ErrorKind::Config, stage, "certificate was issued for a different (omega, beta)");
  if (cert.jmax_checked < n * jmax)
    throw Error(ErrorKind::Config, stage,
                "certificate checked |j| <= " + std::to_string(cert.jmax_checked) + " but the solve needs " +
                    std::to_string(n * jmax));

  if (opt.require_minus) {
    const double defect = (ad_G(rhs, g) + rhs).max_abs_coeff();
    if (defect > opt.reversibility_tol * std::max(1.0, rhs.max_abs_coeff()))
      throw Error(ErrorKind::Config, stage, "rhs not reversible (|Ad_G rhs + rhs| = " + std::to_string(defect) + ")");
  }

  (void)commutant_basis(m, t);  // simple-spectrum policing

  // Eigenbasis of Omega = blockdiag(0_m, T).
  CMat S = CMat::Identity(N, N);
  CVec lam = CVec::Zero(N);
  if (g.p > 0) {
    Eigen::EigenSolver<Mat> es(tmatrix_dense(t));
    S.bottomRightCorner(2 * g.p, 2 * g.p) = es.eigenvectors();
    lam.tail(2 * g.p) = es.eigenvalues();
  }
  const CMat Sinv = S.inverse();

  HomologicalSolution sol;
  sol.v = AffineTorusField(n, N, jmax);
  sol.kernel = AffineTorusField(n, N, jmax);
  sol.min_divisor = std::numeric_limits<double>::infinity();
  sol.min_certified_ratio = std::numeric_limits<double>::infinity();

  const cplx I(0.0, 1.0);
  const int zero = rhs.a.zero_mode();
  auto divide = [&](cplx value, cplx d, int ell1) {
    const double ad = std::abs(d);
    if (ad < opt.divisor_floor)
      throw Error(ErrorKind::Hypothesis, stage, "small divisor below floor (" + std::to_string(ad) + ")");
    if (ell1 > 0) {
      const double ratio = ad * std::pow(static_cast<double>(ell1), cert.tau);
      if (ratio < cert.gamma * (1.0 - 1e-9))
        throw Error(ErrorKind::Hypothesis, stage, "divisor not covered by the Diophantine certificate");
      sol.min_certified_ratio = std::min(sol.min_certified_ratio, ratio);
    }
    sol.min_divisor = std::min(sol.min_divisor, ad);
    ++sol.divisors_used;
    return value / d;
  };

  for (int mode = 0; mode < rhs.a.modes(); ++mode) {
    const std::vector<int> j = rhs.a.index(mode);
    double jw = 0.0;
    int ell1 = 0;
    for (int i = 0; i < n; ++i) {
      jw += j[i] * omega[i];
      ell1 += std::abs(j[i]);
    }
    const cplx iw = I * jw;
    const bool j0 = (mode == zero);

    for (int i = 0; i < n; ++i) {
      if (j0)
        sol.kernel.a(mode, i) = rhs.a(mode, i);
      else
        sol.v.a(mode, i) = divide(rhs.a(mode, i), iw, ell1);
    }

    const CVec wb = Sinv * rhs.b.mode_matrix(mode);
    CVec vb = CVec::Zero(N), kb = CVec::Zero(N);
    for (int k = 0; k < N; ++k) {
      if (j0 && k < m)
        kb[k] = wb[k];
      else
        vb[k] = divide(wb[k], iw - lam[k], ell1);
    }
    sol.v.b.set_mode_matrix(mode, S * vb);
    sol.kernel.b.set_mode_matrix(mode, S * kb);

    const CMat wc = Sinv * rhs.c.mode_matrix(mode) * S;
    CMat vc = CMat::Zero(N, N), kc = CMat::Zero(N, N);
    for (int k = 0; k < N; ++k)
      for (int l = 0; l < N; ++l) {
        const bool resonant = j0 && ((k < m && l < m) || k == l);
        if (resonant)
          kc(k, l) = wc(k, l);
        else
          vc(k, l) = divide(wc(k, l), iw + lam[l] - lam[k], ell1);
      }
    sol.v.c.set_mode_matrix(mode, S * vc * Sinv);
    sol.kernel.c.set_mode_matrix(mode, S * kc * Sinv);
  }
  sol.v.enforce_reality();
  sol.kernel.enforce_reality();

  sol.terms = ModifyingTerms::extract(sol.kernel, g, t);
  sol.kernel_residual = (sol.kernel - sol.terms.assemble(g, t, jmax)).max_abs_coeff();
  return sol;
}

}  // namespace rkam
