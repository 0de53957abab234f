#include "rkam/kam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "rkam/error.hpp"

namespace rkam {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void SolverConfig::validate() const {
  require(jmax >= 1, "kam.config", "jmax must be positive");
  require(newton_tol > 0.0 && fd_step > 0.0 && rank_tol > 0.0 && jv_step > 0.0, "kam.config",
          "tolerances and steps must be positive");
  require(max_newton_iters >= 1 && max_compensation_iters >= 1, "kam.config", "iteration limits must be positive");
  require(gmres_restart >= 1 && gmres_max_iters >= 1, "kam.config", "GMRES limits must be positive");
}

namespace {

// Samples of an embedding (A, B, C) and its angle derivatives on one grid.
struct EmbeddingSamples {
  int n, N, L, count;
  GridFunction A, B, C;
  std::vector<GridFunction> dA, dB, dC;

  EmbeddingSamples(const AffineTorusField& e, int L_) : n(e.torus_dim()), N(e.N()), L(L_) {
    A = synthesize(e.a, L);
    B = synthesize(e.b, L);
    C = synthesize(e.c, L);
    for (int k = 0; k < n; ++k) {
      dA.push_back(synthesize(e.a.partial(k), L));
      dB.push_back(synthesize(e.b.partial(k), L));
      dC.push_back(synthesize(e.c.partial(k), L));
    }
    count = A.size();
  }

  Mat Axi(int pt) const {
    Mat m(n, n);
    for (int k = 0; k < n; ++k) m.col(k) = Eigen::Map<const Vec>(dA[k].at(pt).data(), n);
    return m;
  }
  Mat Bxi(int pt) const {
    Mat m(N, n);
    for (int k = 0; k < n; ++k) m.col(k) = Eigen::Map<const Vec>(dB[k].at(pt).data(), N);
    return m;
  }
  Mat Cmat(const GridFunction& g, int pt) const { return Eigen::Map<const RowMat>(g.at(pt).data(), N, N); }
};

void store(GridFunction& g, int pt, const Vec& v) { Eigen::Map<Vec>(g.at(pt).data(), v.size()) = v; }
void store(GridFunction& g, int pt, const Mat& m) {
  Eigen::Map<RowMat>(g.at(pt).data(), m.rows(), m.cols()) = m;
}

AffineTorusField minus_part(const AffineTorusField& v, const InvolutionSpec& g) {
  AffineTorusField r = split_pm(v, g).second;
  r.enforce_reality();
  return r;
}

AffineTorusField plus_part(const AffineTorusField& v, const InvolutionSpec& g) {
  AffineTorusField r = split_pm(v, g).first;
  r.enforce_reality();
  return r;
}

// (xi, Xi) -> Phi(xi + w_xi, Xi + w0 + w1 Xi) to first order in W.
AffineTorusField compose_update(const AffineTorusField& emb, const AffineTorusField& W, const InvolutionSpec& g) {
  const int n = emb.torus_dim(), N = emb.N(), jmax = emb.jmax();
  const int L = oversampled_points(jmax);
  const EmbeddingSamples s(emb, L);
  const GridFunction wa = synthesize(W.a, L), wb = synthesize(W.b, L), wc = synthesize(W.c, L);
  GridFunction ga(n, L, n), gb(n, L, N), gc(n, L, N * N);
  for (int pt = 0; pt < s.count; ++pt) {
    const Vec wx = Eigen::Map<const Vec>(wa.at(pt).data(), n);
    const Vec w0 = Eigen::Map<const Vec>(wb.at(pt).data(), N);
    const Mat w1 = Eigen::Map<const RowMat>(wc.at(pt).data(), N, N);
    const Mat IC = Mat::Identity(N, N) + s.Cmat(s.C, pt);
    const Vec a = Eigen::Map<const Vec>(s.A.at(pt).data(), n) + (Mat::Identity(n, n) + s.Axi(pt)) * wx;
    const Vec b = Eigen::Map<const Vec>(s.B.at(pt).data(), N) + s.Bxi(pt) * wx + IC * w0;
    Mat c = s.Cmat(s.C, pt) + IC * w1;
    for (int k = 0; k < n; ++k) c += wx[k] * s.Cmat(s.dC[k], pt);
    store(ga, pt, a);
    store(gb, pt, b);
    store(gc, pt, c);
  }
  AffineTorusField out(n, N, jmax);
  out.a = analyze(ga, jmax, n, 1);
  out.b = analyze(gb, jmax, N, 1);
  out.c = analyze(gc, jmax, N, N);
  return plus_part(out, g);
}

AffineTorusField apply_direction(const AffineTorusField& emb, const Vec& packed_w, double h, const InvolutionSpec& g) {
  AffineTorusField W(emb.torus_dim(), emb.N(), emb.jmax());
  W.unpack(h * packed_w);
  return compose_update(emb, plus_part(W, g), g);
}

double model_reversibility_defect(const FieldModel& F, const InvolutionSpec& g) {
  const int n = F.n(), N = F.N();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi), fib(-0.5, 0.5);
  const Vec L = g.fiber_signs();
  double worst = 0.0, scale = 1.0;
  for (int it = 0; it < 16; ++it) {
    Vec x(n), X(N);
    for (auto& v : x) v = ang(rng);
    for (auto& v : X) v = fib(rng);
    const Vec gx = -x;
    const Vec gX = L.cwiseProduct(X);
    FieldValue a, b;
    F.eval(as_span(x), as_span(X), a);
    F.eval(as_span(gx), as_span(gX), b);
    // T G F(w) + F(G w) = (-fx + fx(Gw), L fX + fX(Gw))
    worst = std::max(worst, (b.fx - a.fx).cwiseAbs().maxCoeff());
    if (N) worst = std::max(worst, (b.fX + L.cwiseProduct(a.fX)).cwiseAbs().maxCoeff());
    scale = std::max({scale, a.fx.cwiseAbs().maxCoeff(), N ? a.fX.cwiseAbs().maxCoeff() : 0.0});
  }
  return worst / scale;
}

// Restarted GMRES with modified Gram-Schmidt and Givens rotations.
struct GmresResult {
  Vec x;
  int iterations = 0;
  double rel_residual = 0.0;
};

GmresResult gmres(const std::function<Vec(const Vec&)>& op, const Vec& b, double rtol, int restart, int max_iters) {
  GmresResult res;
  const Eigen::Index P = b.size();
  res.x = Vec::Zero(P);
  const double bnorm = b.norm();
  if (bnorm == 0.0) return res;
  Vec r = b;
  while (res.iterations < max_iters) {
    const double beta = r.norm();
    res.rel_residual = beta / bnorm;
    if (res.rel_residual <= rtol) break;
    const int mdim = std::min<int>(restart, static_cast<int>(P));
    Mat V = Mat::Zero(P, mdim + 1);
    Mat H = Mat::Zero(mdim + 1, mdim);
    Vec cs = Vec::Zero(mdim), sn = Vec::Zero(mdim), gvec = Vec::Zero(mdim + 1);
    V.col(0) = r / beta;
    gvec[0] = beta;
    int k = 0;
    for (; k < mdim && res.iterations < max_iters; ++k) {
      ++res.iterations;
      Vec w = op(V.col(k));
      for (int i = 0; i <= k; ++i) {
        H(i, k) = V.col(i).dot(w);
        w -= H(i, k) * V.col(i);
      }
      H(k + 1, k) = w.norm();
      if (H(k + 1, k) > 0.0) V.col(k + 1) = w / H(k + 1, k);
      for (int i = 0; i < k; ++i) {
        const double t = cs[i] * H(i, k) + sn[i] * H(i + 1, k);
        H(i + 1, k) = -sn[i] * H(i, k) + cs[i] * H(i + 1, k);
        H(i, k) = t;
      }
      const double den = std::hypot(H(k, k), H(k + 1, k));
      cs[k] = den > 0.0 ? H(k, k) / den : 1.0;
      sn[k] = den > 0.0 ? H(k + 1, k) / den : 0.0;
      H(k, k) = den;
      H(k + 1, k) = 0.0;
      gvec[k + 1] = -sn[k] * gvec[k];
      gvec[k] = cs[k] * gvec[k];
      res.rel_residual = std::abs(gvec[k + 1]) / bnorm;
      if (res.rel_residual <= rtol || den == 0.0) {
        ++k;
        break;
      }
    }
    const Vec y = H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(gvec.head(k));
    res.x += V.leftCols(k) * y;
    r = b - op(res.x);
    if (res.rel_residual <= rtol) {
      res.rel_residual = r.norm() / bnorm;
      if (res.rel_residual <= 10.0 * rtol) break;
    }
  }
  return res;
}

}  // namespace

AffineTorusField torus_error(const FieldModel& F, const AffineTorusField& emb, const ModifyingTerms& terms,
                             const Vec& omega, const TMatrixSpec& t, const InvolutionSpec& g, double* min_frame_det) {
  const int n = emb.torus_dim(), N = emb.N(), jmax = emb.jmax(), m = g.m;
  require(F.n() == n && F.N() == N, "kam.torus_error", "model and embedding shapes differ");
  const int L = oversampled_points(jmax);
  const EmbeddingSamples s(emb, L);
  const Mat Omega = omega_matrix(m, t);
  const TMatrixSpec qr(t.d1, t.d2, t.d3, terms.q, terms.r);
  const Mat M = omega_matrix(m, qr);
  Vec mu_hat = Vec::Zero(N);
  if (terms.mu.size()) mu_hat.head(terms.mu.size()) = terms.mu;

  GridFunction ga(n, L, n), gb(n, L, N), gc(n, L, N * N);
  double det_min = std::numeric_limits<double>::infinity();
  FieldValue v;
  Vec x(n);
  for (int pt = 0; pt < s.count; ++pt) {
    for (int k = 0; k < n; ++k) x[k] = s.A.angle(pt, k) + s.A.at(pt)[k];
    const Vec X = Eigen::Map<const Vec>(s.B.at(pt).data(), N);
    F.eval(as_span(x), as_span(X), v);
    const Vec fx = v.fx + terms.lambda;
    const Vec fX = v.fX + mu_hat + M * X;
    const Mat jX = v.jX + M;

    const Mat IA = Mat::Identity(n, n) + s.Axi(pt);
    const Mat IC = Mat::Identity(N, N) + s.Cmat(s.C, pt);
    const Eigen::PartialPivLU<Mat> luA(IA), luC(IC);
    det_min = std::min({det_min, std::abs(luA.determinant()), std::abs(luC.determinant())});
    const Mat Bxi = s.Bxi(pt);

    const Vec xidot = luA.solve(fx);
    const Vec Xidot = luC.solve(fX - Bxi * xidot);
    const Mat dxi = luA.solve(v.jx * IC);
    Mat inner = jX * IC - Bxi * dxi;
    for (int k = 0; k < n; ++k) inner -= xidot[k] * s.Cmat(s.dC[k], pt);
    const Mat dXi = luC.solve(inner);

    store(ga, pt, Vec(xidot - omega));
    store(gb, pt, Xidot);
    store(gc, pt, Mat(dXi - Omega));
  }
  if (min_frame_det) *min_frame_det = det_min;
  AffineTorusField E(n, N, jmax);
  E.a = analyze(ga, jmax, n, 1);
  E.b = analyze(gb, jmax, N, 1);
  E.c = analyze(gc, jmax, N, N);
  return minus_part(E, g);
}

ModifiedSolution solve_modified(const FieldModel& F, const Vec& omega, const TMatrixSpec& t, const InvolutionSpec& g,
                                const DiophantineCertificate& cert, const SolverConfig& cfg,
                                const ModifiedSolution* warm) {
  constexpr const char* stage = "kam.solve_modified";
  cfg.validate();
  const int n = g.n, N = g.N(), jmax = cfg.jmax;
  require(F.n() == n && F.N() == N, stage, "model does not match the involution");
  const double rev = model_reversibility_defect(F, g);
  if (!(rev <= 1e-10))
    throw Error(ErrorKind::Hypothesis, stage, "field is not G-reversible (defect " + std::to_string(rev) + ")");

  ModifiedSolution sol;
  if (warm && warm->embedding.jmax() == jmax && warm->embedding.N() == N) {
    sol.embedding = warm->embedding;
    sol.terms = warm->terms;
  } else {
    sol.embedding = AffineTorusField(n, N, jmax);
    sol.terms = ModifyingTerms::zero(g, t);
  }
  const int P = sol.embedding.packed_size();

  auto residual = [&](const AffineTorusField& emb, const Vec& mc, double* det) {
    return torus_error(F, emb, ModifyingTerms::from_coords(mc, g, t), omega, t, g, det);
  };
  // Approximate inverse of the linearization through the homological equation.
  auto precondition = [&](const Vec& r, Vec& w_packed, Vec& mc) {
    AffineTorusField rf(n, N, jmax);
    rf.unpack(r);
    const HomologicalSolution hs = homological_solve(minus_part(rf, g), omega, t, g, cert);
    w_packed = (-1.0 * hs.v).pack();
    mc = hs.terms.coords();
  };

  Vec mc = sol.terms.coords();
  double det = 1.0;
  AffineTorusField E = residual(sol.embedding, mc, &det);
  sol.min_frame_det = det;
  double r = E.sup();
  for (int it = 0;; ++it) {
    if (!std::isfinite(r)) throw Error(ErrorKind::Solver, stage, "non-finite residual");
    sol.history.push_back(r);
    sol.iterations = it + 1;
    if (r <= cfg.newton_tol) break;
    if (it + 1 >= cfg.max_newton_iters)
      throw Error(ErrorKind::Solver, stage,
                  "no convergence after " + std::to_string(cfg.max_newton_iters) + " iterations (residual " +
                      std::to_string(r) + ")");

    const Vec b = -E.pack();
    auto op = [&](const Vec& z) -> Vec {
      Vec wp, dm;
      precondition(z, wp, dm);
      const double scale = std::sqrt(wp.squaredNorm() + dm.squaredNorm());
      if (scale == 0.0) return Vec::Zero(P);
      const double h = cfg.jv_step / scale;
      const AffineTorusField ep = apply_direction(sol.embedding, wp, h, g);
      const AffineTorusField em = apply_direction(sol.embedding, wp, -h, g);
      const AffineTorusField Rp = residual(ep, mc + h * dm, nullptr);
      const AffineTorusField Rm = residual(em, mc - h * dm, nullptr);
      return (Rp.pack() - Rm.pack()) / (2.0 * h);
    };
    const double forcing = std::max(std::min(1e-6, r), 1e-12);
    const GmresResult gr = gmres(op, b, forcing, cfg.gmres_restart, cfg.gmres_max_iters);
    sol.gmres_iterations += gr.iterations;
    Vec wp, dm;
    precondition(gr.x, wp, dm);
    {
      AffineTorusField W(n, N, jmax);
      W.unpack(wp);
      sol.plus_defect = std::max(sol.plus_defect, (ad_G(W, g) - W).max_abs_coeff());
    }

    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 12; ++ls, step *= 0.5) {
      const AffineTorusField cand = apply_direction(sol.embedding, wp, step, g);
      const Vec cand_m = mc + step * dm;
      double cand_det = 1.0;
      const AffineTorusField Ec = residual(cand, cand_m, &cand_det);
      const double rc = Ec.sup();
      if (std::isfinite(rc) && rc < (1.0 - 1e-4 * step) * r) {
        sol.embedding = cand;
        mc = cand_m;
        E = Ec;
        r = rc;
        sol.min_frame_det = cand_det;
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw Error(ErrorKind::Solver, stage, "line search failed at residual " + std::to_string(r));
    if (sol.min_frame_det < 1e-10) throw Error(ErrorKind::Solver, stage, "frame singular");
  }
  sol.terms = ModifyingTerms::from_coords(mc, g, t);
  sol.residual = r;
  return sol;
}

double quadratic_constant(const std::vector<double>& h) {
  double c = 0.0;
  for (size_t k = 0; k + 1 < h.size(); ++k)
    if (h[k] <= 1e-3 && h[k] > 0.0) c = std::max(c, h[k + 1] / (h[k] * h[k]));
  return c;
}

// ------------------------------------------------------- reparameterization

namespace {

Mat fd_jacobian(const Reparameterization::Map& f, const Vec& w0, double step) {
  const Vec f0 = f(w0);
  Mat J(f0.size(), w0.size());
  for (Eigen::Index i = 0; i < w0.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(w0[i]));
    Vec wp = w0, wm = w0;
    wp[i] += h;
    wm[i] -= h;
    J.col(i) = (f(wp) - f(wm)) / (2.0 * h);
  }
  return J;
}

std::string describe_direction(const Vec& d, const std::vector<std::string>& labels) {
  std::string out;
  char buf[64];
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (std::abs(d[i]) < 0.05) continue;
    std::snprintf(buf, sizeof buf, "%s%.3f*%s", out.empty() ? "" : " + ", d[i],
                  i < static_cast<Eigen::Index>(labels.size()) ? labels[i].c_str() : "?");
    out += buf;
  }
  return out;
}

}  // namespace

RankReport rank_check(const Reparameterization::Map& target, const Vec& w0, const std::vector<std::string>& labels,
                      const SolverConfig& cfg) {
  RankReport rep;
  rep.labels = labels;
  rep.jacobian = fd_jacobian(target, w0, cfg.fd_step);
  rep.required = static_cast<int>(rep.jacobian.rows());
  rep.available = static_cast<int>(rep.jacobian.cols());
  if (rep.required == 0) {
    rep.ok = true;
    return rep;
  }
  Eigen::JacobiSVD<Mat> svd(rep.jacobian, Eigen::ComputeFullU);
  rep.singular_values = svd.singularValues();
  if (rep.required > rep.available) {
    rep.deficient_summary = "insufficient parameters: " + std::to_string(rep.available) + " available, " +
                            std::to_string(rep.required) + " required";
    rep.deficient_direction = svd.matrixU().col(rep.required - 1);
    return rep;
  }
  const double s1 = rep.singular_values[0];
  const double sr = rep.singular_values[rep.required - 1];
  rep.ok = s1 > 0.0 && sr / s1 >= cfg.rank_tol;
  if (!rep.ok) {
    rep.deficient_direction = svd.matrixU().col(rep.required - 1);
    rep.deficient_summary = "deficient direction " + describe_direction(rep.deficient_direction, labels);
  }
  return rep;
}

RankError::RankError(RankReport report)
    : Error(ErrorKind::Hypothesis, "kam.rank_check", "rank condition fails: " + report.deficient_summary),
      report_(std::move(report)) {}

Reparameterization::Reparameterization(Map target, Vec w0, std::vector<std::string> labels, const SolverConfig& cfg)
    : target_(std::move(target)), w0_(std::move(w0)) {
  report_ = rank_check(target_, w0_, labels, cfg);
  if (!report_.ok) throw RankError(report_);
  target0_ = target_(w0_);
  const int r = report_.required, v = report_.available;
  Eigen::JacobiSVD<Mat> svd(report_.jacobian, Eigen::ComputeFullV);
  null_ = svd.matrixV().rightCols(v - r);
  // Sign convention: largest entry of each chi direction positive.
  for (Eigen::Index k = 0; k < null_.cols(); ++k) {
    Eigen::Index imax = 0;
    null_.col(k).cwiseAbs().maxCoeff(&imax);
    if (null_(imax, k) < 0.0) null_.col(k) *= -1.0;
  }
  Mat square(v, v);
  square << report_.jacobian, null_.transpose();
  square_inv_ = square.inverse();
}

Vec Reparameterization::solve(const Vec& u, const Vec& chi) const {
  constexpr const char* stage = "kam.reparameterization";
  require(u.size() == target0_.size() && chi.size() == null_.cols(), stage, "coordinate sizes do not match");
  auto F = [&](const Vec& w) {
    Vec r(w.size());
    r << target_(w) - target0_ - u, null_.transpose() * (w - w0_) - chi;
    return r;
  };
  Vec w = w0_;
  Vec r = F(w);
  const double scale = 1.0 + target0_.cwiseAbs().maxCoeff();
  double best = r.cwiseAbs().maxCoeff();
  int stall = 0;
  for (int it = 0; it < 100 && best > 1e-15 * scale; ++it) {
    w -= square_inv_ * r;
    r = F(w);
    const double nr = r.cwiseAbs().maxCoeff();
    if (nr < 0.5 * best)
      stall = 0;
    else if (++stall >= 3)
      break;
    best = std::min(best, nr);
  }
  if (!(best <= 1e-12 * scale)) throw Error(ErrorKind::Solver, stage, "parameter inversion did not converge");
  return w;
}

// ---------------------------------------------------------------- families

int KamFamily::unknowns() const {
  return sys->n + (context2 ? sys->m : 0) + t0.d2 + t0.d3 + t0.d1 + t0.d3;
}

Vec KamFamily::parameter_point(const Vec& u, const Vec& chi) const { return reparam.solve(u, chi); }

namespace {

std::vector<int> released_indices(int count, const std::vector<int>& fixed) {
  std::vector<int> out;
  for (int k = 0; k < count; ++k)
    if (std::find(fixed.begin(), fixed.end(), k) == fixed.end()) out.push_back(k);
  return out;
}

void check_fixed(const std::vector<int>& fixed, int count) {
  std::vector<int> sorted = fixed;
  std::sort(sorted.begin(), sorted.end());
  require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), "kam.family",
          "fixed alpha indices must be distinct");
  for (int k : fixed) require(k >= 0 && k < count, "kam.family", "fixed alpha index out of range 1..d1+d3");
}

void finish_family(KamFamily& fam, const TMatrixSpec& t0, const SolverConfig& cfg) {
  const auto& sys = *fam.sys;
  fam.t0 = t0;
  fam.released = released_indices(t0.d1 + t0.d3, fam.fixed);
  fam.cfg = cfg;
  // Simple spectrum is part of the hypotheses.
  (void)kernel_basis_minus(t0, sys.involution(), 0);
  fam.cert = diophantine_check(fam.omega, t0.beta, cfg.tau_for(sys.n), sys.n * cfg.jmax);
}

}  // namespace

KamFamily prepare_context2(const ReversibleSystem& sys_in, const std::vector<int>& fixed, const SolverConfig& cfg) {
  constexpr const char* stage = "kam.prepare_context2";
  cfg.validate();
  validate_system(sys_in);
  if (sys_in.delta != -1) throw Error(ErrorKind::Hypothesis, stage, "context 2 requires delta = -1");
  if (sys_in.m < 1) throw Error(ErrorKind::Hypothesis, stage, "context 2 requires m >= 1");
  const int d1 = sys_in.d1, d2 = sys_in.d2, d3 = sys_in.d3;
  check_fixed(fixed, d1 + d3);

  KamFamily fam;
  fam.sys = std::make_shared<const ReversibleSystem>(sys_in);
  fam.context2 = true;
  fam.fixed = fixed;
  const auto& sys = *fam.sys;
  const Vec y0 = Vec::Zero(sys.m);
  const Vec P0 = sys.P(y0, sys.nu0);
  if (P0.size() && P0.cwiseAbs().maxCoeff() > 1e-10)
    throw Error(ErrorKind::Hypothesis, stage, "P(0, nu0) != 0: {y = 0, z = 0} is not invariant at nu0");
  const int need = sys.n + sys.m + d2 + d3 + static_cast<int>(fixed.size());
  if (sys.s < need)
    throw Error(ErrorKind::Hypothesis, stage,
                "insufficient parameters: s = " + std::to_string(sys.s) + " < n + m + d + kappa = " +
                    std::to_string(need));
  fam.omega = sys.H(y0, sys.nu0);
  const TMatrixSpec t0 = sys.floquet_data(y0, sys.nu0);

  std::vector<std::string> labels;
  for (int i = 0; i < sys.n; ++i) labels.push_back("H[" + std::to_string(i) + "]");
  for (int i = 0; i < sys.m; ++i) labels.push_back("P[" + std::to_string(i) + "]");
  for (int l = 0; l < d2 + d3; ++l) labels.push_back("beta[" + std::to_string(l) + "]");
  for (int k : fixed) labels.push_back("alpha[" + std::to_string(k) + "]");
  const auto sysp = fam.sys;
  auto target = [sysp, fixed](const Vec& nu) {
    const ReversibleSystem& s = *sysp;
    const Vec y = Vec::Zero(s.m);
    const TMatrixSpec t = s.floquet_data(y, nu);
    Vec out(s.n + s.m + t.beta.size() + static_cast<Eigen::Index>(fixed.size()));
    out << s.H(y, nu), s.P(y, nu), t.beta, Vec::Zero(fixed.size());
    for (size_t i = 0; i < fixed.size(); ++i) out[out.size() - fixed.size() + i] = t.alpha[fixed[i]];
    return out;
  };
  fam.reparam = Reparameterization(target, sys.nu0, labels, cfg);
  finish_family(fam, t0, cfg);
  return fam;
}

KamFamily prepare_context1(const ReversibleSystem& sys_in, const std::vector<int>& fixed, const SolverConfig& cfg) {
  constexpr const char* stage = "kam.prepare_context1";
  cfg.validate();
  validate_system(sys_in);
  if (sys_in.delta != 1) throw Error(ErrorKind::Hypothesis, stage, "context 1 requires delta = +1");
  const int d1 = sys_in.d1, d2 = sys_in.d2, d3 = sys_in.d3;
  check_fixed(fixed, d1 + d3);
  require(sys_in.y0.size() == sys_in.m, stage, "y0 must have m entries");

  KamFamily fam;
  fam.sys = std::make_shared<const ReversibleSystem>(sys_in);
  fam.context2 = false;
  fam.fixed = fixed;
  const auto& sys = *fam.sys;
  const int need = sys.n + d2 + d3 + static_cast<int>(fixed.size());
  if (sys.m + sys.s < need)
    throw Error(ErrorKind::Hypothesis, stage,
                "insufficient parameters: m + s = " + std::to_string(sys.m + sys.s) + " < n + d + kappa = " +
                    std::to_string(need));
  fam.omega = sys.H(sys.y0, sys.nu0);
  const TMatrixSpec t0 = sys.floquet_data(sys.y0, sys.nu0);

  std::vector<std::string> labels;
  for (int i = 0; i < sys.n; ++i) labels.push_back("H[" + std::to_string(i) + "]");
  for (int l = 0; l < d2 + d3; ++l) labels.push_back("beta[" + std::to_string(l) + "]");
  for (int k : fixed) labels.push_back("alpha[" + std::to_string(k) + "]");
  const auto sysp = fam.sys;
  auto target = [sysp, fixed](const Vec& w) {
    const ReversibleSystem& s = *sysp;
    const Vec y = w.head(s.m), nu = w.tail(s.s);
    const TMatrixSpec t = s.floquet_data(y, nu);
    Vec out(s.n + t.beta.size() + static_cast<Eigen::Index>(fixed.size()));
    out << s.H(y, nu), t.beta, Vec::Zero(fixed.size());
    for (size_t i = 0; i < fixed.size(); ++i) out[out.size() - fixed.size() + i] = t.alpha[fixed[i]];
    return out;
  };
  Vec w0(sys.m + sys.s);
  w0 << sys.y0, sys.nu0;
  fam.reparam = Reparameterization(target, w0, labels, cfg);
  finish_family(fam, t0, cfg);
  return fam;
}

std::shared_ptr<PolyFieldModel> scale_system(const ReversibleSystem& sys, const Vec& nu, double e, const Vec& Psi,
                                             const Vec& y_center) {
  constexpr const char* stage = "kam.scale_system";
  require(e >= 0.0, stage, "sqrt(eps) must be non-negative");
  require(nu.size() == sys.s, stage, "nu has wrong length");
  const int n = sys.n, m = sys.m, N = sys.N();
  const bool ctx2 = sys.is_context2();
  if (ctx2)
    require(Psi.size() == m, stage, "P(0, .) branch data (Psi) must have m entries");
  else
    require(y_center.size() == m, stage, "y center must have m entries");

  std::vector<PolyFieldModel::Mono> monos;
  for (const auto& t : sys.terms) {
    const int a = t.y_degree(m), b = t.z_degree(m);
    if (ctx2 && t.group == TermGroup::P && a == 0) continue;  // replaced by Psi
    const int power = (ctx2 ? a : 0) + b + 2 * t.eps_power - (t.row >= n ? 1 : 0);
    if (power < 0)
      throw Error(ErrorKind::Internal, stage, "term of group " + std::string(to_string(t.group)) +
                                                  " is singular under the rescaling");
    const double c = t.coeff(nu) * std::pow(e, power);
    if (c != 0.0) monos.push_back({t.row, t.j, t.sine, t.expo, c});
  }
  Vec off = Vec::Zero(N), scale = Vec::Ones(N), constant = Vec::Zero(n + N);
  if (ctx2) {
    constant.segment(n, m) = Psi;
  } else {
    off.head(m) = y_center;
    scale.head(m).setConstant(e);
  }
  return std::make_shared<PolyFieldModel>(n, N, std::move(monos), off, scale, constant);
}

// ------------------------------------------------------------ compensation

namespace {

struct CompensationEval {
  Vec m;  // modifying-term coordinates
  Vec point;
  TMatrixSpec t;
  ModifiedSolution solve;
};

CompensationEval evaluate_compensation(const KamFamily& fam, const Vec& u, const Vec& chi, double e,
                                       const ModifiedSolution* warm) {
  const auto& sys = *fam.sys;
  const int n = sys.n, m = fam.context2 ? sys.m : 0, nb = fam.t0.d2 + fam.t0.d3;
  const int kf = static_cast<int>(fam.fixed.size());
  Eigen::Index o = 0;
  const Vec sigma = u.segment(o, n);
  o += n;
  const Vec Psi = u.segment(o, m);
  o += m;
  const Vec rho = u.segment(o, nb);
  o += nb;
  const Vec phi = u.segment(o, kf);
  o += kf;
  const Vec Phi = u.segment(o, static_cast<Eigen::Index>(fam.released.size()));

  Vec ut(n + m + nb + kf);
  ut << sigma, e * Psi, rho, phi;
  CompensationEval ev;
  ev.point = fam.parameter_point(ut, chi);
  std::shared_ptr<PolyFieldModel> model;
  if (fam.context2) {
    model = scale_system(sys, ev.point, e, Psi, Vec());
  } else {
    model = scale_system(sys, ev.point.tail(sys.s), e, Vec(), ev.point.head(sys.m));
  }
  ev.t = fam.t0;
  for (size_t i = 0; i < fam.released.size(); ++i) ev.t.alpha[fam.released[i]] = fam.t0.alpha[fam.released[i]] + Phi[i];
  ev.solve = solve_modified(*model, fam.omega, ev.t, sys.involution(), fam.cert, fam.cfg, warm);
  ev.m = ev.solve.terms.coords();
  return ev;
}

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

CompensationResult compensate_parameters(const KamFamily& fam, const Vec& chi, double e,
                                         const CompensationResult* warm) {
  constexpr const char* stage = "kam.compensate_parameters";
  const auto& sys = *fam.sys;
  const int K = fam.unknowns();
  const int n = sys.n, m = fam.context2 ? sys.m : 0, nb = fam.t0.d2 + fam.t0.d3;
  const int kf = static_cast<int>(fam.fixed.size());
  const int kr = static_cast<int>(fam.released.size());
  require(chi.size() == fam.reparam.chi_dim(), stage, "chi has wrong dimension");

  Vec u = Vec::Zero(K);
  const ModifiedSolution* warm_solve = nullptr;
  if (warm && warm->chi.size() == chi.size()) {
    u << warm->sigma, warm->Psi, warm->rho, warm->phi, warm->Phi;
    warm_solve = &warm->solve;
  } else if (kr) {
    // Unperturbed root: Phi = alpha_-(nu(0, chi)) - alpha0_-.
    const Vec p = fam.parameter_point(Vec::Zero(K - kr), chi);
    const TMatrixSpec t = fam.context2 ? sys.floquet_data(Vec::Zero(sys.m), p)
                                       : sys.floquet_data(p.head(sys.m), p.tail(sys.s));
    for (int i = 0; i < kr; ++i) u[K - kr + i] = t.alpha[fam.released[i]] - fam.t0.alpha[fam.released[i]];
  }

  CompensationResult res;
  CompensationEval ev = evaluate_compensation(fam, u, chi, e, warm_solve);
  double r = inf_norm(ev.m);
  for (int it = 0;; ++it) {
    res.history.push_back(r);
    if (r <= fam.cfg.newton_tol) break;
    if (it >= fam.cfg.max_compensation_iters)
      throw Error(ErrorKind::Solver, stage, "compensation Newton diverged (residual " + std::to_string(r) + ")");
    Mat J(K, K);
    for (int i = 0; i < K; ++i) {
      const double h = fam.cfg.fd_step * std::max(1.0, std::abs(u[i]));
      Vec up = u, um = u;
      up[i] += h;
      um[i] -= h;
      J.col(i) = (evaluate_compensation(fam, up, chi, e, &ev.solve).m -
                  evaluate_compensation(fam, um, chi, e, &ev.solve).m) /
                 (2.0 * h);
    }
    const Eigen::FullPivLU<Mat> lu(J);
    if (!lu.isInvertible()) throw Error(ErrorKind::Solver, stage, "compensation Jacobian is singular");
    const Vec du = -lu.solve(ev.m);
    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 10; ++ls, step *= 0.5) {
      CompensationEval cand;
      try {
        cand = evaluate_compensation(fam, u + step * du, chi, e, &ev.solve);
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::Solver) throw;
        continue;
      }
      const double rc = inf_norm(cand.m);
      if (rc < r) {
        u += step * du;
        ev = std::move(cand);
        r = rc;
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw Error(ErrorKind::Solver, stage, "compensation Newton diverged (residual " + std::to_string(r) + ")");
  }

  Eigen::Index o = 0;
  res.sigma = u.segment(o, n);
  o += n;
  res.Psi = u.segment(o, m);
  o += m;
  res.rho = u.segment(o, nb);
  o += nb;
  res.phi = u.segment(o, kf);
  o += kf;
  res.Phi = u.segment(o, kr);
  res.chi = chi;
  res.point = ev.point;
  res.floquet = ev.t;
  res.solve = std::move(ev.solve);
  res.modifying_residual = r;
  return res;
}

// ------------------------------------------------------------- solutions

double invariance_residual(const ReversibleSystem& sys, const Vec& nu, double eps, const TorusEmbedding& emb) {
  const int n = sys.n, N = sys.N();
  AffineTorusField e(n, N, emb.A.jmax());
  e.a = emb.A;
  e.b = emb.B;
  e.c = emb.C;
  const EmbeddingSamples s(e, oversampled_points(emb.A.jmax()));
  double worst = 0.0;
  Vec x(n);
  for (int pt = 0; pt < s.count; ++pt) {
    for (int k = 0; k < n; ++k) x[k] = s.A.angle(pt, k) + s.A.at(pt)[k];
    const Vec X = Eigen::Map<const Vec>(s.B.at(pt).data(), N);
    const Vec F = sys.eval(x, X, nu, eps);
    const Vec dx = emb.omega + s.Axi(pt) * emb.omega;
    const Vec dX = s.Bxi(pt) * emb.omega;
    worst = std::max(worst, (F.head(n) - dx).cwiseAbs().maxCoeff());
    if (N) worst = std::max(worst, (F.tail(N) - dX).cwiseAbs().maxCoeff());
  }
  return worst;
}

std::pair<double, double> torus_symmetry_residuals(const ReversibleSystem& sys, const TorusEmbedding& emb) {
  const int n = sys.n, N = sys.N();
  const Vec L = sys.involution().fiber_signs();
  auto wrap = [](double a) { return std::remainder(a, 2.0 * std::numbers::pi); };
  const int P = 2 * emb.A.jmax() + 1;
  const GridFunction grid(n, P, 1);
  double compat = 0.0;
  for (int pt = 0; pt < grid.size(); ++pt) {
    Vec xi(n);
    for (int k = 0; k < n; ++k) xi[k] = grid.angle(pt, k);
    const Vec mxi = -xi;
    const Vec Ap = emb.A.evaluate(as_span(xi)), Am = emb.A.evaluate(as_span(mxi));
    const Vec Bp = emb.B.evaluate(as_span(xi)), Bm = emb.B.evaluate(as_span(mxi));
    // G K(xi) = (-xi - A(xi), L B(xi)) against K(-xi) = (-xi + A(-xi), B(-xi)).
    for (int k = 0; k < n; ++k) compat = std::max(compat, std::abs(wrap(-Ap[k] - Am[k])));
    if (N) compat = std::max(compat, (L.cwiseProduct(Bp) - Bm).cwiseAbs().maxCoeff());
  }
  double fix = 0.0;
  for (const Vec& xi : fixed_points_on_torus(n)) {
    const Vec x = xi + emb.A.evaluate(as_span(xi));
    const Vec B = emb.B.evaluate(as_span(xi));
    for (int k = 0; k < n; ++k) fix = std::max(fix, std::abs(wrap(2.0 * x[k])) / 2.0);
    if (N) fix = std::max(fix, (L.cwiseProduct(B) - B).cwiseAbs().maxCoeff() / 2.0);
  }
  return {compat, fix};
}

KamSolution solution_from_compensation(const KamFamily& fam, const CompensationResult& c, double eps) {
  const auto& sys = *fam.sys;
  const double e = std::sqrt(eps);
  KamSolution sol;
  sol.eps = eps;
  sol.sigma = c.sigma;
  sol.psi = e * c.Psi;
  sol.rho = c.rho;
  sol.phi = c.phi;
  sol.Phi = c.Phi;
  sol.chi = c.chi;
  sol.floquet = c.floquet;
  sol.alpha_prime = c.floquet.alpha;
  sol.modifying_residual = c.modifying_residual;
  sol.frame_residual = c.solve.residual;
  sol.newton_history = c.solve.history;
  sol.newton_iterations = c.solve.iterations;
  sol.compensation_history = c.history;

  const AffineTorusField& emb = c.solve.embedding;
  sol.embedding.omega = fam.omega;
  sol.embedding.A = emb.a;
  sol.embedding.B = emb.b;
  sol.embedding.B *= e;
  sol.embedding.C = emb.c;
  sol.embedding.floquet = omega_matrix(sys.m, c.floquet);
  if (fam.context2) {
    sol.nu = c.point;
  } else {
    sol.y_center = c.point.head(sys.m);
    sol.nu = c.point.tail(sys.s);
    const int z = sol.embedding.B.zero_mode();
    for (int i = 0; i < sys.m; ++i) sol.embedding.B(z, i) += sol.y_center[i];
  }
  sol.invariance_residual = invariance_residual(sys, sol.nu, eps, sol.embedding);
  std::tie(sol.g_compat_residual, sol.fix_residual) = torus_symmetry_residuals(sys, sol.embedding);
  return sol;
}

namespace {

std::vector<KamSolution> run_family(const KamFamily& fam, double eps, const std::vector<Vec>& chi_grid) {
  require(eps >= 0.0, "kam.find_torus", "eps must be non-negative");
  std::vector<Vec> grid = chi_grid;
  if (grid.empty()) grid.push_back(Vec::Zero(fam.reparam.chi_dim()));
  std::vector<KamSolution> out;
  const double e = std::sqrt(eps);
  for (const Vec& chi : grid) {
    require(chi.size() == fam.reparam.chi_dim(), "kam.find_torus",
            "chi point has dimension " + std::to_string(chi.size()) + ", surface dimension is " +
                std::to_string(fam.reparam.chi_dim()));
    const CompensationResult c = compensate_parameters(fam, chi, e);
    out.push_back(solution_from_compensation(fam, c, eps));
  }
  return out;
}

}  // namespace

std::vector<KamSolution> find_torus_context2(const ReversibleSystem& sys, const std::vector<int>& fixed, double eps,
                                             const std::vector<Vec>& chi_grid, const SolverConfig& cfg) {
  return run_family(prepare_context2(sys, fixed, cfg), eps, chi_grid);
}

std::vector<KamSolution> find_torus_context1(const ReversibleSystem& sys, const std::vector<int>& fixed, double eps,
                                             const std::vector<Vec>& chi_grid, const SolverConfig& cfg) {
  return run_family(prepare_context1(sys, fixed, cfg), eps, chi_grid);
}

double working_eps_threshold(const std::function<bool(double)>& ok, double lo, double hi, int steps) {
  require(lo > 0.0 && hi > lo, "kam.working_eps_threshold", "need 0 < lo < hi");
  if (ok(hi)) return hi;
  for (int i = 0; i < steps; ++i) {
    const double mid = std::sqrt(lo * hi);
    if (ok(mid))
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace rkam
