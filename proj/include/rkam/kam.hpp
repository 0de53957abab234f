#pragma once

// Newton iteration for reducible invariant tori of modified systems, the
// sqrt(eps) rescaling, the local reparameterization of the parameter space
// and the compensation of modifying terms.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rkam/small_divisors.hpp"
#include "rkam/systems.hpp"

namespace rkam {

struct SolverConfig {
  int jmax = 12;
  double newton_tol = 1e-11;
  int max_newton_iters = 20;
  double fd_step = 1e-6;   // parameter Jacobians
  double rank_tol = 1e-8;  // relative singular value
  double tau = -1.0;       // Diophantine exponent; negative selects n
  double jv_step = 1e-5;   // directional differences inside GMRES
  int gmres_restart = 60;
  int gmres_max_iters = 400;
  int max_compensation_iters = 25;

  void validate() const;
  double tau_for(int n) const { return tau < 0.0 ? static_cast<double>(n) : tau; }
};

using TorusEmbedding = TorusGeometry;

/// Torus embedding and frame in the working coordinates, plus the modifying
/// terms that make it invariant and reducible.
struct ModifiedSolution {
  AffineTorusField embedding;  // a = A, b = B, c = C
  ModifyingTerms terms;
  std::vector<double> history;  // sup of the error field per iteration
  int iterations = 0;
  int gmres_iterations = 0;
  double residual = 0.0;
  double plus_defect = 0.0;  // max |Ad_G W - W| over the corrections
  double min_frame_det = 1.0;
};

/// Pull-back error of (F + modifying terms) along the embedding, minus
/// omega d/dx + Omega X d/dX, projected onto the -G part.
AffineTorusField torus_error(const FieldModel& F, const AffineTorusField& embedding, const ModifyingTerms& terms,
                             const Vec& omega, const TMatrixSpec& t, const InvolutionSpec& g,
                             double* min_frame_det = nullptr);

/// Finds (A, B, C) and (lambda, mu, q, r) such that F + modifying terms has
/// x = xi + A, X = B + (I + C) Xi as an invariant torus with frequency omega
/// and Floquet matrix blockdiag(0_m, T). Optional warm start.
ModifiedSolution solve_modified(const FieldModel& F, const Vec& omega, const TMatrixSpec& t, const InvolutionSpec& g,
                                const DiophantineCertificate& cert, const SolverConfig& cfg,
                                const ModifiedSolution* warm = nullptr);

/// Max over r_k <= 1e-3 of r_{k+1} / r_k^2 (0 when no such pair).
double quadratic_constant(const std::vector<double>& history);

// ------------------------------------------------------- reparameterization

struct RankReport {
  Mat jacobian;
  Vec singular_values;
  int required = 0;   // rows of the target map
  int available = 0;  // number of parameters
  bool ok = false;
  std::vector<std::string> labels;  // target components
  Vec deficient_direction;          // left singular vector of the smallest value
  std::string deficient_summary;
};

class RankError : public Error {
 public:
  explicit RankError(RankReport report);
  const RankReport& report() const { return report_; }

 private:
  RankReport report_;
};

/// Submersion w -> target(w) around w0, completed by chi = N^T (w - w0) with
/// N an orthonormal basis of the Jacobian's kernel.
class Reparameterization {
 public:
  using Map = std::function<Vec(const Vec&)>;

  Reparameterization() = default;
  /// Throws Hypothesis when the rank condition fails.
  Reparameterization(Map target, Vec w0, std::vector<std::string> labels, const SolverConfig& cfg);

  const RankReport& report() const { return report_; }
  int chi_dim() const { return static_cast<int>(null_.cols()); }
  const Vec& w0() const { return w0_; }
  const Vec& target0() const { return target0_; }
  const Mat& null_basis() const { return null_; }

  /// w with target(w) = target0 + u and N^T (w - w0) = chi.
  Vec solve(const Vec& u, const Vec& chi) const;

 private:
  Map target_;
  Vec w0_, target0_;
  Mat null_;
  Mat square_inv_;
  RankReport report_;
};

/// Rank report without throwing.
RankReport rank_check(const Reparameterization::Map& target, const Vec& w0, const std::vector<std::string>& labels,
                      const SolverConfig& cfg);

// ------------------------------------------------------------- families

/// Hypothesis data shared by every (chi, eps) run of one family.
struct KamFamily {
  std::shared_ptr<const ReversibleSystem> sys;
  bool context2 = true;
  std::vector<int> fixed;     // alpha indices held at alpha0 (0-based)
  std::vector<int> released;  // remaining alpha indices (carry Phi)
  Vec omega;
  TMatrixSpec t0;  // (alpha0, beta0)
  Reparameterization reparam;
  DiophantineCertificate cert;
  SolverConfig cfg;

  int n() const { return sys->n; }
  /// Number of compensation unknowns (sigma, Psi, rho, phi, Phi).
  int unknowns() const;
  /// (y, nu) or nu for internal coordinates u = (sigma, [psi], rho, phi) and chi.
  Vec parameter_point(const Vec& u, const Vec& chi) const;
};

/// Checks delta = -1, m >= 1, P(0, nu0) = 0, the Diophantine condition and
/// the rank condition on nu -> (H(0,nu), P(0,nu), beta(nu), alpha_fixed(nu)).
KamFamily prepare_context2(const ReversibleSystem& sys, const std::vector<int>& fixed, const SolverConfig& cfg);
/// Same for delta = +1 with (y, nu) -> (H(y,nu), beta(y,nu), alpha_fixed(y,nu)).
KamFamily prepare_context1(const ReversibleSystem& sys, const std::vector<int>& fixed, const SolverConfig& cfg);

/// y = y_c + e Y (context 1 only), z = e Z and, in context 2, the P(0, nu)
/// terms replaced by Psi; eps = e^2. Returns the rescaled field.
std::shared_ptr<PolyFieldModel> scale_system(const ReversibleSystem& sys, const Vec& nu, double e, const Vec& Psi,
                                             const Vec& y_center);

struct CompensationResult {
  Vec sigma, Psi, rho, phi, Phi;
  Vec chi;
  Vec point;  // nu (context 2) or (y_c, nu) (context 1)
  TMatrixSpec floquet;
  ModifiedSolution solve;
  std::vector<double> history;  // |modifying terms| per compensation step
  double modifying_residual = 0.0;
};

/// Solves "modifying terms = 0" for (sigma, Psi, rho, phi, Phi) at fixed chi
/// and e = sqrt(eps).
CompensationResult compensate_parameters(const KamFamily& fam, const Vec& chi, double e,
                                         const CompensationResult* warm = nullptr);

struct KamSolution {
  double eps = 0.0;
  Vec nu;
  Vec y_center;  // context 1
  Vec sigma, psi, rho, phi, Phi, chi;
  TorusEmbedding embedding;  // original coordinates
  TMatrixSpec floquet;
  Vec alpha_prime;
  double modifying_residual = 0.0;
  double invariance_residual = 0.0;  // sup |F(K) - DK omega| on the grid
  double frame_residual = 0.0;       // sup of the scaled error field
  double g_compat_residual = 0.0;    // sup |G K(xi) - K(-xi)|
  double fix_residual = 0.0;         // K({0, pi}^n) vs Fix G
  std::vector<double> newton_history;
  std::vector<double> compensation_history;
  int newton_iterations = 0;
};

KamSolution solution_from_compensation(const KamFamily& fam, const CompensationResult& c, double eps);

std::vector<KamSolution> find_torus_context2(const ReversibleSystem& sys, const std::vector<int>& fixed, double eps,
                                             const std::vector<Vec>& chi_grid, const SolverConfig& cfg);
std::vector<KamSolution> find_torus_context1(const ReversibleSystem& sys, const std::vector<int>& fixed, double eps,
                                             const std::vector<Vec>& chi_grid, const SolverConfig& cfg);

/// sup |F(K(xi)) - DK(xi) omega| for the original system on the oversampled grid.
double invariance_residual(const ReversibleSystem& sys, const Vec& nu, double eps, const TorusEmbedding& emb);
/// sup |G K(xi) - K(-xi)| and the Fix G defect of K({0, pi}^n).
std::pair<double, double> torus_symmetry_residuals(const ReversibleSystem& sys, const TorusEmbedding& emb);

/// Largest eps in [lo, hi] (geometric bisection) for which ok(eps) holds,
/// assuming ok(lo). Returns lo when ok(hi) already fails everywhere above.
double working_eps_threshold(const std::function<bool(double)>& ok, double lo, double hi, int steps = 12);

}  // namespace rkam
