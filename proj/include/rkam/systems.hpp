#pragma once

// Parameterized reversible systems given as closed-form term lists, field
// models evaluated along tori, and the RK4 orbit oracle.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rkam/fourier.hpp"
#include "rkam/linalg_forms.hpp"
#include "rkam/revstruct.hpp"

namespace rkam {

/// Polynomial in nu: sum of coeff * prod nu_i^powers_i.
struct NuPoly {
  struct Monomial {
    double coeff = 0.0;
    std::vector<int> powers;  // length s, or empty for a constant
  };
  std::vector<Monomial> monomials;

  static NuPoly constant(double c);
  /// c0 + sum_i c_i nu_i from [c0, c1, ..., cs].
  static NuPoly affine(const std::vector<double>& c);

  double operator()(const Vec& nu) const;
  bool is_zero() const;
};

enum class TermGroup { H, P, Q, FSharp, GSharp, HSharp, F, G, Hpert };
const char* to_string(TermGroup g);

/// coeff(nu) * trig(<j,x>) * eps^eps_power * prod X_i^expo_i in row `row`,
/// rows numbered x (0..n-1), y (n..n+m-1), z (n+m..n+m+2p-1).
/// A Q term with entry (r, c) is stored as a z-row-r term whose z_c exponent
/// carries the extra factor.
struct Term {
  TermGroup group = TermGroup::F;
  int row = 0;
  std::vector<int> j;
  bool sine = false;
  std::vector<int> expo;  // length N = m + 2p
  NuPoly coeff;
  int eps_power = 0;

  int y_degree(int m) const;
  int z_degree(int m) const;
};

struct ReversibleSystem {
  std::string name;
  int n = 1, m = 0, p = 0, s = 0;
  int delta = -1;
  int d1 = 0, d2 = 0, d3 = 0;
  Vec nu0;  // base parameter point
  Vec y0;   // base action value (context 1)
  std::vector<Term> terms;

  int N() const { return m + 2 * p; }
  InvolutionSpec involution() const { return InvolutionSpec(n, m, p, delta); }
  /// Block shape with placeholder alpha = beta = 1.
  TMatrixSpec block_shape() const;
  bool is_context2() const { return delta == -1; }

  /// Full field F(x, y, z; nu, eps).
  Vec eval(const Vec& x, const Vec& X, const Vec& nu, double eps) const;
  /// H(y, nu), P(y, nu) and Q(y, nu).
  Vec H(const Vec& y, const Vec& nu) const;
  Vec P(const Vec& y, const Vec& nu) const;
  Mat Q(const Vec& y, const Vec& nu) const;
  /// alpha(y, nu), beta(y, nu) read from the T-normal form of Q(y, nu); throws
  /// when Q is not in that form.
  TMatrixSpec floquet_data(const Vec& y, const Vec& nu) const;

  /// Copy without the eps-order terms.
  ReversibleSystem unperturbed() const;
};

struct AuditReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Term-by-term parity and order checks: f# = O(z), g#, h# = O_2(z),
/// H, P, Q independent of x (and of z), Q only at anti-commuting positions,
/// P absent in context 1, and the reversibility sign of every term.
AuditReport audit_system(const ReversibleSystem& sys);
/// Throws Hypothesis when audit_system or the shape checks fail.
void validate_system(const ReversibleSystem& sys);

/// Sampled |TG F + F o G| over random (x, y, z, nu, eps).
double system_reversibility_residual(const ReversibleSystem& sys, int samples = 200, std::uint64_t seed = 7);

/// Integrable models: kind 2 has x' = H(y, nu), y' = P(y, nu), delta = -1;
/// kind 1 has y' = 0, delta = +1. H and P are given as term lists with
/// rows local to their block.
ReversibleSystem build_extreme_integrable(int kind, int n, int m, int s, const std::vector<Term>& H,
                                          const std::vector<Term>& P);

struct ExampleSizes {
  int n = 1, m = 1;
  int d1 = 0, d2 = 1, d3 = 0;
};

/// Random context-2 family around the skeleton H = nu_x + a y^2,
/// P = nu_y + b y^2, Q(0) = T(alpha0, nu_beta). Perturbation terms are
/// drawn at random and projected onto the reversible parity.
ReversibleSystem build_context2_example(std::uint64_t seed, const ExampleSizes& sizes, double magnitude);

/// Bundled families (desk-context2, desk-context2-d1, desk-context1,
/// resonant, rank-deficient).
ReversibleSystem builtin_system(const std::string& name);
std::vector<std::string> builtin_system_names();

// ------------------------------------------------------------ field models

struct FieldValue {
  Vec fx;  // n
  Vec fX;  // N
  Mat jx;  // n x N, d fx / dX
  Mat jX;  // N x N, d fX / dX
};

class FieldModel {
 public:
  virtual ~FieldModel() = default;
  virtual int n() const = 0;
  virtual int N() const = 0;
  virtual void eval(std::span<const double> x, std::span<const double> X, FieldValue& out) const = 0;
};

/// Sum of monomials coef * trig * prod (off_i + scale_i X_i)^expo_i plus a
/// constant vector; covers the original system at fixed (nu, eps) and its
/// rescalings.
class PolyFieldModel : public FieldModel {
 public:
  struct Mono {
    int row;
    std::vector<int> j;
    bool sine;
    std::vector<int> expo;
    double coef;
  };

  PolyFieldModel(int n, int N, std::vector<Mono> monos, Vec off, Vec scale, Vec constant);

  int n() const override { return n_; }
  int N() const override { return N_; }
  void eval(std::span<const double> x, std::span<const double> X, FieldValue& out) const override;

  const std::vector<Mono>& monomials() const { return monos_; }

 private:
  int n_, N_;
  std::vector<Mono> monos_;
  Vec off_, scale_, constant_;
};

/// The original system at fixed (nu, eps).
std::shared_ptr<PolyFieldModel> system_slice(const ReversibleSystem& sys, const Vec& nu, double eps);

/// Push-forward of a base field through (xi, Xi) -> (xi + A0, B0 + (I + C0) Xi).
class PushforwardModel : public FieldModel {
 public:
  PushforwardModel(std::shared_ptr<const FieldModel> base, FourierSeries A0, FourierSeries B0, FourierSeries C0);

  int n() const override { return base_->n(); }
  int N() const override { return base_->N(); }
  void eval(std::span<const double> x, std::span<const double> X, FieldValue& out) const override;

  /// Solves xi + A0(xi) = x.
  Vec invert_angle(const Vec& x) const;

 private:
  std::shared_ptr<const FieldModel> base_;
  FourierSeries A0_, B0_, C0_;
  std::vector<FourierSeries> dA0_, dB0_, dC0_;
};

// ----------------------------------------------------------------- orbits

struct Trajectory {
  std::vector<double> t;
  std::vector<Vec> state;  // (x, X)
  double halving_error = 0.0;  // max deviation from the half-step run
};

using AutonomousRhs = std::function<Vec(const Vec&)>;

/// Fixed-step RK4 from w0 over [0, T]; every `record_every` steps a state
/// is stored. Throws Solver when the fiber part exceeds `domain_radius`.
Trajectory integrate_orbit(const AutonomousRhs& f, int n, const Vec& w0, double T, double dt, int record_every = 1,
                           bool halving_check = true, double domain_radius = 1e3);
Trajectory integrate_orbit(const ReversibleSystem& sys, const Vec& nu, double eps, const Vec& w0, double T,
                           double dt, int record_every = 1, bool halving_check = true);

/// An invariant torus with frame in the original coordinates:
/// x = xi + A(xi), (y, z) = B(xi) + (I + C(xi)) Xi.
struct TorusGeometry {
  Vec omega;
  FourierSeries A;
  FourierSeries B;
  FourierSeries C;
  Mat floquet;  // expected Floquet matrix blockdiag(0_m, T)
};

struct VerifyOptions {
  double T = 100.0;
  double dt = 0.01;
  int seeds = 4;
  double sample_every = 1.0;
  double distance_tol = 1e-8;
  double frame_tol = 1e-7;
};

struct VerificationReport {
  double max_distance = 0.0;
  double halving_error = 0.0;
  double frame_constancy = 0.0;  // max_t |M(t) - M(0)| in the Floquet frame
  double raw_variation = 0.0;    // max_t |J(t) - J(0)| without the frame
  double floquet_error = 0.0;    // max_t |M(t) - floquet|
  double eigen_error = 0.0;      // spectrum of mean M vs expected
  bool distance_ok = false;
  bool frame_ok = false;
};

/// Solves xi + A(xi) = x on the torus.
Vec project_angle(const FourierSeries& A, const Vec& x);

VerificationReport verify_solution(const ReversibleSystem& sys, const Vec& nu, double eps, const TorusGeometry& torus,
                                   const VerifyOptions& opt = {});

}  // namespace rkam
