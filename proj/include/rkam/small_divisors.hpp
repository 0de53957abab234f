#pragma once

// Diophantine certification and the mode-by-mode inversion of ad D on
// affine torus fields, with the resonant part returned as modifying terms.

#include <vector>

#include "rkam/error.hpp"
#include "rkam/linalg_forms.hpp"
#include "rkam/revstruct.hpp"

namespace rkam {

struct DiophantineCertificate {
  Vec omega;
  Vec beta;
  double tau = 0.0;
  double gamma = 0.0;  // = min_ratio
  int jmax_checked = 0;
  double min_ratio = 0.0;
  std::vector<int> argmin_j;
  std::vector<int> argmin_J;
  long long pairs_checked = 0;
};

class ResonanceError : public Error {
 public:
  ResonanceError(std::vector<int> j, std::vector<int> J, double value);
  const std::vector<int>& j() const { return j_; }
  const std::vector<int>& J() const { return J_; }

 private:
  std::vector<int> j_;
  std::vector<int> J_;
};

/// min over 0 < |j|_1 <= jmax_checked and |J|_1 <= 2 of |<j,omega> + <J,beta>| |j|^tau.
DiophantineCertificate diophantine_check(const Vec& omega, const Vec& beta, double tau, int jmax_checked,
                                         double resonance_floor = 1e-14);

/// lambda d/dx + [mu^ + M X] d/dX with M = blockdiag(0_m, T(q, r)).
struct ModifyingTerms {
  Vec lambda;
  Vec mu;  // empty for delta = +1
  Vec q;
  Vec r;

  static ModifyingTerms zero(const InvolutionSpec& g, const TMatrixSpec& t);

  /// Coordinates in the order of kernel_basis_minus.
  Vec coords() const;
  static ModifyingTerms from_coords(const Vec& v, const InvolutionSpec& g, const TMatrixSpec& t);
  double norm_inf() const;

  AffineTorusField assemble(const InvolutionSpec& g, const TMatrixSpec& t, int jmax) const;
  /// Reads (lambda, mu, q, r) from the constant part of a kernel field.
  static ModifyingTerms extract(const AffineTorusField& k, const InvolutionSpec& g, const TMatrixSpec& t);
};

/// a_x omega d/dx + [b_x omega - Omega b + (c_x omega + c Omega - Omega c) X] d/dX
AffineTorusField ad_D_action(const AffineTorusField& v, const Vec& omega, const Mat& Omega);

struct HomologicalOptions {
  double divisor_floor = 1e-12;
  double reversibility_tol = 1e-10;
  bool require_minus = true;  // rhs must satisfy ad_G rhs = -rhs
};

struct HomologicalSolution {
  AffineTorusField v;       // ad_D v + kernel = rhs, v without kernel component
  AffineTorusField kernel;  // resonant (j = 0, equal eigenvalue) part of rhs
  ModifyingTerms terms;     // kernel read in the reversible kernel coordinates
  double kernel_residual = 0.0;  // |kernel - assemble(terms)|, zero for -G rhs
  double min_divisor = 0.0;
  double min_certified_ratio = 0.0;  // min |d| |j|^tau over j != 0
  long long divisors_used = 0;
};

HomologicalSolution homological_solve(const AffineTorusField& rhs, const Vec& omega, const TMatrixSpec& t,
                                      const InvolutionSpec& g, const DiophantineCertificate& cert,
                                      const HomologicalOptions& opt = {});

}  // namespace rkam
