#pragma once

// T-matrices, normal forms of anti-commuting pairs (K, Lambda), commutants,
// and the reversible part of the kernel of ad D.

#include <string>
#include <vector>

#include "rkam/fourier.hpp"
#include "rkam/revstruct.hpp"

namespace rkam {

struct TMatrixSpec {
  int d1 = 0;
  int d2 = 0;
  int d3 = 0;
  Vec alpha;  // d1 + d3
  Vec beta;   // d2 + d3

  TMatrixSpec() = default;
  TMatrixSpec(int d1, int d2, int d3, Vec alpha, Vec beta);

  int p() const { return d1 + d2 + 2 * d3; }
  /// Throws Config on inconsistent lengths.
  void validate() const;
};

/// Block-diagonal assembly: [[0,a],[a,0]] per d1 block, [[0,b],[-b,0]] per
/// d2 block, then the 4x4 mixed blocks.
Mat tmatrix_dense(const TMatrixSpec& t);

/// Eigenvalues in block order: +-alpha_k, +-i beta_l, then +-alpha +- i beta.
std::vector<cplx> tmatrix_spectrum(const TMatrixSpec& t);

/// diag(1, -1, ..., 1, -1) of size 2p.
Mat k_normal(int p);

/// blockdiag(0_m, T).
Mat omega_matrix(int m, const TMatrixSpec& t);

/// blockdiag(delta I_m, K).
Mat l_matrix(const InvolutionSpec& g);

struct SpectrumClassification {
  TMatrixSpec form;
  Mat basis;  // basis^-1 Lambda basis = T, basis^-1 K basis = k_normal
};

struct ClassifyTolerances {
  double pair_rel = 1e-8;  // eigenvalue matching, relative to ||Lambda||
  double gap_rel = 1e-8;   // minimal eigenvalue separation, relative to ||Lambda||
  double anticommute = 1e-10;
};

SpectrumClassification classify_anticommuting_pair(const Mat& K, const Mat& Lambda,
                                                   const ClassifyTolerances& tol = {});

/// Minimal pairwise distance within the spectrum of T and its smallest modulus;
/// a zero or repeated eigenvalue makes the spectrum non-simple.
double tmatrix_spectral_gap(const TMatrixSpec& t);

/// Basis of {c : Omega c = c Omega} for Omega = blockdiag(0_m, T): the m^2
/// unit matrices of the Gamma block, then per block the w- and q/r-type
/// generators. Dimension m^2 + 2p.
std::vector<Mat> commutant_basis(int m, const TMatrixSpec& t, double gap_rel = 1e-8);

struct KernelBasis {
  std::vector<AffineTorusField> generators;
  std::vector<std::string> labels;
  int size() const { return static_cast<int>(generators.size()); }
};

/// Generators of the reversible kernel of ad D in the order
/// a0 (n), b0 y-units (m, only for delta = -1), T(q = e_k), T(r = e_l).
KernelBasis kernel_basis_minus(const TMatrixSpec& t, const InvolutionSpec& g, int jmax, double gap_rel = 1e-8);

}  // namespace rkam
