#pragma once

// The reversing involution G(x, y, z) = (-x, delta*y, K z), its push-forward
// action on affine torus fields, and the +/- splitting it induces.

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "rkam/fourier.hpp"

namespace rkam {

struct InvolutionSpec {
  int n = 1;
  int m = 0;
  int p = 1;
  int delta = -1;

  InvolutionSpec() = default;
  InvolutionSpec(int n, int m, int p, int delta);

  int N() const { return m + 2 * p; }
  /// m + p for delta = +1, p for delta = -1.
  int fix_dimension() const { return delta == 1 ? m + p : p; }
  /// Diagonal of blockdiag(delta*I_m, K), K = diag(1,-1,...,1,-1).
  Vec fiber_signs() const;
  /// (x, X) -> (-x, L X) on a phase point.
  void apply(std::span<double> x, std::span<double> X) const;
};

/// a(x) d/dx + [b(x) + c(x) X] d/dX on T^n x R^N.
struct AffineTorusField {
  FourierSeries a;  // n x 1
  FourierSeries b;  // N x 1
  FourierSeries c;  // N x N

  AffineTorusField() = default;
  AffineTorusField(int n, int N, int jmax);

  int n() const { return a.rows(); }
  int N() const { return b.rows(); }
  int jmax() const { return a.jmax(); }
  int torus_dim() const { return a.n(); }

  AffineTorusField& operator+=(const AffineTorusField& o);
  AffineTorusField& operator-=(const AffineTorusField& o);
  AffineTorusField& operator*=(double s);
  friend AffineTorusField operator+(AffineTorusField u, const AffineTorusField& v) { return u += v; }
  friend AffineTorusField operator-(AffineTorusField u, const AffineTorusField& v) { return u -= v; }
  friend AffineTorusField operator*(double s, AffineTorusField u) { return u *= s; }

  /// Max of the sup-norms of the three components.
  double sup() const;
  double max_abs_coeff() const;
  void enforce_reality();

  /// Packs real and imaginary parts of every coefficient.
  Vec pack() const;
  void unpack(const Vec& v);
  int packed_size() const;
};

/// Constant field a0 d/dx + (b0 + c0 X) d/dX.
AffineTorusField constant_field(int n, int jmax, const Vec& a0, const Vec& b0, const Mat& c0);

/// Ad_G V = -a(-x) d/dx + [L b(-x) + L c(-x) L X] d/dX.
AffineTorusField ad_G(const AffineTorusField& v, const InvolutionSpec& g);

/// (V_plus, V_minus) with V_pm = (V +- Ad_G V) / 2.
std::pair<AffineTorusField, AffineTorusField> split_pm(const AffineTorusField& v, const InvolutionSpec& g);

/// Lie bracket [V, U] = DU.V - DV.U within the affine algebra (oversampled
/// products, truncated back to jmax).
AffineTorusField lie_bracket(const AffineTorusField& v, const AffineTorusField& u);

enum class ReversibleContext { Context1, Context2, Extreme1, Extreme2 };
const char* to_string(ReversibleContext c);

struct ContextClassification {
  ReversibleContext context;
  bool is_context1 = false;  // codim/2 <= dim Fix G <= codim
  int fix_dimension = 0;
  int codimension = 0;
};

ContextClassification classify_context(const InvolutionSpec& g, int torus_codim);

/// Given the restriction of a reverser to an invariant torus (phi -> Delta - phi),
/// returns Delta/2 in [0, 2pi)^n: after x = phi - Delta/2 the restriction is x -> -x.
Vec normalize_torus_involution(const std::function<Vec(const Vec&)>& restriction, int n, int samples = 100,
                               std::uint64_t seed = 1);

/// {0, pi}^n in lexicographic order.
std::vector<Vec> fixed_points_on_torus(int n);

/// Full vector field F(x, X, nu, eps) with X = (y, z).
using FullFieldFn = std::function<Vec(const Vec& x, const Vec& X, const Vec& nu, double eps)>;

/// max over random samples of |TG F(w) + F(G w)|.
double reversibility_residual(const FullFieldFn& f, const InvolutionSpec& g, int s, int samples,
                              std::uint64_t seed = 7);

}  // namespace rkam
