#pragma once

// Truncated real Fourier series on the n-torus with vector or matrix
// coefficients, plus the uniform-grid transform pair used to evaluate
// nonlinear maps along a torus.

#include <complex>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace rkam {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline std::span<const double> as_span(const Vec& v) { return {v.data(), static_cast<size_t>(v.size())}; }

/// Samples of a map T^n -> R^dim on the grid (2*pi/L) Z^n, L points per axis.
/// Point index is mixed radix with axis 0 most significant.
struct GridFunction {
  int n = 1;
  int points = 1;  // L
  int dim = 1;
  std::vector<double> values;  // [point * dim + component]

  GridFunction() = default;
  GridFunction(int n, int points, int dim);

  int size() const;  // L^n
  double angle(int point, int axis) const;
  std::span<double> at(int point) { return {values.data() + static_cast<size_t>(point) * dim, static_cast<size_t>(dim)}; }
  std::span<const double> at(int point) const {
    return {values.data() + static_cast<size_t>(point) * dim, static_cast<size_t>(dim)};
  }
};

/// Dense coefficient box |j_l| <= jmax. Coefficients of a rows x cols
/// matrix-valued map are stored row-major per mode.
class FourierSeries {
 public:
  FourierSeries() = default;
  FourierSeries(int n, int jmax, int rows, int cols = 1);

  static FourierSeries constant(int n, int jmax, const Mat& value);

  int n() const { return n_; }
  int jmax() const { return jmax_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int dim() const { return rows_ * cols_; }
  int modes() const { return modes_; }
  int zero_mode() const { return (modes_ - 1) / 2; }
  int negated(int mode) const { return modes_ - 1 - mode; }

  std::vector<int> index(int mode) const;
  int mode_of(std::span<const int> j) const;  // -1 when outside the box

  cplx& operator()(int mode, int comp) { return coeffs_[static_cast<size_t>(mode) * dim() + comp]; }
  const cplx& operator()(int mode, int comp) const { return coeffs_[static_cast<size_t>(mode) * dim() + comp]; }
  cplx& operator()(int mode, int r, int c) { return (*this)(mode, r * cols_ + c); }
  const cplx& operator()(int mode, int r, int c) const { return (*this)(mode, r * cols_ + c); }

  CMat mode_matrix(int mode) const;
  void set_mode_matrix(int mode, const CMat& m);

  std::vector<cplx>& data() { return coeffs_; }
  const std::vector<cplx>& data() const { return coeffs_; }

  FourierSeries& operator+=(const FourierSeries& o);
  FourierSeries& operator-=(const FourierSeries& o);
  FourierSeries& operator*=(double s);
  friend FourierSeries operator+(FourierSeries a, const FourierSeries& b) { return a += b; }
  friend FourierSeries operator-(FourierSeries a, const FourierSeries& b) { return a -= b; }
  friend FourierSeries operator*(double s, FourierSeries a) { return a *= s; }

  /// Partial derivative along axis k: c_j -> i j_k c_j.
  FourierSeries partial(int axis) const;
  /// Same box, different truncation (pads with zeros or drops modes).
  FourierSeries resized(int new_jmax) const;
  /// Re-imposes c_{-j} = conj(c_j) by averaging the pair.
  void enforce_reality();
  /// max |c_{-j} - conj(c_j)|
  double reality_defect() const;
  double max_abs_coeff() const;
  /// Value at an arbitrary point (direct summation).
  Vec evaluate(std::span<const double> xi) const;
  Mat evaluate_matrix(std::span<const double> xi) const;
  bool same_shape(const FourierSeries& o) const;

 private:
  int n_ = 0;
  int jmax_ = 0;
  int rows_ = 0;
  int cols_ = 0;
  int modes_ = 0;
  std::vector<cplx> coeffs_;
};

/// Exact discrete coefficients for |j_l| <= jmax; needs points >= 2*jmax+1.
FourierSeries analyze(const GridFunction& g, int jmax, int rows = -1, int cols = 1);
/// Samples on the grid with `points` per axis (default 2*jmax+1).
GridFunction synthesize(const FourierSeries& s, int points = -1);

FourierSeries omega_derivative(const FourierSeries& s, std::span<const double> omega);
/// Real part of c_0; throws when the imaginary part exceeds 1e-13.
Vec average(const FourierSeries& s);

/// Oversampled grid size used for products and nonlinear maps.
int oversampled_points(int jmax);

/// Per-point map: inputs are the concatenated sample values of all input
/// series at one grid point, output has out_rows*out_cols entries.
using PointMap = std::function<void(std::span<const double> in, std::span<double> out)>;

/// analyze(f o synthesize(inputs)) on the oversampled grid, truncated back to
/// the common jmax. Truncation of the result is the caller's concern.
FourierSeries pointwise_map(const PointMap& f, std::span<const FourierSeries* const> inputs, int out_rows,
                            int out_cols = 1);
FourierSeries pointwise_map(const PointMap& f, std::initializer_list<const FourierSeries*> inputs, int out_rows,
                            int out_cols = 1);

/// Max over the grid (refine * (2*jmax+1) points per axis) of the largest
/// absolute component.
double sup_norm(const FourierSeries& s, int refine = 1);

}  // namespace rkam
