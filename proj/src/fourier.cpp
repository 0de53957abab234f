#include "rkam/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rkam/error.hpp"

namespace rkam {

namespace {

int ipow(int base, int e) {
  int r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

// Complex tensor with `shape` leading axes and a trailing component axis.
struct Tensor {
  std::vector<int> shape;
  int dim = 1;
  std::vector<cplx> data;

  size_t count() const {
    size_t c = static_cast<size_t>(dim);
    for (int s : shape) c *= static_cast<size_t>(s);
    return c;
  }
};

// Applies the (out x in) matrix `t` along `axis`.
Tensor apply_axis(const Tensor& in, int axis, const CMat& t) {
  Tensor out;
  out.shape = in.shape;
  out.shape[axis] = static_cast<int>(t.rows());
  out.dim = in.dim;
  out.data.assign(out.count(), cplx(0.0));

  size_t outer = 1;
  for (int a = 0; a < axis; ++a) outer *= static_cast<size_t>(in.shape[a]);
  size_t inner = static_cast<size_t>(in.dim);
  for (size_t a = axis + 1; a < in.shape.size(); ++a) inner *= static_cast<size_t>(in.shape[a]);

  const size_t n_in = static_cast<size_t>(in.shape[axis]);
  const size_t n_out = static_cast<size_t>(t.rows());
  for (size_t o = 0; o < outer; ++o) {
    const cplx* src = in.data.data() + o * n_in * inner;
    cplx* dst = out.data.data() + o * n_out * inner;
    for (size_t r = 0; r < n_out; ++r) {
      cplx* d = dst + r * inner;
      for (size_t k = 0; k < n_in; ++k) {
        const cplx w = t(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
        const cplx* s = src + k * inner;
        for (size_t i = 0; i < inner; ++i) d[i] += w * s[i];
      }
    }
  }
  return out;
}

CMat analysis_matrix(int jmax, int points) {
  const int modes = 2 * jmax + 1;
  CMat t(modes, points);
  for (int r = 0; r < modes; ++r) {
    const int j = r - jmax;
    for (int k = 0; k < points; ++k) {
      const double a = -2.0 * std::numbers::pi * j * k / points;
      t(r, k) = cplx(std::cos(a), std::sin(a)) / static_cast<double>(points);
    }
  }
  return t;
}

CMat synthesis_matrix(int jmax, int points) {
  const int modes = 2 * jmax + 1;
  CMat t(points, modes);
  for (int k = 0; k < points; ++k) {
    for (int r = 0; r < modes; ++r) {
      const int j = r - jmax;
      const double a = 2.0 * std::numbers::pi * j * k / points;
      t(k, r) = cplx(std::cos(a), std::sin(a));
    }
  }
  return t;
}

}  // namespace

// ---------------------------------------------------------------- GridFunction

GridFunction::GridFunction(int n_, int points_, int dim_) : n(n_), points(points_), dim(dim_) {
  require(n >= 1 && points >= 1 && dim >= 1, "fourier", "invalid grid shape");
  values.assign(static_cast<size_t>(size()) * dim, 0.0);
}

int GridFunction::size() const { return ipow(points, n); }

double GridFunction::angle(int point, int axis) const {
  int digit = point;
  for (int a = n - 1; a > axis; --a) digit /= points;
  digit %= points;
  return 2.0 * std::numbers::pi * digit / points;
}

// --------------------------------------------------------------- FourierSeries

FourierSeries::FourierSeries(int n, int jmax, int rows, int cols)
    : n_(n), jmax_(jmax), rows_(rows), cols_(cols), modes_(ipow(2 * jmax + 1, n)) {
  require(n >= 1 && jmax >= 0 && rows >= 1 && cols >= 1, "fourier", "invalid series shape");
  coeffs_.assign(static_cast<size_t>(modes_) * dim(), cplx(0.0));
}

FourierSeries FourierSeries::constant(int n, int jmax, const Mat& value) {
  FourierSeries s(n, jmax, static_cast<int>(value.rows()), static_cast<int>(value.cols()));
  const int z = s.zero_mode();
  for (int r = 0; r < s.rows_; ++r)
    for (int c = 0; c < s.cols_; ++c) s(z, r, c) = value(r, c);
  return s;
}

std::vector<int> FourierSeries::index(int mode) const {
  std::vector<int> j(n_);
  const int base = 2 * jmax_ + 1;
  for (int a = n_ - 1; a >= 0; --a) {
    j[a] = mode % base - jmax_;
    mode /= base;
  }
  return j;
}

int FourierSeries::mode_of(std::span<const int> j) const {
  const int base = 2 * jmax_ + 1;
  int mode = 0;
  for (int a = 0; a < n_; ++a) {
    if (std::abs(j[a]) > jmax_) return -1;
    mode = mode * base + (j[a] + jmax_);
  }
  return mode;
}

CMat FourierSeries::mode_matrix(int mode) const {
  CMat m(rows_, cols_);
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < cols_; ++c) m(r, c) = (*this)(mode, r, c);
  return m;
}

void FourierSeries::set_mode_matrix(int mode, const CMat& m) {
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < cols_; ++c) (*this)(mode, r, c) = m(r, c);
}

bool FourierSeries::same_shape(const FourierSeries& o) const {
  return n_ == o.n_ && jmax_ == o.jmax_ && rows_ == o.rows_ && cols_ == o.cols_;
}

FourierSeries& FourierSeries::operator+=(const FourierSeries& o) {
  require(same_shape(o), "fourier", "shape mismatch in addition");
  for (size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
  return *this;
}

FourierSeries& FourierSeries::operator-=(const FourierSeries& o) {
  require(same_shape(o), "fourier", "shape mismatch in subtraction");
  for (size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= o.coeffs_[i];
  return *this;
}

FourierSeries& FourierSeries::operator*=(double s) {
  for (auto& c : coeffs_) c *= s;
  return *this;
}

FourierSeries FourierSeries::partial(int axis) const {
  FourierSeries out = *this;
  for (int mode = 0; mode < modes_; ++mode) {
    const cplx f(0.0, static_cast<double>(index(mode)[axis]));
    for (int c = 0; c < dim(); ++c) out(mode, c) *= f;
  }
  return out;
}

FourierSeries FourierSeries::resized(int new_jmax) const {
  FourierSeries out(n_, new_jmax, rows_, cols_);
  for (int mode = 0; mode < out.modes_; ++mode) {
    const int src = mode_of(out.index(mode));
    if (src < 0) continue;
    for (int c = 0; c < dim(); ++c) out(mode, c) = (*this)(src, c);
  }
  return out;
}

void FourierSeries::enforce_reality() {
  for (int mode = 0; mode <= zero_mode(); ++mode) {
    const int neg = negated(mode);
    for (int c = 0; c < dim(); ++c) {
      const cplx v = 0.5 * ((*this)(mode, c) + std::conj((*this)(neg, c)));
      (*this)(mode, c) = v;
      (*this)(neg, c) = std::conj(v);
    }
  }
}

double FourierSeries::reality_defect() const {
  double d = 0.0;
  for (int mode = 0; mode < modes_; ++mode)
    for (int c = 0; c < dim(); ++c)
      d = std::max(d, std::abs((*this)(mode, c) - std::conj((*this)(negated(mode), c))));
  return d;
}

double FourierSeries::max_abs_coeff() const {
  double m = 0.0;
  for (const auto& c : coeffs_) m = std::max(m, std::abs(c));
  return m;
}

Vec FourierSeries::evaluate(std::span<const double> xi) const {
  require(static_cast<int>(xi.size()) == n_, "fourier", "evaluation point has wrong dimension");
  Vec out = Vec::Zero(dim());
  for (int mode = 0; mode < modes_; ++mode) {
    const auto j = index(mode);
    double phase = 0.0;
    for (int a = 0; a < n_; ++a) phase += j[a] * xi[a];
    const cplx e(std::cos(phase), std::sin(phase));
    for (int c = 0; c < dim(); ++c) out[c] += ((*this)(mode, c) * e).real();
  }
  return out;
}

Mat FourierSeries::evaluate_matrix(std::span<const double> xi) const {
  const Vec v = evaluate(xi);
  Mat m(rows_, cols_);
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < cols_; ++c) m(r, c) = v[r * cols_ + c];
  return m;
}

// ------------------------------------------------------------------ transforms

FourierSeries analyze(const GridFunction& g, int jmax, int rows, int cols) {
  if (rows < 0) {
    rows = g.dim;
    cols = 1;
  }
  require(rows * cols == g.dim, "fourier.analyze", "dimension mismatch between grid and coefficient shape");
  require(g.points >= 2 * jmax + 1, "fourier.analyze", "grid too coarse for requested truncation");

  Tensor t;
  t.shape.assign(g.n, g.points);
  t.dim = g.dim;
  t.data.resize(g.values.size());
  for (size_t i = 0; i < g.values.size(); ++i) t.data[i] = g.values[i];

  const CMat a = analysis_matrix(jmax, g.points);
  for (int axis = 0; axis < g.n; ++axis) t = apply_axis(t, axis, a);

  FourierSeries s(g.n, jmax, rows, cols);
  s.data() = std::move(t.data);
  return s;
}

GridFunction synthesize(const FourierSeries& s, int points) {
  if (points < 0) points = 2 * s.jmax() + 1;
  Tensor t;
  t.shape.assign(s.n(), 2 * s.jmax() + 1);
  t.dim = s.dim();
  t.data = s.data();

  const CMat m = synthesis_matrix(s.jmax(), points);
  for (int axis = 0; axis < s.n(); ++axis) t = apply_axis(t, axis, m);

  GridFunction g(s.n(), points, s.dim());
  for (size_t i = 0; i < g.values.size(); ++i) g.values[i] = t.data[i].real();
  return g;
}

FourierSeries omega_derivative(const FourierSeries& s, std::span<const double> omega) {
  require(static_cast<int>(omega.size()) == s.n(), "fourier.omega_derivative", "frequency vector length mismatch");
  FourierSeries out = s;
  for (int mode = 0; mode < s.modes(); ++mode) {
    const auto j = s.index(mode);
    double k = 0.0;
    for (int a = 0; a < s.n(); ++a) k += j[a] * omega[a];
    for (int c = 0; c < s.dim(); ++c) out(mode, c) *= cplx(0.0, k);
  }
  return out;
}

Vec average(const FourierSeries& s) {
  Vec v(s.dim());
  const int z = s.zero_mode();
  for (int c = 0; c < s.dim(); ++c) {
    const cplx m = s(z, c);
    if (std::abs(m.imag()) > 1e-13)
      throw Error(ErrorKind::Internal, "fourier.average", "non-real mean: reality invariant broken");
    v[c] = m.real();
  }
  return v;
}

int oversampled_points(int jmax) { return 2 * (2 * jmax + 1) + 1; }

FourierSeries pointwise_map(const PointMap& f, std::span<const FourierSeries* const> inputs, int out_rows,
                            int out_cols) {
  require(!inputs.empty(), "fourier.pointwise_map", "no input series");
  const int n = inputs[0]->n();
  const int jmax = inputs[0]->jmax();
  const int points = oversampled_points(jmax);

  std::vector<GridFunction> grids;
  grids.reserve(inputs.size());
  int in_dim = 0;
  for (const auto* s : inputs) {
    require(s->n() == n && s->jmax() == jmax, "fourier.pointwise_map", "inputs disagree on n or jmax");
    grids.push_back(synthesize(*s, points));
    in_dim += s->dim();
  }

  GridFunction out(n, points, out_rows * out_cols);
  std::vector<double> in(in_dim);
  for (int p = 0; p < out.size(); ++p) {
    int off = 0;
    for (const auto& g : grids) {
      const auto v = g.at(p);
      std::copy(v.begin(), v.end(), in.begin() + off);
      off += g.dim;
    }
    f(in, out.at(p));
  }
  return analyze(out, jmax, out_rows, out_cols);
}

FourierSeries pointwise_map(const PointMap& f, std::initializer_list<const FourierSeries*> inputs, int out_rows,
                            int out_cols) {
  std::vector<const FourierSeries*> v(inputs);
  return pointwise_map(f, std::span<const FourierSeries* const>(v), out_rows, out_cols);
}

double sup_norm(const FourierSeries& s, int refine) {
  const GridFunction g = synthesize(s, refine * (2 * s.jmax() + 1));
  double m = 0.0;
  for (double v : g.values) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace rkam
