#include "rkam/revstruct.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "rkam/error.hpp"

namespace rkam {

// -------------------------------------------------------------- InvolutionSpec

InvolutionSpec::InvolutionSpec(int n_, int m_, int p_, int delta_) : n(n_), m(m_), p(p_), delta(delta_) {
  require(n >= 1, "revstruct", "torus dimension must be >= 1");
  require(m >= 0 && p >= 0, "revstruct", "fiber dimensions must be nonnegative");
  require(delta == 1 || delta == -1, "revstruct", "delta must be +1 or -1");
}

Vec InvolutionSpec::fiber_signs() const {
  Vec s(N());
  for (int i = 0; i < m; ++i) s[i] = delta;
  for (int i = 0; i < 2 * p; ++i) s[m + i] = (i % 2 == 0) ? 1.0 : -1.0;
  return s;
}

void InvolutionSpec::apply(std::span<double> x, std::span<double> X) const {
  for (auto& v : x) v = -v;
  const Vec s = fiber_signs();
  for (int i = 0; i < N(); ++i) X[i] *= s[i];
}

// ------------------------------------------------------------ AffineTorusField

AffineTorusField::AffineTorusField(int n, int N, int jmax) : a(n, jmax, n), b(n, jmax, N), c(n, jmax, N, N) {}

AffineTorusField& AffineTorusField::operator+=(const AffineTorusField& o) {
  a += o.a;
  b += o.b;
  c += o.c;
  return *this;
}

AffineTorusField& AffineTorusField::operator-=(const AffineTorusField& o) {
  a -= o.a;
  b -= o.b;
  c -= o.c;
  return *this;
}

AffineTorusField& AffineTorusField::operator*=(double s) {
  a *= s;
  b *= s;
  c *= s;
  return *this;
}

double AffineTorusField::sup() const { return std::max({sup_norm(a), sup_norm(b), sup_norm(c)}); }

double AffineTorusField::max_abs_coeff() const {
  return std::max({a.max_abs_coeff(), b.max_abs_coeff(), c.max_abs_coeff()});
}

void AffineTorusField::enforce_reality() {
  a.enforce_reality();
  b.enforce_reality();
  c.enforce_reality();
}

int AffineTorusField::packed_size() const {
  return 2 * static_cast<int>(a.data().size() + b.data().size() + c.data().size());
}

Vec AffineTorusField::pack() const {
  Vec v(packed_size());
  Eigen::Index k = 0;
  for (const auto* s : {&a, &b, &c})
    for (const auto& z : s->data()) {
      v[k++] = z.real();
      v[k++] = z.imag();
    }
  return v;
}

void AffineTorusField::unpack(const Vec& v) {
  require(v.size() == packed_size(), "revstruct", "packed vector has wrong length");
  Eigen::Index k = 0;
  for (auto* s : {&a, &b, &c})
    for (auto& z : s->data()) {
      z = cplx(v[k], v[k + 1]);
      k += 2;
    }
}

AffineTorusField constant_field(int n, int jmax, const Vec& a0, const Vec& b0, const Mat& c0) {
  AffineTorusField f(n, static_cast<int>(b0.size()), jmax);
  f.a = FourierSeries::constant(n, jmax, a0);
  f.b = FourierSeries::constant(n, jmax, b0);
  f.c = FourierSeries::constant(n, jmax, c0);
  return f;
}

// ---------------------------------------------------------------- Ad_G, split

AffineTorusField ad_G(const AffineTorusField& v, const InvolutionSpec& g) {
  require(v.n() == g.n && v.N() == g.N(), "revstruct.ad_G", "field and involution dimensions disagree");
  const Vec L = g.fiber_signs();
  AffineTorusField out = v;
  const int modes = v.a.modes();
  for (int mode = 0; mode < modes; ++mode) {
    const int neg = v.a.negated(mode);
    for (int i = 0; i < g.n; ++i) out.a(mode, i) = -v.a(neg, i);
    for (int i = 0; i < g.N(); ++i) {
      out.b(mode, i) = L[i] * v.b(neg, i);
      for (int k = 0; k < g.N(); ++k) out.c(mode, i, k) = L[i] * L[k] * v.c(neg, i, k);
    }
  }
  return out;
}

std::pair<AffineTorusField, AffineTorusField> split_pm(const AffineTorusField& v, const InvolutionSpec& g) {
  const AffineTorusField gv = ad_G(v, g);
  return {0.5 * (v + gv), 0.5 * (v - gv)};
}

// ------------------------------------------------------------------- bracket

AffineTorusField lie_bracket(const AffineTorusField& v, const AffineTorusField& u) {
  const int n = v.n();
  const int N = v.N();
  require(u.n() == n && u.N() == N && u.jmax() == v.jmax(), "revstruct.lie_bracket", "field shapes disagree");

  std::vector<FourierSeries> dv_a, dv_b, dv_c, du_a, du_b, du_c;
  for (int k = 0; k < n; ++k) {
    dv_a.push_back(v.a.partial(k));
    dv_b.push_back(v.b.partial(k));
    dv_c.push_back(v.c.partial(k));
    du_a.push_back(u.a.partial(k));
    du_b.push_back(u.b.partial(k));
    du_c.push_back(u.c.partial(k));
  }

  std::vector<const FourierSeries*> inputs{&v.a, &v.b, &v.c, &u.a, &u.b, &u.c};
  for (int k = 0; k < n; ++k)
    for (const auto* s : {&dv_a[k], &dv_b[k], &dv_c[k], &du_a[k], &du_b[k], &du_c[k]}) inputs.push_back(s);

  const int out_dim = n + N + N * N;
  auto f = [n, N](std::span<const double> in, std::span<double> out) {
    using CMapV = Eigen::Map<const Vec>;
    using CMapM = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    size_t o = 0;
    auto vec = [&](int len) {
      CMapV m(in.data() + o, len);
      o += len;
      return Vec(m);
    };
    auto mat = [&](int r, int c) {
      CMapM m(in.data() + o, r, c);
      o += static_cast<size_t>(r) * c;
      return Mat(m);
    };
    const Vec va = vec(n), vb = vec(N);
    const Mat vc = mat(N, N);
    const Vec ua = vec(n), ub = vec(N);
    const Mat uc = mat(N, N);

    Vec ra = Vec::Zero(n), rb = uc * vb - vc * ub;
    Mat rc = uc * vc - vc * uc;
    for (int k = 0; k < n; ++k) {
      const Vec dva = vec(n), dvb = vec(N);
      const Mat dvc = mat(N, N);
      const Vec dua = vec(n), dub = vec(N);
      const Mat duc = mat(N, N);
      ra += dua * va[k] - dva * ua[k];
      rb += dub * va[k] - dvb * ua[k];
      rc += duc * va[k] - dvc * ua[k];
    }
    size_t w = 0;
    for (int i = 0; i < n; ++i) out[w++] = ra[i];
    for (int i = 0; i < N; ++i) out[w++] = rb[i];
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < N; ++k) out[w++] = rc(i, k);
  };

  const FourierSeries all = pointwise_map(f, std::span<const FourierSeries* const>(inputs), out_dim);
  AffineTorusField r(n, N, v.jmax());
  for (int mode = 0; mode < all.modes(); ++mode) {
    int w = 0;
    for (int i = 0; i < n; ++i) r.a(mode, i) = all(mode, w++);
    for (int i = 0; i < N; ++i) r.b(mode, i) = all(mode, w++);
    for (int i = 0; i < N * N; ++i) r.c(mode, i) = all(mode, w++);
  }
  return r;
}

// ---------------------------------------------------------------- contexts

const char* to_string(ReversibleContext c) {
  switch (c) {
    case ReversibleContext::Context1: return "context1";
    case ReversibleContext::Context2: return "context2";
    case ReversibleContext::Extreme1: return "extreme1";
    case ReversibleContext::Extreme2: return "extreme2";
  }
  return "?";
}

ContextClassification classify_context(const InvolutionSpec& g, int torus_codim) {
  const int fix = g.fix_dimension();
  if (torus_codim < fix)
    throw Error(ErrorKind::Hypothesis, "revstruct.classify_context",
                "dim Fix G exceeds the torus codimension (" + std::to_string(fix) + " > " +
                    std::to_string(torus_codim) + ")");
  ContextClassification r;
  r.fix_dimension = fix;
  r.codimension = torus_codim;
  r.is_context1 = 2 * fix >= torus_codim;
  if (fix == torus_codim)
    r.context = ReversibleContext::Extreme1;
  else if (fix == 0)
    r.context = ReversibleContext::Extreme2;
  else
    r.context = r.is_context1 ? ReversibleContext::Context1 : ReversibleContext::Context2;
  return r;
}

namespace {

double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a < 0) a += two_pi;
  if (a >= two_pi) a -= two_pi;
  return a;
}

// Distance on the circle.
double circle_gap(double a, double b) {
  const double d = wrap_angle(a - b);
  return std::min(d, 2.0 * std::numbers::pi - d);
}

}  // namespace

Vec normalize_torus_involution(const std::function<Vec(const Vec&)>& restriction, int n, int samples,
                               std::uint64_t seed) {
  const Vec delta = restriction(Vec::Zero(n));
  require(delta.size() == n, "revstruct.normalize_torus_involution", "restriction returned wrong dimension");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  for (int s = 0; s < samples; ++s) {
    Vec phi(n);
    for (int i = 0; i < n; ++i) phi[i] = angle(rng);
    const Vec img = restriction(phi);
    for (int i = 0; i < n; ++i)
      if (circle_gap(img[i], delta[i] - phi[i]) > 1e-10)
        throw Error(ErrorKind::Hypothesis, "revstruct.normalize_torus_involution",
                    "not a quasi-periodic reverser restriction");
  }
  Vec shift(n);
  for (int i = 0; i < n; ++i) shift[i] = wrap_angle(wrap_angle(delta[i]) / 2.0);
  return shift;
}

std::vector<Vec> fixed_points_on_torus(int n) {
  require(n >= 1, "revstruct.fixed_points_on_torus", "n must be >= 1");
  std::vector<Vec> pts;
  for (int mask = 0; mask < (1 << n); ++mask) {
    Vec p(n);
    for (int i = 0; i < n; ++i) p[i] = ((mask >> (n - 1 - i)) & 1) ? std::numbers::pi : 0.0;
    pts.push_back(p);
  }
  return pts;
}

double reversibility_residual(const FullFieldFn& f, const InvolutionSpec& g, int s, int samples,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> eps01(0.0, 1.0);
  const Vec L = g.fiber_signs();

  double worst = 0.0;
  for (int k = 0; k < samples; ++k) {
    Vec x(g.n), X(g.N()), nu(s);
    for (int i = 0; i < g.n; ++i) x[i] = angle(rng);
    for (int i = 0; i < g.N(); ++i) X[i] = unit(rng);
    for (int i = 0; i < s; ++i) nu[i] = unit(rng);
    const double eps = eps01(rng);

    const Vec fw = f(x, X, nu, eps);
    const Vec fg = f(-x, L.cwiseProduct(X), nu, eps);
    Vec tg = fw;
    tg.head(g.n) = -fw.head(g.n);
    tg.tail(g.N()) = L.cwiseProduct(fw.tail(g.N()));
    worst = std::max(worst, (tg + fg).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace rkam
