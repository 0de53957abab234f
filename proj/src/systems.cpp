#include "rkam/systems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "rkam/error.hpp"

namespace rkam {

// ------------------------------------------------------------------ NuPoly

NuPoly NuPoly::constant(double c) {
  NuPoly p;
  p.monomials.push_back({c, {}});
  return p;
}

NuPoly NuPoly::affine(const std::vector<double>& c) {
  NuPoly p;
  if (c.empty()) return p;
  const int s = static_cast<int>(c.size()) - 1;
  if (c[0] != 0.0) p.monomials.push_back({c[0], {}});
  for (int i = 0; i < s; ++i) {
    if (c[i + 1] == 0.0) continue;
    std::vector<int> pw(s, 0);
    pw[i] = 1;
    p.monomials.push_back({c[i + 1], pw});
  }
  return p;
}

double NuPoly::operator()(const Vec& nu) const {
  double v = 0.0;
  for (const auto& mono : monomials) {
    double t = mono.coeff;
    for (size_t i = 0; i < mono.powers.size(); ++i) {
      require(static_cast<Eigen::Index>(i) < nu.size() || mono.powers[i] == 0, "systems", "nu has too few entries");
      if (mono.powers[i]) t *= std::pow(nu[i], mono.powers[i]);
    }
    v += t;
  }
  return v;
}

bool NuPoly::is_zero() const {
  return std::all_of(monomials.begin(), monomials.end(), [](const Monomial& m) { return m.coeff == 0.0; });
}

const char* to_string(TermGroup g) {
  switch (g) {
    case TermGroup::H: return "H";
    case TermGroup::P: return "P";
    case TermGroup::Q: return "Q";
    case TermGroup::FSharp: return "f#";
    case TermGroup::GSharp: return "g#";
    case TermGroup::HSharp: return "h#";
    case TermGroup::F: return "f";
    case TermGroup::G: return "g";
    case TermGroup::Hpert: return "h";
  }
  return "?";
}

int Term::y_degree(int m) const {
  int d = 0;
  for (int i = 0; i < m; ++i) d += expo[i];
  return d;
}

int Term::z_degree(int m) const {
  int d = 0;
  for (size_t i = m; i < expo.size(); ++i) d += expo[i];
  return d;
}

namespace {

double trig_value(const Term& t, const Vec& x) {
  double a = 0.0;
  for (size_t i = 0; i < t.j.size(); ++i) a += t.j[i] * x[i];
  return t.sine ? std::sin(a) : std::cos(a);
}

double monomial(const std::vector<int>& e, const Vec& X) {
  double v = 1.0;
  for (size_t i = 0; i < e.size(); ++i)
    if (e[i]) v *= std::pow(X[i], e[i]);
  return v;
}

bool zero_j(const std::vector<int>& j) {
  return std::all_of(j.begin(), j.end(), [](int v) { return v == 0; });
}

}  // namespace

// -------------------------------------------------------- ReversibleSystem

TMatrixSpec ReversibleSystem::block_shape() const {
  return TMatrixSpec(d1, d2, d3, Vec::Ones(d1 + d3), Vec::Ones(d2 + d3));
}

Vec ReversibleSystem::eval(const Vec& x, const Vec& X, const Vec& nu, double eps) const {
  Vec F = Vec::Zero(n + N());
  for (const auto& t : terms) {
    const double e = t.eps_power ? std::pow(eps, t.eps_power) : 1.0;
    if (e == 0.0) continue;
    F[t.row] += t.coeff(nu) * e * trig_value(t, x) * monomial(t.expo, X);
  }
  return F;
}

Vec ReversibleSystem::H(const Vec& y, const Vec& nu) const {
  Vec X = Vec::Zero(N());
  X.head(m) = y;
  Vec h = Vec::Zero(n);
  for (const auto& t : terms)
    if (t.group == TermGroup::H) h[t.row] += t.coeff(nu) * monomial(t.expo, X);
  return h;
}

Vec ReversibleSystem::P(const Vec& y, const Vec& nu) const {
  Vec X = Vec::Zero(N());
  X.head(m) = y;
  Vec v = Vec::Zero(m);
  for (const auto& t : terms)
    if (t.group == TermGroup::P) v[t.row - n] += t.coeff(nu) * monomial(t.expo, X);
  return v;
}

Mat ReversibleSystem::Q(const Vec& y, const Vec& nu) const {
  Mat q = Mat::Zero(2 * p, 2 * p);
  Vec X = Vec::Zero(N());
  X.head(m) = y;
  for (const auto& t : terms) {
    if (t.group != TermGroup::Q) continue;
    const int r = t.row - n - m;
    int c = -1;
    for (int i = 0; i < 2 * p; ++i)
      if (t.expo[m + i] == 1) c = i;
    std::vector<int> ey(t.expo.begin(), t.expo.begin() + m);
    ey.resize(N(), 0);
    q(r, c) += t.coeff(nu) * monomial(ey, X);
  }
  return q;
}

TMatrixSpec ReversibleSystem::floquet_data(const Vec& y, const Vec& nu) const {
  const Mat q = Q(y, nu);
  TMatrixSpec t = block_shape();
  int o = 0;
  for (int k = 0; k < d1; ++k, o += 2) t.alpha[k] = 0.5 * (q(o, o + 1) + q(o + 1, o));
  for (int l = 0; l < d2; ++l, o += 2) t.beta[l] = 0.5 * (q(o, o + 1) - q(o + 1, o));
  for (int i = 0; i < d3; ++i, o += 4) {
    t.alpha[d1 + i] = 0.25 * (q(o, o + 1) + q(o + 1, o) + q(o + 2, o + 3) + q(o + 3, o + 2));
    t.beta[d2 + i] = 0.25 * (q(o, o + 3) + q(o + 1, o + 2) - q(o + 2, o + 1) - q(o + 3, o));
  }
  const double defect = p ? (q - tmatrix_dense(t)).cwiseAbs().maxCoeff() : 0.0;
  if (defect > 1e-10 * std::max(1.0, q.cwiseAbs().maxCoeff()))
    throw Error(ErrorKind::Hypothesis, "systems.floquet_data",
                "Q(y, nu) is not in T-normal form for blocks (" + std::to_string(d1) + "," + std::to_string(d2) +
                    "," + std::to_string(d3) + ")");
  return t;
}

ReversibleSystem ReversibleSystem::unperturbed() const {
  ReversibleSystem r = *this;
  std::erase_if(r.terms, [](const Term& t) { return t.eps_power > 0; });
  return r;
}

// ------------------------------------------------------------------ audits

AuditReport audit_system(const ReversibleSystem& sys) {
  AuditReport rep;
  const int n = sys.n, m = sys.m, N = sys.N();
  auto bad = [&](size_t idx, const Term& t, const std::string& what) {
    rep.violations.push_back("term " + std::to_string(idx) + " (" + to_string(t.group) + ", row " +
                             std::to_string(t.row) + "): " + what);
  };
  if (sys.d1 + sys.d2 + 2 * sys.d3 != sys.p) rep.violations.push_back("block sizes d1 + d2 + 2 d3 must equal p");
  if (sys.nu0.size() != sys.s) rep.violations.push_back("nu0 must have s entries");

  for (size_t idx = 0; idx < sys.terms.size(); ++idx) {
    const Term& t = sys.terms[idx];
    if (static_cast<int>(t.j.size()) != n) {
      bad(idx, t, "Fourier index has wrong length");
      continue;
    }
    if (static_cast<int>(t.expo.size()) != N) {
      bad(idx, t, "exponent vector has wrong length");
      continue;
    }
    if (t.row < 0 || t.row >= n + N) {
      bad(idx, t, "target row out of range");
      continue;
    }
    if (std::any_of(t.expo.begin(), t.expo.end(), [](int e) { return e < 0; })) bad(idx, t, "negative exponent");
    for (const auto& mono : t.coeff.monomials)
      if (!mono.powers.empty() && static_cast<int>(mono.powers.size()) != sys.s)
        bad(idx, t, "nu monomial has wrong length");
    if (t.sine && zero_j(t.j)) bad(idx, t, "sine of the zero mode vanishes identically");

    const bool xrow = t.row < n, yrow = t.row >= n && t.row < n + m, zrow = t.row >= n + m;
    const int zd = t.z_degree(m);
    const bool sharp_or_skeleton = t.eps_power == 0;
    switch (t.group) {
      case TermGroup::H:
        if (!xrow) bad(idx, t, "H must target an x row");
        if (!zero_j(t.j) || zd != 0) bad(idx, t, "H depends on y and nu only");
        break;
      case TermGroup::P:
        if (sys.delta != -1) bad(idx, t, "P is only present in context 2");
        if (!yrow) bad(idx, t, "P must target a y row");
        if (!zero_j(t.j) || zd != 0) bad(idx, t, "P depends on y and nu only");
        break;
      case TermGroup::Q: {
        if (!zrow) bad(idx, t, "Q must target a z row");
        if (!zero_j(t.j) || zd != 1) bad(idx, t, "Q z is linear in z and independent of x");
        if (zrow && zd == 1) {
          int c = 0;
          for (int i = 0; i < 2 * sys.p; ++i)
            if (t.expo[m + i]) c = i;
          const int r = t.row - n - m;
          if ((r % 2) == (c % 2)) bad(idx, t, "Q entry does not anti-commute with K");
        }
        break;
      }
      case TermGroup::FSharp:
        if (!xrow) bad(idx, t, "f# must target an x row");
        if (zd < 1) bad(idx, t, "f# must be O(z)");
        break;
      case TermGroup::GSharp:
        if (!yrow) bad(idx, t, "g# must target a y row");
        if (zd < 2) bad(idx, t, "g# must be O_2(z)");
        break;
      case TermGroup::HSharp:
        if (!zrow) bad(idx, t, "h# must target a z row");
        if (zd < 2) bad(idx, t, "h# must be O_2(z)");
        break;
      case TermGroup::F:
        if (!xrow) bad(idx, t, "f must target an x row");
        break;
      case TermGroup::G:
        if (!yrow) bad(idx, t, "g must target a y row");
        break;
      case TermGroup::Hpert:
        if (!zrow) bad(idx, t, "h must target a z row");
        break;
    }
    const bool is_pert = t.group == TermGroup::F || t.group == TermGroup::G || t.group == TermGroup::Hpert;
    if (is_pert && t.eps_power != 1) bad(idx, t, "perturbation terms carry eps_power 1");
    if (!is_pert && !sharp_or_skeleton) bad(idx, t, "skeleton and sharp terms carry eps_power 0");

    // Reversibility sign: value at G w relative to value at w.
    int sign = t.sine ? -1 : 1;
    if (sys.delta == -1 && t.y_degree(m) % 2) sign = -sign;
    for (int i = 0; i < 2 * sys.p; ++i)
      if ((i % 2) && (t.expo[m + i] % 2)) sign = -sign;
    int required = 1;
    if (yrow) required = -sys.delta;
    if (zrow) required = ((t.row - n - m) % 2 == 0) ? -1 : 1;
    if (sign != required) bad(idx, t, "parity violates G-reversibility");
  }
  return rep;
}

void validate_system(const ReversibleSystem& sys) {
  require(sys.n >= 1 && sys.m >= 0 && sys.p >= 0 && sys.s >= 0, "systems.validate", "invalid dimensions");
  require(sys.delta == 1 || sys.delta == -1, "systems.validate", "delta must be +1 or -1");
  const AuditReport rep = audit_system(sys);
  if (!rep.ok()) {
    std::string msg = "system audit failed: " + rep.violations.front();
    if (rep.violations.size() > 1) msg += " (+" + std::to_string(rep.violations.size() - 1) + " more)";
    throw Error(ErrorKind::Hypothesis, "systems.validate", msg);
  }
}

double system_reversibility_residual(const ReversibleSystem& sys, int samples, std::uint64_t seed) {
  const FullFieldFn f = [&sys](const Vec& x, const Vec& X, const Vec& nu, double eps) {
    return sys.eval(x, X, nu, eps);
  };
  return reversibility_residual(f, sys.involution(), sys.s, samples, seed);
}

// ---------------------------------------------------------------- builders

namespace {

Term make_term(TermGroup g, int row, std::vector<int> j, bool sine, std::vector<int> expo, NuPoly c,
               int eps_power = 0) {
  Term t;
  t.group = g;
  t.row = row;
  t.j = std::move(j);
  t.sine = sine;
  t.expo = std::move(expo);
  t.coeff = std::move(c);
  t.eps_power = eps_power;
  return t;
}

std::vector<double> unit_affine(int s, int i, double c = 1.0, double c0 = 0.0) {
  std::vector<double> a(s + 1, 0.0);
  a[0] = c0;
  a[i + 1] = c;
  return a;
}

// Adds Q entries realizing T(alpha, beta) with beta_l = nu[beta_index + l]
// (or constant when beta_index < 0), alpha constant or nu-driven.
void add_tmatrix_terms(ReversibleSystem& sys, const std::vector<NuPoly>& alpha, const std::vector<NuPoly>& beta) {
  const int n = sys.n, m = sys.m, N = sys.N();
  auto entry = [&](int r, int c, const NuPoly& v, double sgn) {
    std::vector<int> e(N, 0);
    e[m + c] = 1;
    NuPoly w = v;
    for (auto& mono : w.monomials) mono.coeff *= sgn;
    sys.terms.push_back(make_term(TermGroup::Q, n + m + r, std::vector<int>(n, 0), false, e, w));
  };
  int o = 0;
  for (int k = 0; k < sys.d1; ++k, o += 2) {
    entry(o, o + 1, alpha[k], 1.0);
    entry(o + 1, o, alpha[k], 1.0);
  }
  for (int l = 0; l < sys.d2; ++l, o += 2) {
    entry(o, o + 1, beta[l], 1.0);
    entry(o + 1, o, beta[l], -1.0);
  }
  for (int i = 0; i < sys.d3; ++i, o += 4) {
    const NuPoly& a = alpha[sys.d1 + i];
    const NuPoly& b = beta[sys.d2 + i];
    entry(o, o + 1, a, 1.0);
    entry(o + 1, o, a, 1.0);
    entry(o + 2, o + 3, a, 1.0);
    entry(o + 3, o + 2, a, 1.0);
    entry(o, o + 3, b, 1.0);
    entry(o + 1, o + 2, b, 1.0);
    entry(o + 2, o + 1, b, -1.0);
    entry(o + 3, o, b, -1.0);
  }
}

// Desk perturbation shared by the bundled one-dimensional families
// (rows: x = 0, y = 1, z1 = 2, z2 = 3).
void add_desk_perturbation(ReversibleSystem& sys) {
  const std::vector<int> j0{0}, j1{1};
  const bool odd_y = sys.delta == 1;  // y-rows are odd in x in context 1
  auto E = [](int y, int z1, int z2) { return std::vector<int>{y, z1, z2}; };
  auto c = [](double v) { return NuPoly::constant(v); };
  sys.terms.push_back(make_term(TermGroup::FSharp, 0, j1, false, E(0, 1, 0), c(0.4)));
  sys.terms.push_back(make_term(TermGroup::GSharp, 1, j1, odd_y, E(0, 2, 0), c(0.3)));
  sys.terms.push_back(make_term(TermGroup::HSharp, 2, j1, true, E(0, 2, 0), c(0.25)));
  sys.terms.push_back(make_term(TermGroup::HSharp, 3, j1, false, E(0, 2, 0), c(0.2)));

  sys.terms.push_back(make_term(TermGroup::F, 0, j0, false, E(0, 0, 0), c(0.3), 1));
  sys.terms.push_back(make_term(TermGroup::F, 0, j1, false, E(0, 0, 0), c(0.5), 1));
  if (!odd_y) sys.terms.push_back(make_term(TermGroup::G, 1, j0, false, E(0, 0, 0), c(0.4), 1));
  sys.terms.push_back(make_term(TermGroup::G, 1, j1, odd_y, E(0, 0, 0), c(0.5), 1));
  sys.terms.push_back(make_term(TermGroup::Hpert, 2, j1, true, E(0, 0, 0), c(0.3), 1));
  sys.terms.push_back(make_term(TermGroup::Hpert, 3, j0, false, E(0, 0, 0), c(0.2), 1));
  sys.terms.push_back(make_term(TermGroup::Hpert, 3, j1, false, E(0, 0, 0), c(0.3), 1));
}

constexpr double kGoldenFrac = 0.6180339887498949;

}  // namespace

ReversibleSystem build_extreme_integrable(int kind, int n, int m, int s, const std::vector<Term>& H,
                                          const std::vector<Term>& P) {
  require(kind == 1 || kind == 2, "systems.build_extreme_integrable", "kind must be 1 or 2");
  ReversibleSystem sys;
  sys.name = kind == 1 ? "extreme1" : "extreme2";
  sys.n = n;
  sys.m = m;
  sys.p = 0;
  sys.s = s;
  sys.delta = kind == 1 ? 1 : -1;
  sys.nu0 = Vec::Zero(s);
  sys.y0 = Vec::Zero(m);
  for (Term t : H) {
    t.group = TermGroup::H;
    sys.terms.push_back(t);
  }
  if (kind == 1) {
    require(P.empty(), "systems.build_extreme_integrable", "kind 1 has y' = 0");
  } else {
    for (Term t : P) {
      t.group = TermGroup::P;
      t.row += n;
      sys.terms.push_back(t);
    }
  }
  validate_system(sys);
  return sys;
}

ReversibleSystem build_context2_example(std::uint64_t seed, const ExampleSizes& sz, double magnitude) {
  ReversibleSystem sys;
  sys.name = "context2-example-" + std::to_string(seed);
  sys.n = sz.n;
  sys.m = sz.m;
  sys.d1 = sz.d1;
  sys.d2 = sz.d2;
  sys.d3 = sz.d3;
  sys.p = sz.d1 + sz.d2 + 2 * sz.d3;
  sys.delta = -1;
  const int n = sys.n, m = sys.m, N = sys.N(), d = sz.d2 + sz.d3;
  sys.s = n + m + d;
  const int s = sys.s;
  require(n >= 1 && n <= 3 && m >= 1 && sys.p >= 1, "systems.build_context2_example", "unsupported sizes");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.5, 1.5);

  Vec omega(n);
  const double base[3] = {1.0, std::sqrt(2.0), std::sqrt(3.0)};
  if (n == 1)
    omega[0] = kGoldenFrac;
  else
    for (int i = 0; i < n; ++i) omega[i] = base[i];
  sys.nu0 = Vec::Zero(s);
  sys.nu0.head(n) = omega;
  sys.y0 = Vec::Zero(m);

  for (int i = 0; i < n; ++i) {
    sys.terms.push_back(make_term(TermGroup::H, i, std::vector<int>(n, 0), false, std::vector<int>(N, 0),
                                  NuPoly::affine(unit_affine(s, i))));
    for (int k = 0; k < m; ++k) {
      std::vector<int> e(N, 0);
      e[k] = 2;
      sys.terms.push_back(
          make_term(TermGroup::H, i, std::vector<int>(n, 0), false, e, NuPoly::constant(0.4 + 0.2 * U(rng))));
    }
  }
  for (int i = 0; i < m; ++i) {
    sys.terms.push_back(make_term(TermGroup::P, n + i, std::vector<int>(n, 0), false, std::vector<int>(N, 0),
                                  NuPoly::affine(unit_affine(s, n + i))));
    std::vector<int> e(N, 0);
    e[i] = 2;
    sys.terms.push_back(
        make_term(TermGroup::P, n + i, std::vector<int>(n, 0), false, e, NuPoly::constant(0.3 + 0.1 * U(rng))));
  }
  std::vector<NuPoly> alpha, beta;
  for (int k = 0; k < sz.d1 + sz.d3; ++k) alpha.push_back(NuPoly::constant(pos(rng)));
  for (int l = 0; l < d; ++l) {
    sys.nu0[n + m + l] = pos(rng);
    beta.push_back(NuPoly::affine(unit_affine(s, n + m + l)));
  }
  add_tmatrix_terms(sys, alpha, beta);

  if (magnitude > 0.0) {
    std::uniform_int_distribution<int> jdist(-2, 2), bit(0, 1), zidx(0, 2 * sys.p - 1), yidx(0, m - 1);
    auto random_j = [&]() {
      std::vector<int> j(n);
      for (auto& v : j) v = jdist(rng);
      return j;
    };
    auto add = [&](TermGroup g, int row, int zdeg, int ydeg, int eps_power) {
      Term t = make_term(g, row, random_j(), bit(rng) == 1, std::vector<int>(N, 0),
                         NuPoly::constant(magnitude * U(rng)), eps_power);
      for (int k = 0; k < zdeg; ++k) ++t.expo[m + zidx(rng)];
      for (int k = 0; k < ydeg; ++k) ++t.expo[yidx(rng)];
      // Parity projection: flip cos <-> sin when the sign is wrong.
      int sign = t.sine ? -1 : 1;
      if (t.y_degree(m) % 2) sign = -sign;
      for (int i = 0; i < 2 * sys.p; ++i)
        if ((i % 2) && (t.expo[m + i] % 2)) sign = -sign;
      int required = 1;
      if (row >= n && row < n + m) required = 1;  // -delta
      if (row >= n + m) required = ((row - n - m) % 2 == 0) ? -1 : 1;
      if (sign != required) t.sine = !t.sine;
      if (t.sine && zero_j(t.j)) t.j[0] = 1;
      sys.terms.push_back(t);
    };
    for (int i = 0; i < n; ++i) {
      add(TermGroup::FSharp, i, 1, 0, 0);
      add(TermGroup::FSharp, i, 1, 1, 0);
      add(TermGroup::F, i, 0, 0, 1);
      add(TermGroup::F, i, 1, 0, 1);
    }
    for (int i = 0; i < m; ++i) {
      add(TermGroup::GSharp, n + i, 2, 0, 0);
      add(TermGroup::G, n + i, 0, 0, 1);
      add(TermGroup::G, n + i, 0, 1, 1);
    }
    for (int r = 0; r < 2 * sys.p; ++r) {
      add(TermGroup::HSharp, n + m + r, 2, 0, 0);
      add(TermGroup::Hpert, n + m + r, 0, 0, 1);
      add(TermGroup::Hpert, n + m + r, 1, 0, 1);
    }
  }
  validate_system(sys);
  return sys;
}

std::vector<std::string> builtin_system_names() {
  return {"desk-context2", "desk-context2-d1", "desk-context1", "resonant", "rank-deficient"};
}

ReversibleSystem builtin_system(const std::string& name) {
  ReversibleSystem sys;
  sys.name = name;
  auto E = [](int y, int z1, int z2) { return std::vector<int>{y, z1, z2}; };
  const std::vector<int> j0{0};

  if (name == "desk-context2" || name == "desk-context2-d1" || name == "rank-deficient") {
    const bool d1 = name == "desk-context2-d1";
    const bool deficient = name == "rank-deficient";
    sys.n = 1;
    sys.m = 1;
    sys.p = 1;
    sys.s = 3;
    sys.delta = -1;
    sys.d1 = d1 ? 1 : 0;
    sys.d2 = d1 ? 0 : 1;
    sys.nu0 = Vec::Zero(3);
    sys.nu0 << kGoldenFrac, 0.0, d1 ? 0.8 : 1.0;
    sys.y0 = Vec::Zero(1);
    if (deficient) {
      // H and P both depend on nu1 + nu2 only.
      sys.terms.push_back(make_term(TermGroup::H, 0, j0, false, E(0, 0, 0), NuPoly::affine({0, 1, 1, 0})));
      sys.terms.push_back(
          make_term(TermGroup::P, 1, j0, false, E(0, 0, 0), NuPoly::affine({-2 * kGoldenFrac, 2, 2, 0})));
    } else {
      sys.terms.push_back(make_term(TermGroup::H, 0, j0, false, E(0, 0, 0), NuPoly::affine({0, 1, 0, 0})));
      sys.terms.push_back(make_term(TermGroup::P, 1, j0, false, E(0, 0, 0), NuPoly::affine({0, 0, 1, 0})));
    }
    sys.terms.push_back(make_term(TermGroup::H, 0, j0, false, E(2, 0, 0), NuPoly::constant(0.5)));
    sys.terms.push_back(make_term(TermGroup::P, 1, j0, false, E(2, 0, 0), NuPoly::constant(0.3)));
    const NuPoly nu3 = NuPoly::affine({0, 0, 0, 1});
    if (d1)
      add_tmatrix_terms(sys, {nu3}, {});
    else
      add_tmatrix_terms(sys, {}, {nu3});
    // y-dependence of Q away from y = 0 (even in y, keeps anti-commutation).
    sys.terms.push_back(make_term(TermGroup::Q, 2, j0, false, E(2, 0, 1), NuPoly::constant(0.2)));
    add_desk_perturbation(sys);
  } else if (name == "desk-context1") {
    sys.n = 1;
    sys.m = 1;
    sys.p = 1;
    sys.s = 2;
    sys.delta = 1;
    sys.d2 = 1;
    sys.y0 = Vec::Constant(1, 0.2);
    sys.nu0 = Vec::Zero(2);
    sys.nu0 << kGoldenFrac - 0.5 * 0.2, 1.0 - 0.3 * 0.2;
    sys.terms.push_back(make_term(TermGroup::H, 0, j0, false, E(0, 0, 0), NuPoly::affine({0, 1, 0})));
    sys.terms.push_back(make_term(TermGroup::H, 0, j0, false, E(1, 0, 0), NuPoly::constant(0.5)));
    sys.terms.push_back(make_term(TermGroup::H, 0, j0, false, E(2, 0, 0), NuPoly::constant(0.1)));
    add_tmatrix_terms(sys, {}, {NuPoly::affine({0, 0, 1})});
    sys.terms.push_back(make_term(TermGroup::Q, 2, j0, false, E(1, 0, 1), NuPoly::constant(0.3)));
    sys.terms.push_back(make_term(TermGroup::Q, 3, j0, false, E(1, 1, 0), NuPoly::constant(-0.3)));
    add_desk_perturbation(sys);
  } else if (name == "resonant") {
    sys.n = 2;
    sys.m = 1;
    sys.p = 1;
    sys.s = 4;
    sys.delta = -1;
    sys.d2 = 1;
    sys.nu0 = Vec::Zero(4);
    sys.nu0 << 1.0, 0.5, 0.0, std::sqrt(2.0);
    sys.y0 = Vec::Zero(1);
    const std::vector<int> j00{0, 0}, j10{1, 0};
    auto E2 = [](int y, int z1, int z2) { return std::vector<int>{y, z1, z2}; };
    sys.terms.push_back(make_term(TermGroup::H, 0, j00, false, E2(0, 0, 0), NuPoly::affine({0, 1, 0, 0, 0})));
    sys.terms.push_back(make_term(TermGroup::H, 1, j00, false, E2(0, 0, 0), NuPoly::affine({0, 0, 1, 0, 0})));
    sys.terms.push_back(make_term(TermGroup::P, 2, j00, false, E2(0, 0, 0), NuPoly::affine({0, 0, 0, 1, 0})));
    add_tmatrix_terms(sys, {}, {NuPoly::affine({0, 0, 0, 0, 1})});
    sys.terms.push_back(make_term(TermGroup::F, 0, j10, false, E2(0, 0, 0), NuPoly::constant(0.5), 1));
    sys.terms.push_back(make_term(TermGroup::G, 2, j10, false, E2(0, 0, 0), NuPoly::constant(0.5), 1));
  } else {
    throw Error(ErrorKind::Config, "systems.builtin_system", "unknown bundled system '" + name + "'");
  }
  validate_system(sys);
  return sys;
}

// ------------------------------------------------------------ field models

PolyFieldModel::PolyFieldModel(int n, int N, std::vector<Mono> monos, Vec off, Vec scale, Vec constant)
    : n_(n), N_(N), monos_(std::move(monos)), off_(std::move(off)), scale_(std::move(scale)),
      constant_(std::move(constant)) {
  require(off_.size() == N_ && scale_.size() == N_ && constant_.size() == n_ + N_, "systems.PolyFieldModel",
          "shape mismatch");
}

void PolyFieldModel::eval(std::span<const double> x, std::span<const double> X, FieldValue& out) const {
  out.fx = constant_.head(n_);
  out.fX = constant_.tail(N_);
  out.jx = Mat::Zero(n_, N_);
  out.jX = Mat::Zero(N_, N_);
  double u[64];
  for (int i = 0; i < N_; ++i) u[i] = off_[i] + scale_[i] * X[i];
  for (const auto& mono : monos_) {
    double a = 0.0;
    for (int i = 0; i < n_; ++i) a += mono.j[i] * x[i];
    const double c = mono.coef * (mono.sine ? std::sin(a) : std::cos(a));
    if (c == 0.0) continue;
    double v = c;
    for (int i = 0; i < N_; ++i)
      if (mono.expo[i]) v *= std::pow(u[i], mono.expo[i]);
    double& target = mono.row < n_ ? out.fx[mono.row] : out.fX[mono.row - n_];
    target += v;
    for (int i = 0; i < N_; ++i) {
      if (!mono.expo[i]) continue;
      double d = c * mono.expo[i] * scale_[i] * std::pow(u[i], mono.expo[i] - 1);
      for (int k = 0; k < N_; ++k)
        if (k != i && mono.expo[k]) d *= std::pow(u[k], mono.expo[k]);
      if (mono.row < n_)
        out.jx(mono.row, i) += d;
      else
        out.jX(mono.row - n_, i) += d;
    }
  }
}

std::shared_ptr<PolyFieldModel> system_slice(const ReversibleSystem& sys, const Vec& nu, double eps) {
  require(nu.size() == sys.s, "systems.system_slice", "nu has wrong length");
  require(sys.N() <= 64, "systems.system_slice", "fiber dimension too large");
  std::vector<PolyFieldModel::Mono> monos;
  for (const auto& t : sys.terms) {
    const double e = t.eps_power ? std::pow(eps, t.eps_power) : 1.0;
    const double c = t.coeff(nu) * e;
    if (c != 0.0) monos.push_back({t.row, t.j, t.sine, t.expo, c});
  }
  return std::make_shared<PolyFieldModel>(sys.n, sys.N(), std::move(monos), Vec::Zero(sys.N()), Vec::Ones(sys.N()),
                                          Vec::Zero(sys.n + sys.N()));
}

Vec project_angle(const FourierSeries& A, const Vec& x) {
  const int n = A.n();
  std::vector<FourierSeries> dA;
  for (int k = 0; k < n; ++k) dA.push_back(A.partial(k));
  Vec xi = x - A.evaluate(std::span<const double>(x.data(), n));
  for (int it = 0; it < 60; ++it) {
    const std::span<const double> s(xi.data(), n);
    const Vec r = xi + A.evaluate(s) - x;
    if (r.cwiseAbs().maxCoeff() < 1e-15) break;
    Mat J = Mat::Identity(n, n);
    for (int k = 0; k < n; ++k) J.col(k) += dA[k].evaluate(s);
    xi -= J.lu().solve(r);
  }
  return xi;
}

PushforwardModel::PushforwardModel(std::shared_ptr<const FieldModel> base, FourierSeries A0, FourierSeries B0,
                                   FourierSeries C0)
    : base_(std::move(base)), A0_(std::move(A0)), B0_(std::move(B0)), C0_(std::move(C0)) {
  for (int k = 0; k < base_->n(); ++k) {
    dA0_.push_back(A0_.partial(k));
    dB0_.push_back(B0_.partial(k));
    dC0_.push_back(C0_.partial(k));
  }
}

Vec PushforwardModel::invert_angle(const Vec& x) const { return project_angle(A0_, x); }

void PushforwardModel::eval(std::span<const double> x, std::span<const double> X, FieldValue& out) const {
  const int n = base_->n(), N = base_->N();
  const Vec xv = Eigen::Map<const Vec>(x.data(), n);
  const Vec Xv = Eigen::Map<const Vec>(X.data(), N);
  const Vec xi = invert_angle(xv);
  const std::span<const double> s(xi.data(), n);

  Mat Axi(n, n), Bxi(N, n);
  std::vector<Mat> dC(n);
  for (int k = 0; k < n; ++k) {
    Axi.col(k) = dA0_[k].evaluate(s);
    Bxi.col(k) = dB0_[k].evaluate(s);
    dC[k] = dC0_[k].evaluate_matrix(s);
  }
  const Mat IA = Mat::Identity(n, n) + Axi;
  const Mat IC = Mat::Identity(N, N) + C0_.evaluate_matrix(s);
  const Mat ICi = IC.inverse();
  const Vec Xi = ICi * (Xv - B0_.evaluate(s));

  FieldValue v;
  base_->eval(s, std::span<const double>(Xi.data(), N), v);

  out.fx = IA * v.fx;
  out.fX = Bxi * v.fx + IC * v.fX;
  Mat jX = Bxi * v.jx + IC * v.jX;
  for (int k = 0; k < n; ++k) {
    const Vec dCXi = dC[k] * Xi;
    out.fX += dCXi * v.fx[k];
    jX += dCXi * v.jx.row(k) + v.fx[k] * dC[k];
  }
  out.jx = IA * v.jx * ICi;
  out.jX = jX * ICi;
}

// ----------------------------------------------------------------- orbits

namespace {

Vec rk4_step(const AutonomousRhs& f, const Vec& w, double h) {
  const Vec k1 = f(w);
  const Vec k2 = f(w + 0.5 * h * k1);
  const Vec k3 = f(w + 0.5 * h * k2);
  const Vec k4 = f(w + h * k3);
  return w + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Trajectory run_rk4(const AutonomousRhs& f, int n, const Vec& w0, double T, double dt, int record_every,
                   double radius) {
  Trajectory tr;
  const long steps = std::lround(T / dt);
  require(dt > 0.0 && steps >= 1, "systems.integrate_orbit", "dt must be positive and smaller than T");
  const double h = T / static_cast<double>(steps);
  Vec w = w0;
  tr.t.push_back(0.0);
  tr.state.push_back(w);
  for (long k = 1; k <= steps; ++k) {
    w = rk4_step(f, w, h);
    const auto fiber = w.tail(w.size() - n);
    if (!w.allFinite() || (fiber.size() && fiber.cwiseAbs().maxCoeff() > radius))
      throw Error(ErrorKind::Solver, "systems.integrate_orbit", "fiber leaves domain at t=" + std::to_string(k * h));
    if (k % record_every == 0 || k == steps) {
      tr.t.push_back(k * h);
      tr.state.push_back(w);
    }
  }
  return tr;
}

}  // namespace

Trajectory integrate_orbit(const AutonomousRhs& f, int n, const Vec& w0, double T, double dt, int record_every,
                           bool halving_check, double domain_radius) {
  require(record_every >= 1, "systems.integrate_orbit", "record_every must be >= 1");
  Trajectory tr = run_rk4(f, n, w0, T, dt, record_every, domain_radius);
  if (halving_check) {
    const Trajectory fine = run_rk4(f, n, w0, T, dt / 2.0, 2 * record_every, domain_radius);
    const size_t common = std::min(tr.state.size(), fine.state.size());
    for (size_t i = 0; i < common; ++i)
      tr.halving_error = std::max(tr.halving_error, (tr.state[i] - fine.state[i]).cwiseAbs().maxCoeff());
  }
  return tr;
}

Trajectory integrate_orbit(const ReversibleSystem& sys, const Vec& nu, double eps, const Vec& w0, double T, double dt,
                           int record_every, bool halving_check) {
  const int n = sys.n;
  const AutonomousRhs f = [&](const Vec& w) { return sys.eval(w.head(n), w.tail(w.size() - n), nu, eps); };
  return integrate_orbit(f, n, w0, T, dt, record_every, halving_check);
}

VerificationReport verify_solution(const ReversibleSystem& sys, const Vec& nu, double eps, const TorusGeometry& torus,
                                   const VerifyOptions& opt) {
  const int n = sys.n, N = sys.N();
  const auto model = system_slice(sys, nu, eps);
  const AutonomousRhs rhs = [&](const Vec& w) {
    FieldValue v;
    model->eval(std::span<const double>(w.data(), n), std::span<const double>(w.data() + n, N), v);
    Vec out(n + N);
    out << v.fx, v.fX;
    return out;
  };

  std::vector<FourierSeries> dA, dB, dC;
  for (int k = 0; k < n; ++k) {
    dA.push_back(torus.A.partial(k));
    dB.push_back(torus.B.partial(k));
    dC.push_back(torus.C.partial(k));
  }

  VerificationReport rep;
  const int L = 2 * torus.A.jmax() + 1;
  int total = 1;
  for (int i = 0; i < n; ++i) total *= L;
  const int seeds = std::max(1, std::min(opt.seeds, total));
  const int every = std::max(1, static_cast<int>(std::lround(opt.sample_every / opt.dt)));
  GridFunction grid(n, L, 1);

  Mat M_sum = Mat::Zero(N, N);
  int M_count = 0;
  for (int sidx = 0; sidx < seeds; ++sidx) {
    const int point = static_cast<int>((static_cast<long long>(sidx) * total) / seeds);
    Vec xi0(n);
    for (int a = 0; a < n; ++a) xi0[a] = grid.angle(point, a);
    const std::span<const double> s0(xi0.data(), n);
    Vec w0(n + N);
    w0 << xi0 + torus.A.evaluate(s0), torus.B.evaluate(s0);

    const Trajectory tr = integrate_orbit(rhs, n, w0, opt.T, opt.dt, every, true);
    rep.halving_error = std::max(rep.halving_error, tr.halving_error);

    Mat M0, J0;
    for (size_t k = 0; k < tr.state.size(); ++k) {
      const Vec& w = tr.state[k];
      const Vec x = w.head(n), X = w.tail(N);
      const Vec xi = project_angle(torus.A, x);
      const std::span<const double> s(xi.data(), n);
      rep.max_distance = std::max(rep.max_distance, (X - torus.B.evaluate(s)).cwiseAbs().maxCoeff());

      FieldValue v;
      model->eval(std::span<const double>(x.data(), n), std::span<const double>(X.data(), N), v);
      Mat Axi(n, n), Bxi(N, n);
      for (int a = 0; a < n; ++a) {
        Axi.col(a) = dA[a].evaluate(s);
        Bxi.col(a) = dB[a].evaluate(s);
      }
      const Mat IAi = (Mat::Identity(n, n) + Axi).inverse();
      const Mat IC = Mat::Identity(N, N) + torus.C.evaluate_matrix(s);
      const Vec xidot = IAi * v.fx;
      Mat inner = v.jX * IC - Bxi * IAi * v.jx * IC;
      for (int a = 0; a < n; ++a) inner -= xidot[a] * dC[a].evaluate_matrix(s);
      const Mat M = IC.lu().solve(inner);
      if (k == 0) {
        M0 = M;
        J0 = v.jX;
      }
      rep.frame_constancy = std::max(rep.frame_constancy, (M - M0).cwiseAbs().maxCoeff());
      rep.raw_variation = std::max(rep.raw_variation, (v.jX - J0).cwiseAbs().maxCoeff());
      if (torus.floquet.size())
        rep.floquet_error = std::max(rep.floquet_error, (M - torus.floquet).cwiseAbs().maxCoeff());
      M_sum += M;
      ++M_count;
    }
  }

  if (torus.floquet.size() && M_count) {
    const Mat Mmean = M_sum / M_count;
    const CVec got = Eigen::EigenSolver<Mat>(Mmean).eigenvalues();
    const CVec want = Eigen::EigenSolver<Mat>(torus.floquet).eigenvalues();
    std::vector<bool> used(want.size(), false);
    for (Eigen::Index i = 0; i < got.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      Eigen::Index bi = 0;
      for (Eigen::Index k = 0; k < want.size(); ++k)
        if (!used[k] && std::abs(got[i] - want[k]) < best) {
          best = std::abs(got[i] - want[k]);
          bi = k;
        }
      used[bi] = true;
      rep.eigen_error = std::max(rep.eigen_error, best);
    }
  }
  rep.distance_ok = rep.max_distance <= opt.distance_tol;
  rep.frame_ok = rep.frame_constancy <= opt.frame_tol;
  return rep;
}

}  // namespace rkam
