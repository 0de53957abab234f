#include "rkam/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "rkam/error.hpp"

namespace rkam {

namespace {

constexpr const char* kStage = "io";

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorKind::Config, kStage, what); }

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    fail(std::string("field '") + key + "': " + e.what());
  }
}

NuPoly nu_poly_from_json(const json& j, int s) {
  if (j.is_null()) return NuPoly::constant(1.0);
  if (j.is_number()) return NuPoly::constant(j.get<double>());
  if (!j.is_array()) fail("nu_poly must be an array");
  if (j.empty() || j[0].is_number()) {
    std::vector<double> c = j.get<std::vector<double>>();
    if (static_cast<int>(c.size()) > s + 1) fail("affine nu_poly has more than s + 1 coefficients");
    c.resize(s + 1, 0.0);
    return NuPoly::affine(c);
  }
  NuPoly p;
  for (const auto& mono : j) {
    if (!mono.is_object() || !mono.contains("coeff")) fail("nu_poly monomials need a 'coeff'");
    NuPoly::Monomial m;
    m.coeff = mono["coeff"].get<double>();
    m.powers = get_or<std::vector<int>>(mono, "powers", {});
    if (!m.powers.empty() && static_cast<int>(m.powers.size()) != s) fail("nu_poly powers must have s entries");
    p.monomials.push_back(m);
  }
  return p;
}

json nu_poly_to_json(const NuPoly& p, int s) {
  bool affine = true;
  std::vector<double> c(s + 1, 0.0);
  for (const auto& m : p.monomials) {
    int deg = 0, at = -1;
    for (size_t i = 0; i < m.powers.size(); ++i)
      if (m.powers[i]) {
        deg += m.powers[i];
        at = static_cast<int>(i);
      }
    if (deg == 0)
      c[0] += m.coeff;
    else if (deg == 1)
      c[at + 1] += m.coeff;
    else
      affine = false;
  }
  if (affine) return c;
  json out = json::array();
  for (const auto& m : p.monomials) out.push_back({{"coeff", m.coeff}, {"powers", m.powers}});
  return out;
}

}  // namespace

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec vec_from_json(const json& j) {
  if (!j.is_array()) fail("expected a numeric array");
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

json mat_to_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

json series_to_json(const FourierSeries& s) {
  json modes = json::array();
  for (int md = 0; md < s.modes(); ++md) {
    json re = json::array(), im = json::array();
    for (int c = 0; c < s.dim(); ++c) {
      re.push_back(s(md, c).real());
      im.push_back(s(md, c).imag());
    }
    modes.push_back({{"j", s.index(md)}, {"re", re}, {"im", im}});
  }
  return {{"n", s.n()}, {"jmax", s.jmax()}, {"rows", s.rows()}, {"cols", s.cols()}, {"modes", modes}};
}

ReversibleSystem system_from_json(const json& j) {
  if (!j.is_object()) fail("system definition must be a JSON object");
  if (!j.contains("dims")) fail("missing 'dims'");
  ReversibleSystem sys;
  const json& d = j["dims"];
  sys.name = get_or<std::string>(j, "name", "system");
  sys.n = get_or<int>(d, "n", 1);
  sys.m = get_or<int>(d, "m", 0);
  sys.p = get_or<int>(d, "p", 0);
  sys.s = get_or<int>(d, "s", 0);
  sys.delta = get_or<int>(j, "delta", -1);
  if (sys.n < 1 || sys.m < 0 || sys.p < 0 || sys.s < 0) fail("dims must satisfy n >= 1 and m, p, s >= 0");
  if (sys.delta != 1 && sys.delta != -1) fail("delta must be +1 or -1");
  const int n = sys.n, m = sys.m, N = sys.N(), s = sys.s;

  sys.nu0 = j.contains("nu0") ? vec_from_json(j["nu0"]) : Vec::Zero(s);
  sys.y0 = j.contains("y0") ? vec_from_json(j["y0"]) : Vec::Zero(m);
  if (sys.nu0.size() != s) fail("nu0 must have s entries");
  if (sys.y0.size() != m) fail("y0 must have m entries");

  auto read_terms = [&](const json& arr, TermGroup g, int row_base, int rows, int default_eps, bool q) {
    if (arr.is_null()) return;
    if (!arr.is_array()) fail(std::string("term list for ") + to_string(g) + " must be an array");
    for (const auto& tj : arr) {
      Term t;
      t.group = g;
      int target = get_or<int>(tj, "target", 0);
      int col = -1;
      if (q) {
        const int w = 2 * sys.p;
        if (tj.contains("row") || tj.contains("col")) {
          target = get_or<int>(tj, "row", 0);
          col = get_or<int>(tj, "col", 0);
        } else {
          col = w ? target % w : 0;
          target = w ? target / w : 0;
        }
        if (col < 0 || col >= w) fail("Q column out of range");
      }
      if (target < 0 || target >= rows) fail(std::string("target out of range in ") + to_string(g));
      t.row = row_base + target;
      t.j = get_or<std::vector<int>>(tj, "j", std::vector<int>(n, 0));
      if (static_cast<int>(t.j.size()) != n) fail("Fourier index j must have n entries");
      const std::string trig = get_or<std::string>(tj, "trig", "cos");
      if (trig != "cos" && trig != "sin") fail("trig must be 'cos' or 'sin'");
      t.sine = trig == "sin";
      t.expo = get_or<std::vector<int>>(tj, "yz_exponents", std::vector<int>(N, 0));
      if (static_cast<int>(t.expo.size()) == m && q) t.expo.resize(N, 0);
      if (static_cast<int>(t.expo.size()) != N) fail("yz_exponents must have m + 2p entries");
      if (q) {
        for (int i = m; i < N; ++i)
          if (t.expo[i]) fail("Q entries take y-exponents only; the z factor is implied by the column");
        t.expo[m + col] += 1;
      }
      t.coeff = nu_poly_from_json(tj.contains("nu_poly") ? tj["nu_poly"] : json(), s);
      t.eps_power = get_or<int>(tj, "eps_power", default_eps);
      sys.terms.push_back(t);
    }
  };
  auto group_of = [&](const char* key) { return j.contains(key) ? j[key] : json(); };
  read_terms(group_of("H"), TermGroup::H, 0, n, 0, false);
  read_terms(group_of("P"), TermGroup::P, n, m, 0, false);
  read_terms(group_of("Q"), TermGroup::Q, n + m, 2 * sys.p, 0, true);
  const json sharp = group_of("sharp"), pert = group_of("perturbation");
  auto sub = [](const json& o, const char* key) { return o.is_object() && o.contains(key) ? o[key] : json(); };
  read_terms(sub(sharp, "f"), TermGroup::FSharp, 0, n, 0, false);
  read_terms(sub(sharp, "g"), TermGroup::GSharp, n, m, 0, false);
  read_terms(sub(sharp, "h"), TermGroup::HSharp, n + m, 2 * sys.p, 0, false);
  read_terms(sub(pert, "f"), TermGroup::F, 0, n, 1, false);
  read_terms(sub(pert, "g"), TermGroup::G, n, m, 1, false);
  read_terms(sub(pert, "h"), TermGroup::Hpert, n + m, 2 * sys.p, 1, false);

  if (j.contains("blocks")) {
    const auto b = j["blocks"].get<std::vector<int>>();
    if (b.size() != 3) fail("blocks must be [d1, d2, d3]");
    sys.d1 = b[0];
    sys.d2 = b[1];
    sys.d3 = b[2];
  } else if (sys.p > 0) {
    // Infer the block structure from Q at the base point, or at a fixed
    // generic parameter when no base point is given.
    const Vec y = sys.delta == 1 ? sys.y0 : Vec::Zero(m);
    Vec nu = sys.nu0;
    if (!j.contains("nu0")) {
      std::mt19937_64 rng(12345);
      std::uniform_real_distribution<double> U(0.5, 1.5);
      for (int i = 0; i < s; ++i) nu[i] = U(rng);
    }
    const SpectrumClassification cl = classify_anticommuting_pair(k_normal(sys.p), sys.Q(y, nu));
    sys.d1 = cl.form.d1;
    sys.d2 = cl.form.d2;
    sys.d3 = cl.form.d3;
  }
  if (sys.d1 + sys.d2 + 2 * sys.d3 != sys.p) fail("blocks must satisfy d1 + d2 + 2 d3 = p");
  return sys;
}

json system_to_json(const ReversibleSystem& sys) {
  const int n = sys.n, m = sys.m, N = sys.N();
  json j;
  j["name"] = sys.name;
  j["dims"] = {{"n", n}, {"m", m}, {"p", sys.p}, {"s", sys.s}};
  j["delta"] = sys.delta;
  j["blocks"] = {sys.d1, sys.d2, sys.d3};
  j["nu0"] = vec_to_json(sys.nu0);
  j["y0"] = vec_to_json(sys.y0);
  json H = json::array(), P = json::array(), Q = json::array();
  json sharp = {{"f", json::array()}, {"g", json::array()}, {"h", json::array()}};
  json pert = sharp;
  for (const auto& t : sys.terms) {
    json tj;
    std::vector<int> expo = t.expo;
    int local = t.row < n ? t.row : (t.row < n + m ? t.row - n : t.row - n - m);
    if (t.group == TermGroup::Q) {
      int col = 0;
      for (int i = m; i < N; ++i)
        if (expo[i]) col = i - m;
      expo[m + col] -= 1;
      tj["row"] = local;
      tj["col"] = col;
      local = local * 2 * sys.p + col;
    }
    tj["target"] = local;
    tj["j"] = t.j;
    tj["trig"] = t.sine ? "sin" : "cos";
    tj["yz_exponents"] = expo;
    tj["nu_poly"] = nu_poly_to_json(t.coeff, sys.s);
    tj["eps_power"] = t.eps_power;
    switch (t.group) {
      case TermGroup::H: H.push_back(tj); break;
      case TermGroup::P: P.push_back(tj); break;
      case TermGroup::Q: Q.push_back(tj); break;
      case TermGroup::FSharp: sharp["f"].push_back(tj); break;
      case TermGroup::GSharp: sharp["g"].push_back(tj); break;
      case TermGroup::HSharp: sharp["h"].push_back(tj); break;
      case TermGroup::F: pert["f"].push_back(tj); break;
      case TermGroup::G: pert["g"].push_back(tj); break;
      case TermGroup::Hpert: pert["h"].push_back(tj); break;
    }
  }
  j["H"] = H;
  j["P"] = P;
  j["Q"] = Q;
  j["sharp"] = sharp;
  j["perturbation"] = pert;
  return j;
}

ReversibleSystem load_system_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open system file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail("cannot parse '" + path + "': " + e.what());
  }
  return system_from_json(j);
}

json checked(double value, double tol) { return {{"value", value}, {"tol", tol}, {"ok", value <= tol}}; }

json to_json(const DiophantineCertificate& c) {
  return {{"omega", vec_to_json(c.omega)},
          {"beta", vec_to_json(c.beta)},
          {"tau", c.tau},
          {"gamma", c.gamma},
          {"jmax_checked", c.jmax_checked},
          {"min_ratio", c.min_ratio},
          {"argmin_j", c.argmin_j},
          {"argmin_J", c.argmin_J},
          {"pairs_checked", c.pairs_checked}};
}

json to_json(const TMatrixSpec& t) {
  return {{"blocks", {t.d1, t.d2, t.d3}}, {"alpha", vec_to_json(t.alpha)}, {"beta", vec_to_json(t.beta)}};
}

json to_json(const RankReport& r) {
  json j = {{"singular_values", vec_to_json(r.singular_values)},
            {"required", r.required},
            {"available", r.available},
            {"ok", r.ok},
            {"labels", r.labels}};
  if (!r.ok) {
    j["deficient_direction"] = vec_to_json(r.deficient_direction);
    j["deficient_summary"] = r.deficient_summary;
  }
  return j;
}

json to_json(const ModifyingTerms& m) {
  return {{"lambda", vec_to_json(m.lambda)}, {"mu", vec_to_json(m.mu)}, {"q", vec_to_json(m.q)},
          {"r", vec_to_json(m.r)}};
}

json to_json(const VerificationReport& r, const VerifyOptions& opt) {
  return {{"T", opt.T},
          {"dt", opt.dt},
          {"seeds", opt.seeds},
          {"max_distance", checked(r.max_distance, opt.distance_tol)},
          {"frame_constancy", checked(r.frame_constancy, opt.frame_tol)},
          {"halving_error", r.halving_error},
          {"raw_variation", r.raw_variation},
          {"floquet_error", r.floquet_error},
          {"eigen_error", r.eigen_error}};
}

namespace {

// Sum of coefficient moduli over modes, maximized over components [c0, c1).
double coeff_l1(const FourierSeries& f, int c0, int c1) {
  double best = 0.0;
  for (int c = c0; c < c1; ++c) {
    double sum = 0.0;
    for (int mode = 0; mode < f.modes(); ++mode) sum += std::abs(f(mode, c));
    best = std::max(best, sum);
  }
  return best;
}

}  // namespace

json to_json(const KamSolution& s, double invariance_tol) {
  json j;
  j["eps"] = s.eps;
  j["nu"] = vec_to_json(s.nu);
  if (s.y_center.size()) j["y_center"] = vec_to_json(s.y_center);
  j["internal"] = {{"sigma", vec_to_json(s.sigma)}, {"psi", vec_to_json(s.psi)}, {"rho", vec_to_json(s.rho)},
                   {"phi", vec_to_json(s.phi)},     {"Phi", vec_to_json(s.Phi)}, {"chi", vec_to_json(s.chi)}};
  j["floquet"] = to_json(s.floquet);
  j["floquet"]["matrix"] = mat_to_json(s.embedding.floquet);
  j["alpha_prime"] = vec_to_json(s.alpha_prime);
  j["embedding"] = {{"omega", vec_to_json(s.embedding.omega)},
                    {"A", series_to_json(s.embedding.A)},
                    {"B", series_to_json(s.embedding.B)},
                    {"C", series_to_json(s.embedding.C)}};
  const int dimB = s.embedding.B.dim();
  const int m = dimB - 2 * s.floquet.p();
  // Upper bounds of sup |x - xi|, sup |y - y_center| and sup |z| on the torus
  FourierSeries Bc = s.embedding.B;
  for (int i = 0; i < s.y_center.size() && i < m; ++i) Bc(Bc.zero_mode(), i) -= s.y_center[i];
  j["torus"] = {{"x_shift", coeff_l1(s.embedding.A, 0, s.embedding.A.dim())},
                {"y_offset", coeff_l1(Bc, 0, m)},
                {"z", coeff_l1(Bc, m, dimB)}};
  j["invariance_residual"] = checked(s.invariance_residual, invariance_tol);
  j["modifying_residual"] = checked(s.modifying_residual, invariance_tol);
  j["frame_residual"] = checked(s.frame_residual, invariance_tol);
  j["g_compat_residual"] = checked(s.g_compat_residual, 1e-9);
  j["fix_residual"] = checked(s.fix_residual, 1e-9);
  j["newton_history"] = s.newton_history;
  j["newton_iterations"] = s.newton_iterations;
  j["compensation_history"] = s.compensation_history;
  return j;
}

}  // namespace rkam
