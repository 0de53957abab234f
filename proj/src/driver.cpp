#include "rkam/driver.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <set>
#include <sstream>
#include <thread>

#include "rkam/error.hpp"

namespace rkam {

namespace {

constexpr const char* kStage = "driver";

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Hypothesis: return "hypothesis";
    case ErrorKind::Solver: return "solver";
    case ErrorKind::Internal: return "internal";
  }
  return "internal";
}

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return 1;
    case ErrorKind::Hypothesis: return 2;
    default: return 3;
  }
}

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : std::nan(""); }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

double parse_number(const std::string& s) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Config, kStage, "cannot parse number '" + s + "'");
  }
}

std::vector<int> fixed_indices(const RunConfig& cfg, const ReversibleSystem& sys) {
  std::vector<int> fixed;
  if (!cfg.fix_indices.empty()) {
    for (int k : cfg.fix_indices) {
      require(k >= 1 && k <= sys.d1 + sys.d3, kStage, "fix index " + std::to_string(k) + " outside 1..d1+d3");
      fixed.push_back(k - 1);
    }
    require(cfg.kappa < 0 || cfg.kappa == static_cast<int>(fixed.size()), kStage,
            "kappa must equal the number of fix indices");
  } else if (cfg.kappa > 0) {
    require(cfg.kappa <= sys.d1 + sys.d3, kStage, "kappa exceeds d1 + d3");
    for (int k = 0; k < cfg.kappa; ++k) fixed.push_back(k);
  }
  return fixed;
}

KamFamily prepare(const ReversibleSystem& sys, bool context2, const std::vector<int>& fixed, const SolverConfig& s) {
  return context2 ? prepare_context2(sys, fixed, s) : prepare_context1(sys, fixed, s);
}

json family_hypotheses(const KamFamily& fam) {
  const auto& sys = *fam.sys;
  const KernelBasis kb = kernel_basis_minus(fam.t0, sys.involution(), 0);
  return {{"dioph", to_json(fam.cert)},
          {"rank", to_json(fam.reparam.report())},
          {"floquet0", to_json(fam.t0)},
          {"omega", vec_to_json(fam.omega)},
          {"kernel_dimension", kb.generators.size()},
          {"surface_dimension", fam.reparam.chi_dim()},
          {"fixed_alpha", fam.fixed}};
}

double invariance_tol(double eps) { return eps == 0.0 ? 1e-12 : 1e-9; }

struct SolvedPoint {
  KamSolution sol;
  bool ok = false;
  ErrorKind kind = ErrorKind::Internal;
  std::string stage, message;
};

SolvedPoint solve_point(const KamFamily& fam, double eps, const Vec& chi) {
  SolvedPoint p;
  try {
    require(eps >= 0.0, kStage, "eps must be non-negative");
    const CompensationResult c = compensate_parameters(fam, chi, std::sqrt(eps));
    p.sol = solution_from_compensation(fam, c, eps);
    p.ok = true;
  } catch (const Error& e) {
    p.kind = e.kind();
    p.stage = e.stage();
    p.message = e.what();
  } catch (const std::exception& e) {
    p.stage = kStage;
    p.message = e.what();
  }
  return p;
}

json fits_for(const std::vector<KamSolution>& sols) {
  std::vector<double> eps;
  std::vector<double> sig, psi, rho, phi;
  for (const auto& s : sols) {
    if (s.eps <= 0.0) continue;
    eps.push_back(s.eps);
    sig.push_back(inf_norm(s.sigma));
    psi.push_back(inf_norm(s.psi));
    rho.push_back(inf_norm(s.rho));
    phi.push_back(inf_norm(s.phi));
  }
  json f = json::object();
  if (eps.size() < 2) return f;
  f["sigma"] = scaling_fit(eps, sig);
  f["psi"] = scaling_fit(eps, psi);
  f["rho"] = scaling_fit(eps, rho);
  f["phi"] = scaling_fit(eps, phi);
  return f;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

json scaling_fit(const std::vector<double>& eps, const std::vector<double>& values) {
  json pair = json::array();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (size_t i = 0; i < eps.size(); ++i) {
    const double v = values[i];
    if (!(v > 0.0) || !(eps[i] > 0.0)) continue;
    const double x = std::log(eps[i]), y = std::log(v);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  for (size_t i = 0; i + 1 < eps.size(); ++i) {
    const double a = values[i], b = values[i + 1];
    if (a > 0.0 && b > 0.0)
      pair.push_back(std::log(b / a) / std::log(eps[i + 1] / eps[i]));
    else
      pair.push_back(nullptr);
  }
  json out = {{"values", values}, {"pair_slopes", pair}};
  for (auto& v : out["values"])
    if (v.is_number() && std::isnan(v.get<double>())) v = nullptr;
  if (count >= 2 && count * sxx - sx * sx > 0.0)
    out["lsq_slope"] = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  else
    out["lsq_slope"] = nullptr;
  return out;
}

RunConfig run_config_from_json(const json& j) {
  require(j.is_object(), kStage, "run configuration must be a JSON object");
  static const std::set<std::string> known = {
      "system", "system_json", "mode", "eps", "chi_grid", "kappa", "fix_indices", "jmax", "tol",
      "seed", "tau", "max_newton_iters", "verify_T", "verify_dt", "threads", "rank_tol", "fd_step"};
  for (auto it = j.begin(); it != j.end(); ++it)
    require(known.count(it.key()) > 0, kStage, "unknown configuration key '" + it.key() + "'");
  RunConfig c;
  try {
    if (j.contains("system")) c.system = j["system"].get<std::string>();
    if (j.contains("system_json")) c.system_json = j["system_json"];
    if (j.contains("mode")) c.mode = j["mode"].get<std::string>();
    if (j.contains("eps")) {
      if (j["eps"].is_array())
        c.eps = j["eps"].get<std::vector<double>>();
      else
        c.eps = {j["eps"].get<double>()};
    }
    if (j.contains("chi_grid")) c.chi_grid = j["chi_grid"];
    if (j.contains("kappa")) c.kappa = j["kappa"].get<int>();
    if (j.contains("fix_indices")) c.fix_indices = j["fix_indices"].get<std::vector<int>>();
    if (j.contains("jmax")) c.solver.jmax = j["jmax"].get<int>();
    if (j.contains("tol")) c.solver.newton_tol = j["tol"].get<double>();
    if (j.contains("tau")) c.solver.tau = j["tau"].get<double>();
    if (j.contains("rank_tol")) c.solver.rank_tol = j["rank_tol"].get<double>();
    if (j.contains("fd_step")) c.solver.fd_step = j["fd_step"].get<double>();
    if (j.contains("max_newton_iters")) c.solver.max_newton_iters = j["max_newton_iters"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("verify_T")) c.verify_T = j["verify_T"].get<double>();
    if (j.contains("verify_dt")) c.verify_dt = j["verify_dt"].get<double>();
    if (j.contains("threads")) c.threads = j["threads"].get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, kStage, std::string("bad configuration value: ") + e.what());
  }
  static const std::set<std::string> modes = {"context1", "context2", "check-dioph", "normal-form", "verify", "scan"};
  require(modes.count(c.mode) > 0, kStage, "unknown mode '" + c.mode + "'");
  require(c.kappa >= -1, kStage, "kappa must be non-negative");
  require(c.verify_T > 0.0 && c.verify_dt > 0.0, kStage, "verification T and dt must be positive");
  c.solver.validate();
  return c;
}

ReversibleSystem resolve_system(const RunConfig& cfg) {
  if (!cfg.system_json.is_null()) return system_from_json(cfg.system_json);
  require(!cfg.system.empty(), kStage, "no system given");
  if (cfg.system.rfind("builtin:", 0) == 0) return builtin_system(cfg.system.substr(8));
  if (cfg.system.rfind("example:", 0) == 0) {
    const auto seed = static_cast<std::uint64_t>(parse_number(cfg.system.substr(8)));
    return build_context2_example(seed, ExampleSizes{}, 0.1);
  }
  return load_system_file(cfg.system);
}

std::vector<Vec> parse_chi_grid(const json& spec, int dim) {
  std::vector<Vec> pts;
  if (spec.is_null()) return pts;
  if (spec.is_string()) {
    const std::string s = spec.get<std::string>();
    if (s.find(':') != std::string::npos) {
      const auto parts = split(s, ':');
      require(parts.size() == 3, kStage, "chi grid range must be 'a:b:k'");
      const double a = parse_number(parts[0]), b = parse_number(parts[1]);
      const int k = static_cast<int>(parse_number(parts[2]));
      require(k >= 1, kStage, "chi grid needs at least one point per axis");
      require(dim >= 1, kStage, "the solution surface is a point; no chi grid applies");
      std::vector<double> axis(k);
      for (int i = 0; i < k; ++i) axis[i] = k == 1 ? a : a + (b - a) * i / (k - 1);
      long total = 1;
      for (int d = 0; d < dim; ++d) total *= k;
      require(total <= 100000, kStage, "chi grid too large");
      for (long idx = 0; idx < total; ++idx) {
        Vec p(dim);
        long r = idx;
        for (int d = dim - 1; d >= 0; --d) {
          p[d] = axis[r % k];
          r /= k;
        }
        pts.push_back(p);
      }
      return pts;
    }
    for (const auto& point : split(s, ';')) {
      const auto comps = split(point, ',');
      Vec p(comps.size());
      for (size_t i = 0; i < comps.size(); ++i) p[static_cast<Eigen::Index>(i)] = parse_number(comps[i]);
      pts.push_back(p);
    }
  } else if (spec.is_array()) {
    for (const auto& p : spec) {
      if (p.is_number())
        pts.push_back(Vec::Constant(1, p.get<double>()));
      else
        pts.push_back(vec_from_json(p));
    }
  } else {
    throw Error(ErrorKind::Config, kStage, "chi grid must be a string or an array");
  }
  for (const auto& p : pts)
    require(p.size() == dim, kStage,
            "chi point has " + std::to_string(p.size()) + " entries, surface dimension is " + std::to_string(dim));
  return pts;
}

RunOutcome run(const RunConfig& cfg) {
  RunOutcome out;
  json& rep = out.report;
  rep["mode"] = cfg.mode;
  rep["version"] = kVersion;
  rep["report_version"] = kReportVersion;
  rep["config"] = {{"system", cfg.system_json.is_null() ? json(cfg.system) : json("inline")},
                   {"eps", cfg.eps},
                   {"kappa", cfg.kappa},
                   {"fix_indices", cfg.fix_indices},
                   {"jmax", cfg.solver.jmax},
                   {"tol", cfg.solver.newton_tol},
                   {"seed", cfg.seed}};
  rep["hypotheses"] = json::object();
  rep["solutions"] = json::array();
  rep["diagnostics"] = json::object();

  try {
    const ReversibleSystem sys = resolve_system(cfg);
    rep["system"] = {{"name", sys.name},
                     {"dims", {{"n", sys.n}, {"m", sys.m}, {"p", sys.p}, {"s", sys.s}}},
                     {"delta", sys.delta},
                     {"blocks", {sys.d1, sys.d2, sys.d3}}};
    const int jcheck = sys.n * cfg.solver.jmax;

    if (cfg.mode == "check-dioph") {
      const Vec y = sys.delta == 1 ? sys.y0 : Vec::Zero(sys.m);
      const Vec omega = sys.H(y, sys.nu0);
      const TMatrixSpec t = sys.floquet_data(y, sys.nu0);
      rep["hypotheses"]["omega"] = vec_to_json(omega);
      rep["hypotheses"]["beta"] = vec_to_json(t.beta);
      rep["hypotheses"]["dioph"] = to_json(diophantine_check(omega, t.beta, cfg.solver.tau_for(sys.n), jcheck));
    } else if (cfg.mode == "normal-form") {
      const AuditReport audit = audit_system(sys);
      const double rev = system_reversibility_residual(sys, 200, cfg.seed);
      const ContextClassification cc = classify_context(sys.involution(), sys.N());
      rep["hypotheses"]["audit"] = {{"ok", audit.ok()}, {"violations", audit.violations}};
      rep["hypotheses"]["reversibility_residual"] = checked(rev, 1e-10);
      rep["hypotheses"]["context"] = {{"context", to_string(cc.context)},
                                      {"fix_dimension", cc.fix_dimension},
                                      {"codimension", cc.codimension}};
      if (!audit.ok()) validate_system(sys);
      if (sys.p > 0) {
        const Vec y = sys.delta == 1 ? sys.y0 : Vec::Zero(sys.m);
        const Mat Q = sys.Q(y, sys.nu0);
        const SpectrumClassification cl = classify_anticommuting_pair(k_normal(sys.p), Q);
        const TMatrixSpec t = sys.floquet_data(y, sys.nu0);
        const KernelBasis kb = kernel_basis_minus(t, sys.involution(), 0);
        const int formula = sys.n + (sys.delta == -1 ? sys.m : 0) + t.d1 + t.d2 + 2 * t.d3;
        rep["diagnostics"]["normal_form"] = {{"classified", to_json(cl.form)},
                                             {"basis", mat_to_json(cl.basis)},
                                             {"declared", to_json(t)},
                                             {"kernel_dimension", kb.generators.size()},
                                             {"kernel_labels", kb.labels},
                                             {"kernel_formula", formula}};
      }
      if (rev > 1e-10) throw Error(ErrorKind::Hypothesis, "systems.reversibility", "sampled residual exceeds 1e-10");
    } else {
      const bool ctx2 = cfg.mode == "context2" || (cfg.mode != "context1" && sys.delta == -1);
      const std::vector<int> fixed = fixed_indices(cfg, sys);
      const KamFamily fam = prepare(sys, ctx2, fixed, cfg.solver);
      rep["hypotheses"] = family_hypotheses(fam);
      std::vector<Vec> chis = parse_chi_grid(cfg.chi_grid, fam.reparam.chi_dim());
      if (chis.empty()) chis.push_back(Vec::Zero(fam.reparam.chi_dim()));
      std::vector<double> eps = cfg.eps;
      if (eps.empty()) eps = cfg.mode == "scan" ? std::vector<double>{1e-5, 4e-5, 1.6e-4, 6.4e-4}
                                                : std::vector<double>{cfg.mode == "verify" ? 1e-3 : 0.0};

      // Work items in input order: (eps, chi) pairs; scan uses the first chi.
      std::vector<std::pair<double, Vec>> items;
      for (double e : eps) {
        if (cfg.mode == "scan") {
          items.emplace_back(e, chis.front());
        } else {
          for (const Vec& c : chis) items.emplace_back(e, c);
        }
      }
      std::vector<SolvedPoint> results(items.size());
      const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
      const unsigned workers =
          cfg.mode == "scan" ? std::min<unsigned>(cfg.threads > 0 ? cfg.threads : hw, items.size()) : 1u;
      std::atomic<size_t> next{0};
      auto work = [&]() {
        for (size_t i; (i = next.fetch_add(1)) < items.size();)
          results[i] = solve_point(fam, items[i].first, items[i].second);
      };
      if (workers <= 1) {
        work();
      } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
      }

      std::vector<KamSolution> sols;
      for (size_t i = 0; i < results.size(); ++i) {
        const SolvedPoint& p = results[i];
        if (!p.ok) {
          rep["diagnostics"]["failed_point"] = {{"eps", items[i].first}, {"chi", vec_to_json(items[i].second)}};
          throw Error(p.kind, p.stage, p.message);
        }
        json sj = to_json(p.sol, invariance_tol(p.sol.eps));
        if (cfg.mode == "verify") {
          VerifyOptions vo;
          vo.T = cfg.verify_T;
          vo.dt = cfg.verify_dt;
          vo.distance_tol = 10.0 * cfg.solver.newton_tol * vo.T;
          const VerificationReport vr = verify_solution(sys, p.sol.nu, p.sol.eps, p.sol.embedding, vo);
          sj["verification"] = to_json(vr, vo);
        }
        rep["solutions"].push_back(sj);
        sols.push_back(p.sol);
      }
      rep["diagnostics"]["scaling_fits"] = fits_for(sols);
      json hist = json::array();
      for (const auto& s : sols) hist.push_back(s.newton_history);
      rep["diagnostics"]["newton_history"] = hist;

      if (cfg.mode == "scan") {
        std::string csv = "eps,sigma,psi,rho,phi,residual\n";
        for (const auto& s : sols)
          csv += fmt(s.eps) + "," + fmt(inf_norm(s.sigma)) + "," + fmt(inf_norm(s.psi)) + "," +
                 fmt(inf_norm(s.rho)) + "," + fmt(inf_norm(s.phi)) + "," + fmt(s.invariance_residual) + "\n";
        out.csv = csv;
      }
    }
    out.exit_code = 0;
  } catch (const ResonanceError& e) {
    out.exit_code = 2;
    rep["error"] = {{"kind", "hypothesis"}, {"stage", e.stage()}, {"message", e.what()},
                    {"resonant_j", e.j()}, {"resonant_J", e.J()}};
  } catch (const RankError& e) {
    out.exit_code = 2;
    rep["hypotheses"]["rank"] = to_json(e.report());
    rep["error"] = {{"kind", "hypothesis"}, {"stage", e.stage()}, {"message", e.what()},
                    {"deficient_direction", vec_to_json(e.report().deficient_direction)},
                    {"deficient_labels", e.report().labels}};
  } catch (const Error& e) {
    out.exit_code = exit_code_for(e.kind());
    rep["error"] = {{"kind", kind_name(e.kind())}, {"stage", e.stage()}, {"message", e.what()}};
  } catch (const std::exception& e) {
    out.exit_code = 3;
    rep["error"] = {{"kind", "internal"}, {"stage", kStage}, {"message", e.what()}};
  }
  rep["exit_code"] = out.exit_code;
  return out;
}

}  // namespace rkam
