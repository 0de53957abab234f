#include <doctest.h>

#include <cmath>

#include "rkam/driver.hpp"
#include "rkam/error.hpp"

using namespace rkam;

namespace {

RunConfig config(const std::string& system, const std::string& mode) {
  RunConfig c;
  c.system = system;
  c.mode = mode;
  return c;
}

}  // namespace

TEST_CASE("run configuration parsing and validation") {
  const RunConfig c = run_config_from_json(json::parse(
      R"({"system": "builtin:desk-context2", "mode": "scan", "eps": [1e-4, 2e-4], "kappa": 0, "jmax": 10, "tol": 1e-10})"));
  CHECK(c.mode == "scan");
  CHECK(c.eps.size() == 2);
  CHECK(c.solver.jmax == 10);
  CHECK(c.solver.newton_tol == 1e-10);
  CHECK(run_config_from_json(json::parse(R"({"system": "x", "eps": 0.5})")).eps == std::vector<double>{0.5});

  for (const char* bad : {R"({"mode": "sideways"})", R"({"bogus": 1})", R"({"jmax": 0})", R"({"tol": -1})",
                          R"({"kappa": -3})", R"({"eps": "many"})"}) {
    CAPTURE(bad);
    try {
      run_config_from_json(json::parse(bad));
      FAIL("accepted a bad configuration");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Config);
    }
  }
}

TEST_CASE("chi grids") {
  CHECK(parse_chi_grid(json(), 2).empty());
  const auto g = parse_chi_grid(json("0:1:3"), 2);
  REQUIRE(g.size() == 9);
  CHECK(g[0] == Vec::Zero(2));
  CHECK(g[1] == (Vec(2) << 0.0, 0.5).finished());
  CHECK(g[8] == (Vec(2) << 1.0, 1.0).finished());
  const auto e = parse_chi_grid(json("0.1,0.2;0.3,0.4"), 2);
  REQUIRE(e.size() == 2);
  CHECK(e[1][1] == 0.4);
  const auto a = parse_chi_grid(json::parse("[[0.5], [0.25]]"), 1);
  REQUIRE(a.size() == 2);
  CHECK(a[1][0] == 0.25);
  CHECK_THROWS_AS(parse_chi_grid(json("0:1"), 1), Error);
  CHECK_THROWS_AS(parse_chi_grid(json("0.1,0.2"), 1), Error);
}

TEST_CASE("scaling fits recover power laws") {
  const std::vector<double> eps{1e-5, 4e-5, 1.6e-4};
  std::vector<double> v;
  for (double e : eps) v.push_back(3.0 * std::sqrt(e));
  const json f = scaling_fit(eps, v);
  CHECK(f["lsq_slope"].get<double>() == doctest::Approx(0.5).epsilon(1e-12));
  for (const auto& s : f["pair_slopes"]) CHECK(s.get<double>() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(scaling_fit({1e-5, 1e-4}, {0.0, 0.0})["lsq_slope"].is_null());
}

TEST_CASE("system resolution") {
  CHECK(resolve_system(config("builtin:resonant", "check-dioph")).name == "resonant");
  CHECK(resolve_system(config("example:4", "normal-form")).delta == -1);
  RunConfig inline_cfg = config("", "normal-form");
  inline_cfg.system_json = system_to_json(builtin_system("desk-context1"));
  CHECK(resolve_system(inline_cfg).delta == 1);
  CHECK_THROWS_AS(resolve_system(config("", "normal-form")), Error);
}

TEST_CASE("exit codes follow the failure class") {
  CHECK(run(config("builtin:desk-context2", "check-dioph")).exit_code == 0);
  const RunOutcome res = run(config("builtin:resonant", "check-dioph"));
  CHECK(res.exit_code == 2);
  CHECK(res.report["error"]["resonant_j"] == json::parse("[1, -2]"));
  CHECK(!res.report["error"]["stage"].get<std::string>().empty());

  const RunOutcome rank = run(config("builtin:rank-deficient", "context2"));
  CHECK(rank.exit_code == 2);
  CHECK(rank.report["error"].contains("deficient_direction"));

  CHECK(run(config("/no/such/file.json", "normal-form")).exit_code == 1);
  // context 1 requested on a delta = -1 family
  CHECK(run(config("builtin:desk-context2", "context1")).exit_code == 2);

  RunConfig starved = config("builtin:desk-context2", "context2");
  starved.eps = {1e-3};
  starved.solver.max_newton_iters = 1;
  starved.solver.max_compensation_iters = 1;
  const RunOutcome s = run(starved);
  CHECK(s.exit_code == 3);
  CHECK(s.report["error"].contains("stage"));
}

TEST_CASE("eps = 0 reports the unperturbed torus at the base point") {
  RunConfig c = config("builtin:desk-context2", "context2");
  c.eps = {0.0};
  const RunOutcome out = run(c);
  REQUIRE(out.exit_code == 0);
  const json& sol = out.report["solutions"][0];
  CHECK(sol["nu"] == vec_to_json(builtin_system("desk-context2").nu0));
  CHECK(sol["torus"]["y_offset"] == 0.0);
  CHECK(sol["torus"]["z"] == 0.0);
  CHECK(sol["invariance_residual"]["ok"] == true);
  CHECK(out.report["version"] == kVersion);
  CHECK(out.report["hypotheses"].contains("dioph"));
  CHECK(out.report["hypotheses"].contains("rank"));
}

TEST_CASE("reports are deterministic and scans keep input order") {
  RunConfig c = config("builtin:desk-context2", "scan");
  c.eps = {6.4e-4, 1e-5, 1.6e-4};
  c.threads = 3;
  const RunOutcome a = run(c);
  const RunOutcome b = run(c);
  REQUIRE(a.exit_code == 0);
  CHECK(a.report.dump() == b.report.dump());
  CHECK(a.csv == b.csv);
  const auto& sols = a.report["solutions"];
  REQUIRE(sols.size() == 3);
  for (size_t i = 0; i < 3; ++i) CHECK(sols[i]["eps"].get<double>() == c.eps[i]);
  CHECK(a.csv.rfind("eps,sigma,psi,rho,phi,residual\n", 0) == 0);
}
