#include <doctest.h>

#include <random>
#include <string>

#include "rkam/error.hpp"
#include "rkam/io.hpp"

using namespace rkam;

namespace {

double max_eval_gap(const ReversibleSystem& a, const ReversibleSystem& b, int samples = 20) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double gap = 0.0;
  for (int k = 0; k < samples; ++k) {
    Vec x(a.n), X(a.N()), nu(a.s);
    for (auto* v : {&x, &X, &nu})
      for (int i = 0; i < v->size(); ++i) (*v)[i] = U(rng);
    gap = std::max(gap, (a.eval(x, X, nu, 0.3) - b.eval(x, X, nu, 0.3)).cwiseAbs().maxCoeff());
  }
  return gap;
}

// Desk-type system written with the plain term schema only.
const char* kMinimal = R"({
  "dims": {"n": 1, "m": 1, "p": 1, "s": 3},
  "delta": -1,
  "H": [{"target": 0, "j": [0], "trig": "cos", "yz_exponents": [0, 0, 0], "nu_poly": [0, 1, 0, 0], "eps_power": 0}],
  "P": [{"target": 0, "j": [0], "trig": "cos", "yz_exponents": [0, 0, 0], "nu_poly": [0, 0, 1, 0], "eps_power": 0}],
  "Q": [{"target": 1, "j": [0], "trig": "cos", "yz_exponents": [0, 0, 0], "nu_poly": [0, 0, 0, 1], "eps_power": 0},
        {"target": 2, "j": [0], "trig": "cos", "yz_exponents": [0, 0, 0], "nu_poly": [0, 0, 0, -1], "eps_power": 0}],
  "perturbation": {
    "f": [{"target": 0, "j": [1], "trig": "cos", "yz_exponents": [0, 0, 0], "nu_poly": [0.5], "eps_power": 1}],
    "g": [{"target": 0, "j": [1], "trig": "cos", "yz_exponents": [0, 0, 0], "nu_poly": [0.2], "eps_power": 1}],
    "h": [{"target": 0, "j": [1], "trig": "sin", "yz_exponents": [0, 0, 0], "nu_poly": [0.1], "eps_power": 1}]
  }
})";

}  // namespace

TEST_CASE("system JSON round trip preserves the field") {
  for (const auto& name : builtin_system_names()) {
    CAPTURE(name);
    const ReversibleSystem s = builtin_system(name);
    const json j = system_to_json(s);
    const ReversibleSystem back = system_from_json(j);
    CHECK(max_eval_gap(s, back) == 0.0);
    CHECK(system_to_json(back) == j);
    CHECK(back.nu0 == s.nu0);
    CHECK(back.d1 == s.d1);
    CHECK(back.d2 == s.d2);
    CHECK(back.d3 == s.d3);
  }
}

TEST_CASE("bundled data files match the built-in families") {
  for (const auto& name : builtin_system_names()) {
    CAPTURE(name);
    const ReversibleSystem f = load_system_file(std::string(RKAM_DATA_DIR) + "/" + name + ".json");
    const ReversibleSystem b = builtin_system(name);
    CHECK(max_eval_gap(f, b) == 0.0);
    CHECK(f.nu0 == b.nu0);
  }
}

TEST_CASE("plain-schema definitions load with inferred blocks") {
  const ReversibleSystem s = system_from_json(json::parse(kMinimal));
  CHECK(s.n == 1);
  CHECK(s.N() == 3);
  CHECK(s.d2 == 1);
  CHECK(s.d1 == 0);
  CHECK(audit_system(s).ok());
  const Vec nu = (Vec(3) << 0.6, 0.0, 1.2).finished();
  const Mat Q = s.Q(Vec::Zero(1), nu);
  CHECK(Q(0, 1) == 1.2);
  CHECK(Q(1, 0) == -1.2);
  // x' = nu1 + eps f at x = 0
  CHECK(s.eval(Vec::Zero(1), Vec::Zero(3), nu, 0.1)[0] == doctest::Approx(0.6 + 0.05));
  CHECK(system_reversibility_residual(s) < 1e-14);
}

TEST_CASE("malformed definitions are configuration errors") {
  auto expect_config = [](json j) {
    try {
      system_from_json(j);
      FAIL("accepted a malformed definition");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Config);
    }
  };
  json j = json::parse(kMinimal);
  j["H"][0]["trig"] = "tan";
  expect_config(j);
  j = json::parse(kMinimal);
  j["H"][0]["yz_exponents"] = {0, 0};
  expect_config(j);
  j = json::parse(kMinimal);
  j["dims"]["n"] = 0;
  expect_config(j);
  j = json::parse(kMinimal);
  j["blocks"] = {1, 1, 0};
  expect_config(j);
  CHECK_THROWS_AS(load_system_file("/nonexistent/system.json"), Error);
}

TEST_CASE("a parity-breaking term fails validation as a hypothesis") {
  json j = json::parse(kMinimal);
  j["perturbation"]["h"][0]["trig"] = "cos";
  const ReversibleSystem s = system_from_json(j);
  const AuditReport rep = audit_system(s);
  REQUIRE_FALSE(rep.ok());
  CHECK(rep.violations.front().find("parity") != std::string::npos);
  CHECK(system_reversibility_residual(s) > 1e-3);
  try {
    validate_system(s);
    FAIL("accepted a non-reversible system");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Hypothesis);
  }
}

TEST_CASE("serializers") {
  const Mat m = (Mat(2, 2) << 1, 2, 3, 4).finished();
  CHECK(mat_to_json(m) == json::parse("[[1.0, 2.0], [3.0, 4.0]]"));
  const Vec v = (Vec(2) << 0.5, -1.0).finished();
  CHECK(vec_from_json(vec_to_json(v)) == v);
  const json c = checked(2e-13, 1e-12);
  CHECK(c["ok"] == true);
  CHECK(c["tol"] == 1e-12);
  CHECK(checked(2e-12, 1e-12)["ok"] == false);
  const TMatrixSpec t(0, 1, 0, Vec(), (Vec(1) << 0.7).finished());
  CHECK(to_json(t)["blocks"] == json::parse("[0, 1, 0]"));
}
