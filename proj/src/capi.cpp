#include "rkam/rkam.h"

#include <cstring>
#include <string>

#include "rkam/driver.hpp"
#include "rkam/error.hpp"
#include "rkam/io.hpp"

struct rkam_system {
  rkam::ReversibleSystem sys;
};

namespace {

thread_local std::string g_last_error;

rkam_status status_of(rkam::ErrorKind k) {
  switch (k) {
    case rkam::ErrorKind::Config: return RKAM_ERR_CONFIG;
    case rkam::ErrorKind::Hypothesis: return RKAM_ERR_HYPOTHESIS;
    case rkam::ErrorKind::Solver: return RKAM_ERR_SOLVER;
    case rkam::ErrorKind::Internal: return RKAM_ERR_INTERNAL;
  }
  return RKAM_ERR_INTERNAL;
}

template <class F>
rkam_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return RKAM_OK;
  } catch (const rkam::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return RKAM_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* p = new char[s.size() + 1];
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

rkam_status null_arg(const char* what) {
  g_last_error = std::string("null argument: ") + what;
  return RKAM_ERR_CONFIG;
}

}  // namespace

extern "C" {

rkam_status rkam_system_load_file(const char* path, rkam_system** out) {
  if (!path || !out) return null_arg("path/out");
  return guarded([&] { *out = new rkam_system{rkam::load_system_file(path)}; });
}

rkam_status rkam_system_load_json(const char* text, rkam_system** out) {
  if (!text || !out) return null_arg("json/out");
  return guarded([&] {
    rkam::json j;
    try {
      j = rkam::json::parse(text);
    } catch (const rkam::json::exception& e) {
      throw rkam::Error(rkam::ErrorKind::Config, "io", std::string("cannot parse system JSON: ") + e.what());
    }
    *out = new rkam_system{rkam::system_from_json(j)};
  });
}

rkam_status rkam_system_builtin(const char* name, rkam_system** out) {
  if (!name || !out) return null_arg("name/out");
  return guarded([&] { *out = new rkam_system{rkam::builtin_system(name)}; });
}

void rkam_system_free(rkam_system* sys) { delete sys; }

rkam_status rkam_system_dims(const rkam_system* sys, int* n, int* m, int* p, int* s) {
  if (!sys) return null_arg("sys");
  if (n) *n = sys->sys.n;
  if (m) *m = sys->sys.m;
  if (p) *p = sys->sys.p;
  if (s) *s = sys->sys.s;
  return RKAM_OK;
}

rkam_status rkam_system_to_json(const rkam_system* sys, char** json_out) {
  if (!sys || !json_out) return null_arg("sys/json_out");
  return guarded([&] { *json_out = dup_string(rkam::system_to_json(sys->sys).dump(2)); });
}

rkam_status rkam_system_reversibility_residual(const rkam_system* sys, int samples, uint64_t seed, double* out) {
  if (!sys || !out) return null_arg("sys/out");
  return guarded([&] {
    rkam::require(samples > 0, "capi", "samples must be positive");
    *out = rkam::system_reversibility_residual(sys->sys, samples, seed);
  });
}

rkam_status rkam_diophantine_check(const double* omega, int n, const double* beta, int d, double tau,
                                   int jmax_checked, double* gamma, int* argmin_j, int* argmin_J) {
  if (!omega || n < 1 || (d > 0 && !beta)) return null_arg("omega/beta");
  auto fill = [&](const std::vector<int>& j, const std::vector<int>& J) {
    if (argmin_j)
      for (int i = 0; i < n && i < static_cast<int>(j.size()); ++i) argmin_j[i] = j[i];
    if (argmin_J)
      for (int i = 0; i < d && i < static_cast<int>(J.size()); ++i) argmin_J[i] = J[i];
  };
  try {
    g_last_error.clear();
    const rkam::Vec w = Eigen::Map<const rkam::Vec>(omega, n);
    const rkam::Vec b = d > 0 ? rkam::Vec(Eigen::Map<const rkam::Vec>(beta, d)) : rkam::Vec();
    const rkam::DiophantineCertificate c = rkam::diophantine_check(w, b, tau, jmax_checked);
    if (gamma) *gamma = c.gamma;
    fill(c.argmin_j, c.argmin_J);
    return RKAM_OK;
  } catch (const rkam::ResonanceError& e) {
    g_last_error = e.what();
    if (gamma) *gamma = 0.0;
    fill(e.j(), e.J());
    return RKAM_ERR_HYPOTHESIS;
  } catch (const rkam::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return RKAM_ERR_INTERNAL;
  }
}

rkam_status rkam_run(const char* config_json, char** report_json) {
  if (!config_json || !report_json) return null_arg("config/report");
  rkam::RunOutcome outcome;
  try {
    g_last_error.clear();
    rkam::json cj;
    try {
      cj = rkam::json::parse(config_json);
    } catch (const rkam::json::exception& e) {
      throw rkam::Error(rkam::ErrorKind::Config, "driver", std::string("cannot parse configuration: ") + e.what());
    }
    outcome = rkam::run(rkam::run_config_from_json(cj));
  } catch (const rkam::Error& e) {
    outcome.exit_code = static_cast<int>(e.kind()) > 3 ? 3 : static_cast<int>(e.kind());
    outcome.report = {{"version", rkam::kVersion},
                      {"report_version", rkam::kReportVersion},
                      {"exit_code", outcome.exit_code},
                      {"error", {{"stage", e.stage()}, {"message", e.what()}}}};
  } catch (const std::exception& e) {
    outcome.exit_code = 3;
    outcome.report = {{"exit_code", 3}, {"error", {{"stage", "capi"}, {"message", e.what()}}}};
  }
  if (!outcome.csv.empty()) outcome.report["diagnostics"]["scan_csv"] = outcome.csv;
  if (outcome.exit_code != 0 && outcome.report.contains("error"))
    g_last_error = outcome.report["error"].value("message", std::string());
  *report_json = dup_string(outcome.report.dump(2) + "\n");
  return static_cast<rkam_status>(outcome.exit_code);
}

void rkam_string_free(char* s) { delete[] s; }

const char* rkam_last_error(void) { return g_last_error.c_str(); }

const char* rkam_version(void) { return rkam::kVersion; }

}  // extern "C"
