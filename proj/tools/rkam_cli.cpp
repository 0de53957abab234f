// Command-line front end. Uses the C interface only.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rkam/rkam.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::vector<double> parse_eps_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad number '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<int> parse_index_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const int v = std::stoi(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad index '" + item + "'");
    out.push_back(v);
  }
  return out;
}

bool has_prefix(const std::string& s, const char* p) { return s.rfind(p, 0) == 0; }

// A file holding an object with a "system" or "system_json" key is a run
// configuration; anything else is taken as a system definition.
json base_config(const std::string& config) {
  if (has_prefix(config, "builtin:") || has_prefix(config, "example:")) return json{{"system", config}};
  std::ifstream in(config);
  if (!in) throw std::runtime_error("cannot open '" + config + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("cannot parse '" + config + "': " + e.what());
  }
  if (j.is_object() && (j.contains("system") || j.contains("system_json"))) {
    if (j.contains("system") && j["system"].is_string()) {
      const std::string sys = j["system"];
      if (!has_prefix(sys, "builtin:") && !has_prefix(sys, "example:") && fs::path(sys).is_relative())
        j["system"] = (fs::path(config).parent_path() / sys).lexically_normal().string();
    }
    return j;
  }
  return json{{"system_json", j}};
}

int write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "rkam: cannot write '" << path << "'\n";
    return 1;
  }
  out << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reducible invariant tori of reversible vector fields"};
  app.set_version_flag("--version", std::string(rkam_version()));

  std::string config, mode, eps, chi_grid, fix_indices, out;
  int kappa = -1, jmax = -1;
  double tol = -1.0;
  long long seed = -1;
  app.add_option("--config", config, "system definition JSON, run configuration JSON, builtin:NAME or example:SEED")
      ->required();
  app.add_option("--mode", mode, "context1, context2, check-dioph, normal-form, verify or scan");
  app.add_option("--eps", eps, "comma separated perturbation sizes");
  app.add_option("--chi-grid", chi_grid, "per-dimension a:b:k ranges separated by ';', or explicit points");
  app.add_option("--kappa", kappa, "number of fixed normal-form entries");
  app.add_option("--fix-indices", fix_indices, "comma separated 1-based indices of the fixed entries");
  app.add_option("--jmax", jmax, "Fourier truncation order");
  app.add_option("--tol", tol, "Newton tolerance");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--out", out, "report path (stdout when absent); scan tables go next to it as .csv");
  CLI11_PARSE(app, argc, argv);

  json cfg;
  try {
    cfg = base_config(config);
    if (!mode.empty()) cfg["mode"] = mode;
    if (!eps.empty()) cfg["eps"] = parse_eps_list(eps);
    if (!chi_grid.empty()) cfg["chi_grid"] = chi_grid;
    if (kappa >= 0) cfg["kappa"] = kappa;
    if (!fix_indices.empty()) cfg["fix_indices"] = parse_index_list(fix_indices);
    if (jmax >= 0) cfg["jmax"] = jmax;
    if (tol > 0.0) cfg["tol"] = tol;
    if (seed >= 0) cfg["seed"] = seed;
  } catch (const std::exception& e) {
    std::cerr << "rkam: config: " << e.what() << "\n";
    return 1;
  }

  char* report = nullptr;
  const int code = static_cast<int>(rkam_run(cfg.dump().c_str(), &report));
  json rep = json::parse(report);
  rkam_string_free(report);

  std::string csv;
  if (rep.contains("diagnostics") && rep["diagnostics"].contains("scan_csv")) {
    csv = rep["diagnostics"]["scan_csv"].get<std::string>();
    rep["diagnostics"].erase("scan_csv");
  }
  const std::string text = rep.dump(2) + "\n";

  if (out.empty()) {
    std::cout << text;
    if (!csv.empty()) std::cout << csv;
  } else {
    if (write_text(out, text) != 0) return 1;
    if (!csv.empty() && write_text(fs::path(out).replace_extension(".csv").string(), csv) != 0) return 1;
  }
  if (code != 0) {
    std::cerr << "rkam: " << rkam_last_error() << "\n";
  }
  return code;
}
