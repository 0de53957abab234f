#pragma once

// JSON reading and writing of system definitions and solver results.

#include <string>

#include <nlohmann/json.hpp>

#include "rkam/kam.hpp"
#include "rkam/linalg_forms.hpp"
#include "rkam/small_divisors.hpp"
#include "rkam/systems.hpp"

namespace rkam {

using json = nlohmann::json;

/// System definition:
///   { "name", "dims": {n, m, p, s}, "delta", "blocks": [d1, d2, d3], "nu0", "y0",
///     "H": [...], "P": [...], "Q": [...],
///     "sharp": {"f": [...], "g": [...], "h": [...]},
///     "perturbation": {"f": [...], "g": [...], "h": [...]} }
/// with terms { "target", "j", "trig", "yz_exponents", "nu_poly", "eps_power" }.
/// Targets are local to the block (x, y or z index); Q targets are
/// row * 2p + col (or explicit "row"/"col") and their yz_exponents carry the
/// y-dependence of the entry only. nu_poly is either [c0, c1, ..., cs]
/// (affine) or a list of {"coeff", "powers"}.
ReversibleSystem system_from_json(const json& j);
json system_to_json(const ReversibleSystem& sys);
ReversibleSystem load_system_file(const std::string& path);

json vec_to_json(const Vec& v);
Vec vec_from_json(const json& j);
json mat_to_json(const Mat& m);  // row-major nested arrays
json series_to_json(const FourierSeries& s);

json to_json(const DiophantineCertificate& c);
json to_json(const TMatrixSpec& t);
json to_json(const RankReport& r);
json to_json(const ModifyingTerms& m);
json to_json(const VerificationReport& r, const VerifyOptions& opt);
/// Checked quantities are written as {"value", "tol", "ok"}.
json to_json(const KamSolution& s, double invariance_tol);

/// Value with the tolerance it was checked against.
json checked(double value, double tol);

}  // namespace rkam
