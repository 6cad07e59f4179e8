#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "nilsynth/errors.hpp"
#include "nilsynth/skew_algebra.hpp"

namespace nilsynth {

inline constexpr double kNormalizedTolerance = 1e-10;
inline constexpr double kSpecFileSkewTolerance = 1e-9;

/// Structure constants L_1..L_k of a 2-step nilpotent metric of rank m and corank k.
class MetricSpec {
 public:
  MetricSpec() = default;

  explicit MetricSpec(std::vector<SkewMatrix> generators) : l_(std::move(generators)) {
    if (l_.empty() || l_.size() > 2) throw InputError("MetricSpec: corank must be 1 or 2");
    const int m = l_.front().dim();
    if (m < 3) throw InputError("MetricSpec: rank must be at least 3");
    for (const auto& g : l_) {
      if (g.dim() != m) throw InputError("MetricSpec: generators have different dimensions");
    }
    const double g11 = hs_inner(l_[0], l_[0]);
    if (g11 == 0.0) throw InputError("MetricSpec: L1 is zero");
    if (l_.size() == 2) {
      const double g22 = hs_inner(l_[1], l_[1]), g12 = hs_inner(l_[0], l_[1]);
      if (g22 == 0.0 || g11 * g22 - g12 * g12 <= 1e-12 * g11 * g22) {
        throw InputError("MetricSpec: generators are linearly dependent");
      }
    }
  }

  MetricSpec(const SkewMatrix& l1, const SkewMatrix& l2) : MetricSpec(std::vector<SkewMatrix>{l1, l2}) {}

  int rank() const { return l_.front().dim(); }
  int corank() const { return static_cast<int>(l_.size()); }
  int dimension() const { return rank() + corank(); }
  const std::vector<SkewMatrix>& generators() const { return l_; }
  const SkewMatrix& generator(int h) const { return l_.at(h); }

  /// Second generator, or the zero matrix when k = 1.
  SkewMatrix second_or_zero() const { return corank() == 2 ? l_[1] : SkewMatrix::zero(rank()); }

  bool normalized(double tol = kNormalizedTolerance) const {
    for (int a = 0; a < corank(); ++a)
      for (int b = 0; b < corank(); ++b) {
        const double target = (a == b) ? 1.0 : 0.0;
        if (std::abs(hs_inner(l_[a], l_[b]) - target) > tol) return false;
      }
    return true;
  }

 private:
  std::vector<SkewMatrix> l_;
};

/// Initial covector (u0, r). Arclength geodesics have |u0| = 1.
struct Covector {
  Eigen::VectorXd u0;
  Eigen::VectorXd r;
};

inline void check_covector(const MetricSpec& spec, const Covector& cov) {
  if (cov.u0.size() != spec.rank()) throw InputError("covector: u0 has the wrong length");
  if (cov.r.size() != spec.corank()) throw InputError("covector: r has the wrong length");
  if (!cov.u0.allFinite() || !cov.r.allFinite()) throw InputError("covector: non-finite entry");
}

/// Gram-Schmidt of the generators under hs_inner.
inline MetricSpec normalize(const MetricSpec& spec) {
  std::vector<SkewMatrix> out;
  for (const auto& g : spec.generators()) {
    SkewMatrix v = g;
    for (const auto& e : out) v = v - hs_inner(v, e) * e;
    const double n = hs_norm(v);
    if (n <= 1e-12 * std::max(1.0, hs_norm(g))) throw InputError("normalize: generators are linearly dependent");
    out.push_back((1.0 / n) * v);
  }
  return MetricSpec(std::move(out));
}

/// Frame in which r = (|r|, 0) and L_theta is in canonical block form.
struct ReducedFrame {
  double theta = 0.0;
  double r_mod = 0.0;
  SkewMatrix L_theta;
  SkewMatrix L_theta_tilde;
  BlockDiagForm block;
  /// diag(M, R_theta); maps (x, y) to reduced coordinates.
  Eigen::MatrixXd omega_map;

  /// R_theta = [[cos, sin], [-sin, cos]] for k = 2, [cos theta] for k = 1.
  Eigen::MatrixXd vertical_rotation() const {
    const int k = static_cast<int>(omega_map.rows()) - block.dim();
    return omega_map.bottomRightCorner(k, k);
  }
};

/// Rotated pair (L_theta, L_theta_tilde) as a spec; for k = 1 the result keeps corank 1.
inline MetricSpec rotate_spec(const MetricSpec& spec, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  if (spec.corank() == 1) return MetricSpec({c * spec.generator(0)});
  return MetricSpec(c * spec.generator(0) + s * spec.generator(1), -s * spec.generator(0) + c * spec.generator(1));
}

/// Orthogonal change of horizontal coordinates: L_h -> M L_h M^T.
inline MetricSpec conjugate_spec(const MetricSpec& spec, const Eigen::MatrixXd& m) {
  std::vector<SkewMatrix> out;
  for (const auto& g : spec.generators()) out.push_back(congruence(m, g));
  return MetricSpec(std::move(out));
}

inline ReducedFrame reduce_frame(const MetricSpec& spec, const Eigen::VectorXd& r) {
  if (r.size() != spec.corank()) throw InputError("reduce_frame: r has the wrong length");
  const double rn = r.norm();
  if (rn == 0.0) throw InputError("reduce_frame: r = 0 has no reduced frame (straight-line branch)");
  ReducedFrame f;
  f.r_mod = rn;
  const int m = spec.rank(), k = spec.corank();
  double c = 1.0, s = 0.0;
  if (k == 1) {
    f.theta = r(0) >= 0.0 ? 0.0 : std::numbers::pi;
    c = r(0) >= 0.0 ? 1.0 : -1.0;
    f.L_theta = c * spec.generator(0);
    f.L_theta_tilde = SkewMatrix::zero(m);
  } else {
    f.theta = std::atan2(r(1), r(0));
    c = r(0) / rn;
    s = r(1) / rn;
    f.L_theta = c * spec.generator(0) + s * spec.generator(1);
    f.L_theta_tilde = -s * spec.generator(0) + c * spec.generator(1);
  }
  f.block = block_diagonalize(f.L_theta);
  f.omega_map = Eigen::MatrixXd::Zero(m + k, m + k);
  f.omega_map.topLeftCorner(m, m) = f.block.conjugator;
  if (k == 1) {
    f.omega_map(m, m) = c;
  } else {
    f.omega_map(m, m) = c;
    f.omega_map(m, m + 1) = s;
    f.omega_map(m + 1, m) = -s;
    f.omega_map(m + 1, m + 1) = c;
  }
  return f;
}

// ---------------------------------------------------------------------------
// JSON serialization: {"m": int, "L": [matrix, ...]} with row-major matrices.

/// Matrices of a spec file without the rank/independence checks of MetricSpec.
inline std::vector<SkewMatrix> generators_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("spec: top level must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "m" && key != "L") throw InputError("spec: unknown field '" + key + "'");
  }
  if (!j.contains("m") || !j.contains("L")) throw InputError("spec: fields 'm' and 'L' are required");
  if (!j["m"].is_number_integer()) throw InputError("spec: 'm' must be an integer");
  const int m = j["m"].get<int>();
  if (m < 3 || m > 32) throw InputError("spec: 'm' must lie in [3, 32]");
  const auto& ls = j["L"];
  if (!ls.is_array() || ls.empty() || ls.size() > 2) throw InputError("spec: 'L' must hold 1 or 2 matrices");
  std::vector<SkewMatrix> gens;
  for (const auto& mat : ls) {
    if (!mat.is_array() || static_cast<int>(mat.size()) != m) throw InputError("spec: each matrix needs m rows");
    Eigen::MatrixXd e(m, m);
    for (int r = 0; r < m; ++r) {
      const auto& row = mat[r];
      if (!row.is_array() || static_cast<int>(row.size()) != m) throw InputError("spec: each row needs m entries");
      for (int c = 0; c < m; ++c) {
        if (!row[c].is_number()) throw InputError("spec: matrix entries must be numbers");
        e(r, c) = row[c].get<double>();
      }
    }
    gens.emplace_back(e, kSpecFileSkewTolerance);
  }
  return gens;
}

inline MetricSpec spec_from_json(const nlohmann::json& j) { return MetricSpec(generators_from_json(j)); }

inline nlohmann::json spec_to_json(const MetricSpec& spec) {
  nlohmann::json j;
  j["m"] = spec.rank();
  j["L"] = nlohmann::json::array();
  for (const auto& g : spec.generators()) {
    nlohmann::json mat = nlohmann::json::array();
    for (int r = 0; r < g.dim(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < g.dim(); ++c) row.push_back(g(r, c));
      mat.push_back(row);
    }
    j["L"].push_back(mat);
  }
  return j;
}

inline nlohmann::json read_spec_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("spec: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("spec: malformed JSON in '" + path + "': " + e.what());
  }
  return j;
}

inline MetricSpec load_spec(const std::string& path) { return spec_from_json(read_spec_json(path)); }

}  // namespace nilsynth
