#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "nilsynth/errors.hpp"
#include "nilsynth/skew_algebra.hpp"

namespace nilsynth {

namespace quat {

inline SkewMatrix from_rows(std::array<double, 16> v) {
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = v[4 * r + c];
  return SkewMatrix(m);
}

// Pure quaternions i, j, k (left multiplication) and pure skew quaternions.
inline const SkewMatrix& i() {
  static const SkewMatrix m = from_rows({0, -1, 0, 0, 1, 0, 0, 0, 0, 0, 0, -1, 0, 0, 1, 0});
  return m;
}
inline const SkewMatrix& j() {
  static const SkewMatrix m = from_rows({0, 0, -1, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, -1, 0, 0});
  return m;
}
inline const SkewMatrix& k() {
  static const SkewMatrix m = from_rows({0, 0, 0, -1, 0, 0, -1, 0, 0, 1, 0, 0, 1, 0, 0, 0});
  return m;
}
inline const SkewMatrix& i_hat() {
  static const SkewMatrix m = from_rows({0, -1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, -1, 0});
  return m;
}
inline const SkewMatrix& j_hat() {
  static const SkewMatrix m = from_rows({0, 0, 1, 0, 0, 0, 0, 1, -1, 0, 0, 0, 0, -1, 0, 0});
  return m;
}
inline const SkewMatrix& k_hat() {
  static const SkewMatrix m = from_rows({0, 0, 0, -1, 0, 0, 1, 0, 0, -1, 0, 0, 1, 0, 0, 0});
  return m;
}

}  // namespace quat

struct QuatDecomp {
  Eigen::Vector3d q = Eigen::Vector3d::Zero();
  Eigen::Vector3d q_hat = Eigen::Vector3d::Zero();
};

inline SkewMatrix reconstruct(const QuatDecomp& d) {
  return d.q(0) * quat::i() + d.q(1) * quat::j() + d.q(2) * quat::k() + d.q_hat(0) * quat::i_hat() +
         d.q_hat(1) * quat::j_hat() + d.q_hat(2) * quat::k_hat();
}

inline void require_dim4(const SkewMatrix& l, const char* where) {
  if (l.dim() != 4) throw InputError(std::string(where) + ": requires a 4x4 matrix");
}

inline QuatDecomp decompose(const SkewMatrix& l) {
  require_dim4(l, "decompose");
  QuatDecomp d;
  d.q << hs_inner(l, quat::i()), hs_inner(l, quat::j()), hs_inner(l, quat::k());
  d.q_hat << hs_inner(l, quat::i_hat()), hs_inner(l, quat::j_hat()), hs_inner(l, quat::k_hat());
  return d;
}

/// Moduli of the eigenvalues of L in so(4): (|q| + |q_hat|, ||q| - |q_hat||).
inline std::pair<double, double> eig_moduli_quat(const SkewMatrix& l) {
  require_dim4(l, "eig_moduli_quat");
  const QuatDecomp d = decompose(l);
  const double a = d.q.norm(), b = d.q_hat.norm();
  return {a + b, std::abs(a - b)};
}

inline double commutator_check(const SkewMatrix& a, const SkewMatrix& b) {
  SkewMatrix::check_same_dim(a, b);
  return (a.matrix() * b.matrix() - b.matrix() * a.matrix()).norm();
}

enum class PairKind { BothQ, BothQhat, MixedSplit, Generic };
enum class SigmaClass { SigmaInf, SigmaZero, NonCritical };

inline const char* to_string(PairKind k) {
  switch (k) {
    case PairKind::BothQ: return "BothQ";
    case PairKind::BothQhat: return "BothQhat";
    case PairKind::MixedSplit: return "MixedSplit";
    case PairKind::Generic: return "Generic";
  }
  return "?";
}

inline const char* to_string(SigmaClass s) {
  switch (s) {
    case SigmaClass::SigmaInf: return "SigmaInf";
    case SigmaClass::SigmaZero: return "SigmaZero";
    case SigmaClass::NonCritical: return "NonCritical";
  }
  return "?";
}

struct PairClassification {
  PairKind kind = PairKind::Generic;
  SigmaClass sigma_class = SigmaClass::NonCritical;
  /// Angles in [0, 2pi) where cos(t) L1 + sin(t) L2 has a double eigenvalue.
  std::vector<double> double_eigenvalue_angles;

  /// Property (P2): the pair can be rechosen inside Q x Q, Q^ x Q^ or Q x Q^.
  bool p2() const { return kind != PairKind::Generic; }
};

inline constexpr double kQuatTolerance = 1e-9;

namespace detail {

inline double wrap_angle(double t) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  t = std::fmod(t, two_pi);
  if (t < 0.0) t += two_pi;
  if (t >= two_pi) t -= two_pi;
  return t;
}

// Null directions (cos t, sin t) of a 3x2 projection matrix. A rank-one
// matrix vanishes on exactly two antipodal angles.
inline void null_angles(const Eigen::Matrix<double, 3, 2>& p, double thresh, std::vector<double>& out) {
  Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> svd(p, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (s(0) <= thresh || s(1) > thresh) return;  // rank 0 is Sigma_inf, rank 2 never vanishes
  const Eigen::Vector2d v = svd.matrixV().col(1);
  const double t = wrap_angle(std::atan2(v(1), v(0)));
  out.push_back(t);
  out.push_back(wrap_angle(t + std::numbers::pi));
}

inline int numeric_rank(const Eigen::Matrix<double, 3, 2>& p, double thresh) {
  Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> svd(p);
  const auto& s = svd.singularValues();
  return (s(0) > thresh ? 1 : 0) + (s(1) > thresh ? 1 : 0);
}

}  // namespace detail

inline void require_independent(const SkewMatrix& l1, const SkewMatrix& l2, const char* where) {
  const double g11 = hs_inner(l1, l1), g22 = hs_inner(l2, l2), g12 = hs_inner(l1, l2);
  if (g11 == 0.0 || g22 == 0.0 || (g11 * g22 - g12 * g12) <= 1e-12 * g11 * g22) {
    throw InputError(std::string(where) + ": L1 and L2 are linearly dependent");
  }
}

/// Classification of a pair in so(4) by the ranks of its Q and Q^ projections.
/// Double-eigenvalue angles are the null directions of those projections.
inline PairClassification classify_pair(const SkewMatrix& l1, const SkewMatrix& l2, double tol = kQuatTolerance) {
  require_dim4(l1, "classify_pair");
  require_dim4(l2, "classify_pair");
  require_independent(l1, l2, "classify_pair");
  const QuatDecomp d1 = decompose(l1), d2 = decompose(l2);
  Eigen::Matrix<double, 3, 2> pq, ph;
  pq << d1.q, d2.q;
  ph << d1.q_hat, d2.q_hat;
  const double scale = std::max(hs_norm(l1), hs_norm(l2));
  const double thresh = tol * scale;
  const int rq = detail::numeric_rank(pq, thresh);
  const int rh = detail::numeric_rank(ph, thresh);

  PairClassification out;
  if (rh == 0) {
    out.kind = PairKind::BothQ;
  } else if (rq == 0) {
    out.kind = PairKind::BothQhat;
  } else if (rq == 1 && rh == 1) {
    out.kind = PairKind::MixedSplit;
  } else {
    out.kind = PairKind::Generic;
  }
  if (out.kind == PairKind::BothQ || out.kind == PairKind::BothQhat) {
    out.sigma_class = SigmaClass::SigmaInf;
    return out;
  }
  detail::null_angles(pq, thresh, out.double_eigenvalue_angles);
  detail::null_angles(ph, thresh, out.double_eigenvalue_angles);
  std::sort(out.double_eigenvalue_angles.begin(), out.double_eigenvalue_angles.end());
  out.sigma_class = out.double_eigenvalue_angles.empty() ? SigmaClass::NonCritical : SigmaClass::SigmaZero;
  return out;
}

/// min(|q(theta)|, |q_hat(theta)|) for L_theta = cos(theta) L1 + sin(theta) L2; half the eigenvalue gap.
inline double quat_gap(const QuatDecomp& d1, const QuatDecomp& d2, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return std::min((c * d1.q + s * d2.q).norm(), (c * d1.q_hat + s * d2.q_hat).norm());
}

}  // namespace nilsynth
