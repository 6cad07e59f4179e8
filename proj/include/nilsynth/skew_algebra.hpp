#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "nilsynth/detail/kernels.hpp"
#include "nilsynth/errors.hpp"

namespace nilsynth {

inline constexpr double kSkewTolerance = 1e-12;
inline constexpr double kOrthogonalityTolerance = 1e-10;

/// Real skew-symmetric matrix. Entries are antisymmetrized on construction
/// after checking the input is skew within a relative tolerance.
class SkewMatrix {
 public:
  SkewMatrix() = default;

  explicit SkewMatrix(const Eigen::MatrixXd& entries, double tol = kSkewTolerance) {
    if (entries.rows() == 0 || entries.rows() != entries.cols()) {
      throw InputError("SkewMatrix: entries must form a non-empty square matrix");
    }
    if (!entries.allFinite()) throw InputError("SkewMatrix: non-finite entry");
    const double scale = std::max(1.0, entries.cwiseAbs().maxCoeff());
    const double defect = (entries + entries.transpose()).cwiseAbs().maxCoeff();
    if (defect > tol * scale) {
      throw InputError("SkewMatrix: matrix is not skew-symmetric (max |L + L^T| = " +
                       std::to_string(defect) + ")");
    }
    m_ = 0.5 * (entries - entries.transpose());
  }

  static SkewMatrix zero(int dim) { return SkewMatrix(Eigen::MatrixXd::Zero(dim, dim)); }

  /// Skew part of an arbitrary square matrix, without the tolerance check.
  static SkewMatrix skew_part(const Eigen::MatrixXd& a) {
    SkewMatrix out;
    out.m_ = 0.5 * (a - a.transpose());
    return out;
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Eigen::MatrixXd& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

  friend SkewMatrix operator+(const SkewMatrix& a, const SkewMatrix& b) {
    check_same_dim(a, b);
    SkewMatrix out;
    out.m_ = a.m_ + b.m_;
    return out;
  }
  friend SkewMatrix operator-(const SkewMatrix& a, const SkewMatrix& b) {
    check_same_dim(a, b);
    SkewMatrix out;
    out.m_ = a.m_ - b.m_;
    return out;
  }
  friend SkewMatrix operator*(double s, const SkewMatrix& a) {
    SkewMatrix out;
    out.m_ = s * a.m_;
    return out;
  }

  static void check_same_dim(const SkewMatrix& a, const SkewMatrix& b) {
    if (a.dim() != b.dim()) throw InputError("SkewMatrix: dimension mismatch");
  }

 private:
  Eigen::MatrixXd m_;
};

/// Q * L * Q^T for an orthogonal (or arbitrary) Q; the result is re-antisymmetrized.
inline SkewMatrix congruence(const Eigen::MatrixXd& q, const SkewMatrix& l) {
  return SkewMatrix::skew_part(q * l.matrix() * q.transpose());
}

/// Normalized Hilbert-Schmidt product (1/m) tr(L1^T L2).
inline double hs_inner(const SkewMatrix& l1, const SkewMatrix& l2) {
  SkewMatrix::check_same_dim(l1, l2);
  return (l1.matrix().array() * l2.matrix().array()).sum() / l1.dim();
}

inline double hs_norm(const SkewMatrix& l) { return std::sqrt(hs_inner(l, l)); }

/// Orthogonal conjugation of a skew matrix into 2x2 blocks [[0, a], [-a, 0]].
struct BlockDiagForm {
  /// Rows form the adapted basis: conjugator * L * conjugator^T is block diagonal.
  Eigen::MatrixXd conjugator;
  /// a_1 >= a_2 >= ... >= a_l >= 0, l = floor(m / 2).
  std::vector<double> moduli;
  bool has_zero_row = false;

  int dim() const { return static_cast<int>(conjugator.rows()); }

  Eigen::MatrixXd canonical() const {
    const int m = dim();
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, m);
    for (std::size_t i = 0; i < moduli.size(); ++i) {
      const int p = static_cast<int>(2 * i);
      b(p, p + 1) = moduli[i];
      b(p + 1, p) = -moduli[i];
    }
    return b;
  }

  Eigen::MatrixXd reconstruct() const { return conjugator.transpose() * canonical() * conjugator; }
};

namespace detail {

struct Plane {
  Eigen::VectorXd f1;
  Eigen::VectorXd f2;
  double a = 0.0;
  int anchor = 0;
};

// Rotate the in-plane basis so that f1 points along the projection of the
// first standard axis with (numerically) maximal projection, and f2 is
// orthogonal to that axis. Rotations keep the block sign.
inline void canonicalize_plane(Plane& pl) {
  const Eigen::ArrayXd proj = pl.f1.array().square() + pl.f2.array().square();
  const double best = proj.maxCoeff();
  int k = 0;
  while (proj(k) < best - 1e-12) ++k;
  const double c = pl.f1(k), s = pl.f2(k);
  const double n = std::hypot(c, s);
  const Eigen::VectorXd g1 = (c * pl.f1 + s * pl.f2) / n;
  const Eigen::VectorXd g2 = (-s * pl.f1 + c * pl.f2) / n;
  pl.f1 = g1;
  pl.f2 = g2;
  pl.anchor = k;
}

}  // namespace detail

/// Real Schur decomposition of a skew matrix, post-processed into a
/// deterministic canonical form: moduli descending, positive (1,2) entries,
/// equal moduli ordered by anchor axis. Already block-diagonal input with
/// descending moduli gives the identity conjugator.
inline BlockDiagForm block_diagonalize(const SkewMatrix& l) {
  const int m = l.dim();
  const int ell = m / 2;
  BlockDiagForm out;
  out.has_zero_row = (m % 2 == 1);
  const double scale = l.matrix().cwiseAbs().maxCoeff();
  if (scale == 0.0) {
    out.conjugator = Eigen::MatrixXd::Identity(m, m);
    out.moduli.assign(ell, 0.0);
    return out;
  }

  Eigen::RealSchur<Eigen::MatrixXd> schur(l.matrix());
  const Eigen::MatrixXd& u = schur.matrixU();
  const Eigen::MatrixXd& t = schur.matrixT();
  const double snap = 64.0 * std::numeric_limits<double>::epsilon() * scale * m;

  std::vector<detail::Plane> planes;
  std::vector<Eigen::VectorXd> kernel;
  for (int p = 0; p < m;) {
    if (p + 1 < m && t(p + 1, p) != 0.0) {
      double a = 0.5 * (t(p, p + 1) - t(p + 1, p));
      detail::Plane pl{u.col(p), u.col(p + 1), a, 0};
      if (a < 0.0) {
        std::swap(pl.f1, pl.f2);
        pl.a = -a;
      }
      if (pl.a <= snap) pl.a = 0.0;
      planes.push_back(std::move(pl));
      p += 2;
    } else {
      kernel.push_back(u.col(p));
      ++p;
    }
  }
  for (std::size_t i = 0; i + 1 < kernel.size(); i += 2) {
    planes.push_back(detail::Plane{kernel[i], kernel[i + 1], 0.0, 0});
  }
  for (auto& pl : planes) detail::canonicalize_plane(pl);

  const double tie = 1e-12 * scale;
  std::stable_sort(planes.begin(), planes.end(), [tie](const detail::Plane& x, const detail::Plane& y) {
    if (std::abs(x.a - y.a) > tie) return x.a > y.a;
    return x.anchor < y.anchor;
  });

  out.conjugator.resize(m, m);
  out.moduli.reserve(ell);
  for (int i = 0; i < ell; ++i) {
    out.conjugator.row(2 * i) = planes[i].f1.transpose();
    out.conjugator.row(2 * i + 1) = planes[i].f2.transpose();
    out.moduli.push_back(planes[i].a);
  }
  if (out.has_zero_row) {
    Eigen::VectorXd z = kernel.back();
    Eigen::Index idx = 0;
    z.cwiseAbs().maxCoeff(&idx);
    if (z(idx) < 0.0) z = -z;
    out.conjugator.row(m - 1) = z.transpose();
  }
  return out;
}

inline std::vector<double> spectrum_moduli(const SkewMatrix& l) { return block_diagonalize(l).moduli; }

inline double max_modulus(const SkewMatrix& l) {
  const auto mod = spectrum_moduli(l);
  return mod.empty() ? 0.0 : mod.front();
}

/// Plane rotation [[cos phi, sin phi], [-sin phi, cos phi]] = exp(phi * [[0,1],[-1,0]]).
inline Eigen::Matrix2d plane_rotation(double phi) {
  const double c = std::cos(phi), s = std::sin(phi);
  Eigen::Matrix2d r;
  r << c, s, -s, c;
  return r;
}

/// Per-block kernel D(t) of M_A(t) = A^{-1}(e^{tA} - I) for a block of modulus a.
inline Eigen::Matrix2d m_a_block(double a, double t) {
  const double diag = t * detail::sinc(a * t);
  const double off = t * std::sin(0.5 * a * t) * detail::sinc(0.5 * a * t);
  Eigen::Matrix2d d;
  d << diag, off, -off, diag;
  return d;
}

inline Eigen::MatrixXd skew_exp(const BlockDiagForm& form, double t) {
  const int m = form.dim();
  Eigen::MatrixXd b = Eigen::MatrixXd::Identity(m, m);
  for (std::size_t i = 0; i < form.moduli.size(); ++i) {
    b.block<2, 2>(2 * i, 2 * i) = plane_rotation(form.moduli[i] * t);
  }
  return form.conjugator.transpose() * b * form.conjugator;
}

/// e^{tL}, assembled from plane rotations by angles a_i t.
inline Eigen::MatrixXd skew_exp(const SkewMatrix& l, double t) { return skew_exp(block_diagonalize(l), t); }

inline Eigen::MatrixXd m_a_matrix(const BlockDiagForm& form, double t) {
  const int m = form.dim();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t i = 0; i < form.moduli.size(); ++i) {
    b.block<2, 2>(2 * i, 2 * i) = m_a_block(form.moduli[i], t);
  }
  if (form.has_zero_row) b(m - 1, m - 1) = t;
  return form.conjugator.transpose() * b * form.conjugator;
}

/// M_A(t) = int_0^t e^{sA} ds, evaluated blockwise (A may be singular).
inline Eigen::MatrixXd m_a_matrix(const SkewMatrix& a, double t) { return m_a_matrix(block_diagonalize(a), t); }

}  // namespace nilsynth
