#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include "nilsynth/detail/kernels.hpp"
#include "nilsynth/errors.hpp"
#include "nilsynth/nilpotent_model.hpp"
#include "nilsynth/skew_algebra.hpp"

namespace nilsynth {

/// Point (x, y) reached at time t.
struct GeodesicPoint {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  double t = 0.0;

  Eigen::VectorXd stacked() const {
    Eigen::VectorXd v(x.size() + y.size());
    v << x, y;
    return v;
  }
};

namespace detail {

using Complex = std::complex<double>;

// A real 2x2 block B acts on w = v1 + i v2 as B w = beta w + gamma conj(w).
struct ComplexSplit {
  Eigen::MatrixXcd beta;
  Eigen::MatrixXcd gamma;
};

inline ComplexSplit split_blocks(const Eigen::MatrixXd& b) {
  const int nb = static_cast<int>(b.rows()) / 2;
  ComplexSplit s{Eigen::MatrixXcd(nb, nb), Eigen::MatrixXcd(nb, nb)};
  for (int i = 0; i < nb; ++i)
    for (int j = 0; j < nb; ++j) {
      const double b11 = b(2 * i, 2 * j), b12 = b(2 * i, 2 * j + 1);
      const double b21 = b(2 * i + 1, 2 * j), b22 = b(2 * i + 1, 2 * j + 1);
      s.beta(i, j) = Complex(0.5 * (b11 + b22), -0.5 * (b12 - b21));
      s.gamma(i, j) = Complex(0.5 * (b11 - b22), 0.5 * (b12 + b21));
    }
  return s;
}

// Real 2x2 matrix of w -> lin * w + anti * conj(w).
inline Eigen::Matrix2d real_block(Complex lin, Complex anti) {
  Eigen::Matrix2d r;
  r << lin.real() + anti.real(), -lin.imag() + anti.imag(), lin.imag() + anti.imag(), lin.real() - anti.real();
  return r;
}

// Adapted basis padded to even size: 2l' x m, the extra row (odd m) is zero.
inline Eigen::MatrixXd padded_basis(const BlockDiagForm& form) {
  const int m = form.dim();
  const int lp = (m + 1) / 2;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(2 * lp, m);
  p.topRows(m) = form.conjugator;
  return p;
}

inline std::vector<double> padded_moduli(const BlockDiagForm& form, double scale) {
  std::vector<double> w;
  for (double a : form.moduli) w.push_back(scale * a);
  if (form.has_zero_row) w.push_back(0.0);
  return w;
}

// C-kernel of a reduced generator: C = 1/2 int_0^t M_A(s)^T B e^{sA} ds,
// with A block diagonal of moduli omega. Blocks are second divided
// differences of exp at imaginary nodes.
inline Eigen::MatrixXd c_kernel(const std::vector<double>& omega, const ComplexSplit& b, double t) {
  const int nb = static_cast<int>(omega.size());
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2 * nb, 2 * nb);
  const Complex it(0.0, t);
  const double half_t2 = 0.5 * t * t;
  for (int i = 0; i < nb; ++i)
    for (int j = 0; j < nb; ++j) {
      const Complex d1 = exp_dd2(0.0, -it * omega[j], it * (omega[i] - omega[j]));
      const Complex d2 = exp_dd2(0.0, it * omega[j], it * (omega[i] + omega[j]));
      k.block<2, 2>(2 * i, 2 * j) = real_block(half_t2 * d1 * b.beta(i, j), half_t2 * d2 * b.gamma(i, j));
    }
  return k;
}

// Derivative of x(t) along A -> A + eps B: int_0^t int_0^s e^{(s-v)A} B e^{vA} dv ds.
inline Eigen::MatrixXd dx_kernel(const std::vector<double>& omega, const ComplexSplit& b, double t) {
  const int nb = static_cast<int>(omega.size());
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2 * nb, 2 * nb);
  const Complex it(0.0, t);
  const double t2 = t * t;
  for (int i = 0; i < nb; ++i)
    for (int j = 0; j < nb; ++j) {
      const Complex e1 = exp_dd2(0.0, -it * omega[i], -it * omega[j]);
      const Complex e2 = exp_dd2(0.0, -it * omega[i], it * omega[j]);
      k.block<2, 2>(2 * i, 2 * j) = real_block(t2 * e1 * b.beta(i, j), t2 * e2 * b.gamma(i, j));
    }
  return k;
}

inline Eigen::MatrixXd x_kernel(const std::vector<double>& omega, double t) {
  const int nb = static_cast<int>(omega.size());
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2 * nb, 2 * nb);
  for (int i = 0; i < nb; ++i) k.block<2, 2>(2 * i, 2 * i) = m_a_block(omega[i], t);
  return k;
}

}  // namespace detail

/// Closed form of the endpoint map at a fixed time: x = X u0, y_h = u0^T C_h u0,
/// and optionally the r-derivatives dx/dr_j = P_j u0.
struct FlowSnapshot {
  double t = 0.0;
  Eigen::MatrixXd X;
  std::vector<Eigen::MatrixXd> C;
  std::vector<Eigen::MatrixXd> dX_dr;

  GeodesicPoint apply(const Eigen::VectorXd& u0) const {
    GeodesicPoint p;
    p.t = t;
    p.x = X * u0;
    p.y.resize(static_cast<Eigen::Index>(C.size()));
    for (std::size_t h = 0; h < C.size(); ++h) p.y(h) = u0.dot(C[h] * u0);
    return p;
  }
};

/// Geodesics from the origin sharing the vertical covector r. The frame
/// reduction (block form of L_theta) is done once; evaluation at any (u0, t)
/// is closed form.
class GeodesicFlow {
 public:
  GeodesicFlow(const MetricSpec& spec, const Eigen::VectorXd& r) : m_(spec.rank()), k_(spec.corank()) {
    if (r.size() != k_) throw InputError("GeodesicFlow: r has the wrong length");
    if (!r.allFinite()) throw InputError("GeodesicFlow: non-finite r");
    for (const auto& g : spec.generators()) original_plain_.push_back(g.matrix());
    if (r.norm() == 0.0) return;
    frame_ = reduce_frame(spec, r);
    basis_ = detail::padded_basis(frame_->block);
    omega_ = detail::padded_moduli(frame_->block, frame_->r_mod);
    reduced_.push_back(detail::split_blocks(basis_ * frame_->L_theta.matrix() * basis_.transpose()));
    if (k_ == 2) {
      reduced_.push_back(detail::split_blocks(basis_ * frame_->L_theta_tilde.matrix() * basis_.transpose()));
    }
    for (const auto& g : spec.generators()) {
      original_.push_back(detail::split_blocks(basis_ * g.matrix() * basis_.transpose()));
    }
    yrot_t_ = frame_->vertical_rotation().transpose();
  }

  bool straight() const { return !frame_.has_value(); }
  const ReducedFrame& frame() const {
    if (!frame_) throw InputError("GeodesicFlow: r = 0 has no reduced frame");
    return *frame_;
  }
  int rank() const { return m_; }
  int corank() const { return k_; }

  FlowSnapshot snapshot(double t, bool with_r_derivatives = false) const {
    FlowSnapshot s;
    s.t = t;
    if (straight()) {
      s.X = t * Eigen::MatrixXd::Identity(m_, m_);
      s.C.assign(k_, Eigen::MatrixXd::Zero(m_, m_));
      if (with_r_derivatives) {
        // d/dr_j of int_0^t e^{sA} u0 ds at A = 0 is (t^2 / 2) L_j u0.
        for (const auto& g : original_plain_) s.dX_dr.push_back(0.5 * t * t * g);
      }
      return s;
    }
    const Eigen::MatrixXd bt = basis_.transpose();
    s.X = bt * detail::x_kernel(omega_, t) * basis_;
    std::vector<Eigen::MatrixXd> red;
    for (const auto& b : reduced_) red.push_back(detail::c_kernel(omega_, b, t));
    s.C.assign(k_, Eigen::MatrixXd::Zero(m_, m_));
    for (int h = 0; h < k_; ++h) {
      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(basis_.rows(), basis_.rows());
      for (int g = 0; g < k_; ++g) acc += yrot_t_(h, g) * red[g];
      s.C[h] = bt * acc * basis_;
    }
    if (with_r_derivatives) {
      for (const auto& b : original_) s.dX_dr.push_back(bt * detail::dx_kernel(omega_, b, t) * basis_);
    }
    return s;
  }

  GeodesicPoint evaluate(const Eigen::VectorXd& u0, double t) const {
    if (u0.size() != m_) throw InputError("GeodesicFlow: u0 has the wrong length");
    if (straight()) {
      return GeodesicPoint{t * u0, Eigen::VectorXd::Zero(k_), t};
    }
    return snapshot(t).apply(u0);
  }

 private:
  int m_ = 0;
  int k_ = 0;
  std::optional<ReducedFrame> frame_;
  Eigen::MatrixXd basis_;
  std::vector<double> omega_;
  std::vector<detail::ComplexSplit> reduced_;
  std::vector<detail::ComplexSplit> original_;
  std::vector<Eigen::MatrixXd> original_plain_;
  Eigen::MatrixXd yrot_t_;
};

/// Closed-form geodesic. Straight line x = t u0, y = 0 when r = 0.
inline GeodesicPoint geodesic_closed_form(const MetricSpec& spec, const Covector& cov, double t) {
  check_covector(spec, cov);
  return GeodesicFlow(spec, cov.r).evaluate(cov.u0, t);
}

/// Fixed-step RK4 on (u, x, y) with u' = A u, x' = u, y_h' = x^T L_h u / 2.
inline GeodesicPoint geodesic_ode(const MetricSpec& spec, const Covector& cov, double t, int steps) {
  check_covector(spec, cov);
  if (steps < 1) throw InputError("geodesic_ode: steps must be >= 1");
  const int m = spec.rank(), k = spec.corank();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  for (int h = 0; h < k; ++h) a += cov.r(h) * spec.generator(h).matrix();
  const int n = 2 * m + k;
  auto rhs = [&](const Eigen::VectorXd& s) {
    Eigen::VectorXd d(n);
    const auto u = s.head(m);
    const auto x = s.segment(m, m);
    d.head(m) = a * u;
    d.segment(m, m) = u;
    for (int h = 0; h < k; ++h) d(2 * m + h) = 0.5 * x.dot(spec.generator(h).matrix() * u);
    return d;
  };
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  s.head(m) = cov.u0;
  const double dt = t / steps;
  for (int i = 0; i < steps; ++i) {
    const Eigen::VectorXd k1 = rhs(s);
    const Eigen::VectorXd k2 = rhs(s + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = rhs(s + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = rhs(s + dt * k3);
    s += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return GeodesicPoint{s.segment(m, m), s.tail(k), t};
}

/// C(t) = 1/2 int_0^t M_A(s)^T A~ e^{sA} ds, so that y_2(t) = <C(t) u0, u0>
/// for A = r L_theta and A~ = L_theta_tilde.
inline Eigen::MatrixXd c_matrix(const SkewMatrix& a, const SkewMatrix& a_tilde, double t) {
  SkewMatrix::check_same_dim(a, a_tilde);
  const BlockDiagForm form = block_diagonalize(a);
  const Eigen::MatrixXd basis = detail::padded_basis(form);
  const std::vector<double> omega = detail::padded_moduli(form, 1.0);
  const auto split = detail::split_blocks(basis * a_tilde.matrix() * basis.transpose());
  return basis.transpose() * detail::c_kernel(omega, split, t) * basis;
}

/// Exponential map at unit time with an unnormalized covector:
/// E(1, u, r) = E(|u|, u / |u|, r / |u|).
inline GeodesicPoint exp_unit_time(const MetricSpec& spec, const Covector& lambda0) {
  return geodesic_closed_form(spec, lambda0, 1.0);
}

}  // namespace nilsynth
