#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>

#include "nilsynth/errors.hpp"
#include "nilsynth/exponential_map.hpp"
#include "nilsynth/nilpotent_model.hpp"
#include "nilsynth/skew_algebra.hpp"

namespace nilsynth {

inline constexpr double kUnitTolerance = 1e-9;

inline void require_unit(const Covector& cov, const char* where) {
  if (std::abs(cov.u0.norm() - 1.0) > kUnitTolerance) {
    throw InputError(std::string(where) + ": u0 must have unit norm");
  }
}

inline SkewMatrix vertical_combination(const MetricSpec& spec, const Eigen::VectorXd& r) {
  SkewMatrix a = SkewMatrix::zero(spec.rank());
  for (int h = 0; h < spec.corank(); ++h) a = a + r(h) * spec.generator(h);
  return a;
}

/// 2 pi / max sigma(r_1 L_1 + r_2 L_2); +inf for r = 0.
inline double cut_time(const MetricSpec& spec, const Covector& cov) {
  check_covector(spec, cov);
  if (cov.r.norm() == 0.0) return std::numeric_limits<double>::infinity();
  const double a = max_modulus(vertical_combination(spec, cov.r));
  if (a == 0.0) return std::numeric_limits<double>::infinity();
  return 2.0 * std::numbers::pi / a;
}

struct MaxwellPair {
  double omega_tilde = 0.0;
  Covector partner;
  double endpoint_gap = 0.0;
  double velocity_gap = 0.0;
  double t_star = 0.0;
  /// y2^omega(T*) - y2(T*) = C0 sin(w/2) (C1 cos(w/2) + C2 sin(w/2)).
  double c0 = 2.0;
  double c1 = 0.0;
  double c2 = 0.0;
};

/// Rotation by omega of the top block of u0 in the reduced frame of r.
inline Covector maxwell_variation(const MetricSpec& spec, const Covector& cov, double omega) {
  check_covector(spec, cov);
  const ReducedFrame f = reduce_frame(spec, cov.r);
  const Eigen::MatrixXd& m = f.block.conjugator;
  Eigen::VectorXd u = m * cov.u0;
  const Eigen::Vector2d w = u.head<2>();
  u.head<2>() = plane_rotation(omega) * w;
  return Covector{m.transpose() * u, cov.r};
}

/// The nontrivial Maxwell partner at T* = 2 pi / (|r| a_1).
inline MaxwellPair maxwell_partner(const MetricSpec& spec, const Covector& cov) {
  check_covector(spec, cov);
  require_unit(cov, "maxwell_partner");
  if (cov.r.norm() == 0.0) throw InputError("maxwell_partner: r = 0 has no Maxwell point");
  const GeodesicFlow flow(spec, cov.r);
  const ReducedFrame& f = flow.frame();
  const double a1 = f.block.moduli.front();
  MaxwellPair out;
  out.t_star = 2.0 * std::numbers::pi / (a1 * f.r_mod);
  const FlowSnapshot snap = flow.snapshot(out.t_star);
  const Eigen::MatrixXd& m = f.block.conjugator;
  const Eigen::VectorXd u = m * cov.u0;
  const Eigen::Vector2d w = u.head<2>();

  double c1 = 0.0, c2 = 0.0, ref = 0.0;
  if (spec.corank() == 2) {
    // Reduced second vertical form: y~_2 = -sin(theta) y_1 + cos(theta) y_2.
    const double c = std::cos(f.theta), s = std::sin(f.theta);
    const Eigen::MatrixXd cr = m * (-s * snap.C[0] + c * snap.C[1]) * m.transpose();
    const Eigen::Vector2d g = ((cr + cr.transpose()) * u).head<2>();
    const double cdiag = 0.5 * (cr(0, 0) + cr(1, 1));
    const Eigen::Vector2d jw(w(1), -w(0));
    c1 = jw.dot(g);
    c2 = 2.0 * cdiag * w.squaredNorm() - w.dot(g);
    ref = std::abs(cdiag) * w.squaredNorm() + g.norm() * w.norm();
  }
  out.c1 = c1;
  out.c2 = c2;

  const double tiny = 1e-12 * ref;
  if (ref == 0.0 || (std::abs(c1) <= tiny && std::abs(c2) <= tiny)) {
    out.omega_tilde = std::numbers::pi;
  } else if (std::abs(c1) <= tiny) {
    throw InputError("maxwell_partner: the top-block variation has no nontrivial root (C1 = 0, C2 != 0)");
  } else {
    double half = std::atan2(-c1, c2);
    if (half <= 0.0) half += std::numbers::pi;
    out.omega_tilde = 2.0 * half;
  }

  // Cross-check the analytic constants against the sampled variation.
  if (spec.corank() == 2) {
    const double c = std::cos(f.theta), s = std::sin(f.theta);
    auto y2_red = [&](double omega) {
      const GeodesicPoint p = snap.apply(maxwell_variation(spec, cov, omega).u0);
      return -s * p.y(0) + c * p.y(1);
    };
    const double base = y2_red(0.0);
    const double f1 = y2_red(0.5 * std::numbers::pi) - base;
    const double f2 = y2_red(std::numbers::pi) - base;
    const double f3 = y2_red(1.5 * std::numbers::pi) - base;
    const double c2_fit = 0.5 * f2, c1_fit = 0.5 * (f1 - f3);
    const double tol = 1e-8 * (1.0 + ref);
    if (std::abs(c1_fit - c1) > tol || std::abs(c2_fit - c2) > tol) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "maxwell_partner: analytic constants (" << c1 << ", " << c2 << ") disagree with the fitted ("
          << c1_fit << ", " << c2_fit << ")";
      throw ConsistencyError(msg.str());
    }
  }

  out.partner = maxwell_variation(spec, cov, out.omega_tilde);
  out.endpoint_gap = (snap.apply(out.partner.u0).stacked() - snap.apply(cov.u0).stacked()).norm();
  out.velocity_gap = 2.0 * std::abs(std::sin(0.5 * out.omega_tilde)) * w.norm();
  return out;
}

namespace detail {

inline double z_over_sin(double z) { return z == 0.0 ? 1.0 : z / std::sin(z); }

}  // namespace detail

/// Covector (u0, (r, 0)) of the geodesic of the spec, with A = r L_1, that
/// reaches the horizontal point x_bar at time T before its cut time.
/// Solves sum_i (rho_i / T)^2 (z_i / sin z_i)^2 = 1, z_i = a_i r T / 2, by bisection.
inline Covector recover_covector(const MetricSpec& spec, const Eigen::VectorXd& x_bar, double T) {
  const int m = spec.rank();
  if (x_bar.size() != m) throw InputError("recover_covector: x_bar has the wrong length");
  if (!(T > 0.0) || !std::isfinite(T)) throw InputError("recover_covector: T must be positive and finite");
  const double xn = x_bar.norm();
  if (xn > T * (1.0 + 1e-12)) throw InputError("recover_covector: |x_bar| > T is unreachable in time T");
  Covector out{Eigen::VectorXd(m), Eigen::VectorXd::Zero(spec.corank())};
  if (xn >= T * (1.0 - 1e-15)) {
    out.u0 = x_bar / xn;
    return out;
  }

  const BlockDiagForm form = block_diagonalize(spec.generator(0));
  const Eigen::VectorXd xr = form.conjugator * x_bar;
  const int nb = static_cast<int>(form.moduli.size());
  std::vector<double> rho2(nb);
  for (int i = 0; i < nb; ++i) rho2[i] = xr.segment<2>(2 * i).squaredNorm() / (T * T);
  const double tail = form.has_zero_row ? xr(m - 1) * xr(m - 1) / (T * T) : 0.0;
  const double a1 = form.moduli.front();

  auto residual = [&](double s) {
    double acc = tail;
    for (int i = 0; i < nb; ++i) {
      const double g = detail::z_over_sin(0.5 * form.moduli[i] * s);
      acc += rho2[i] * g * g;
    }
    return acc - 1.0;
  };

  const double s_max = 2.0 * std::numbers::pi / a1;
  double lo = 0.0, hi = s_max * (1.0 - 1e-15);
  if (residual(hi) < 0.0) {
    throw InputError("recover_covector: no root below 2 pi / a_1 (target at or beyond the first Maxwell time)");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (residual(mid) < 0.0 ? lo : hi) = mid;
  }
  const double s = 0.5 * (lo + hi);
  const double r = s / T;

  Eigen::VectorXd ur = Eigen::VectorXd::Zero(m);
  for (int i = 0; i < nb; ++i) {
    const double z = 0.5 * form.moduli[i] * s;
    ur.segment<2>(2 * i) = (detail::z_over_sin(z) / T) * (plane_rotation(-z) * xr.segment<2>(2 * i));
  }
  if (form.has_zero_row) ur(m - 1) = xr(m - 1) / T;
  out.u0 = form.conjugator.transpose() * ur;
  out.r(0) = r;
  return out;
}

struct ShootingResult {
  double time = 0.0;
  double theta = 0.0;
  Covector covector;  // in the spec's own coordinates
  double residual = 0.0;
  int iterations = 0;
};

namespace detail {

struct ShotEval {
  bool ok = false;
  Eigen::Vector2d residual = Eigen::Vector2d::Zero();
  Covector cov;
};

inline ShotEval shoot(const MetricSpec& spec, const GeodesicPoint& target, double theta, double T) {
  ShotEval e;
  try {
    const Covector c = recover_covector(rotate_spec(spec, theta), target.x, T);
    e.cov = Covector{c.u0, Eigen::Vector2d(c.r(0) * std::cos(theta), c.r(0) * std::sin(theta))};
    const GeodesicPoint p = geodesic_closed_form(spec, e.cov, T);
    e.residual = p.y - target.y;
    e.ok = e.residual.allFinite();
  } catch (const InputError&) {
    e.ok = false;
  }
  return e;
}

}  // namespace detail

/// Time of the pre-cut geodesic through the target, found by shooting in
/// (theta, T) with recover_covector providing u0 and |r| for each trial.
inline ShootingResult shoot_pre_cut(const MetricSpec& spec, const GeodesicPoint& target) {
  if (spec.corank() != 2) throw InputError("distance_in_cut_domain: requires corank 2");
  if (target.x.size() != spec.rank() || target.y.size() != 2) {
    throw InputError("distance_in_cut_domain: target has the wrong shape");
  }
  const double xn = target.x.norm();
  const double yn = target.y.norm();
  const double tol = 1e-9 * std::max(1.0, yn);
  ShootingResult res;
  if (yn <= 1e-15 * std::max(1.0, xn * xn)) {
    if (xn == 0.0) return res;
    res.time = xn;
    res.covector = Covector{target.x / xn, Eigen::Vector2d::Zero()};
    return res;
  }

  constexpr int n_theta = 64, n_time = 48;
  double a_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_theta; ++i) {
    const double th = 2.0 * std::numbers::pi * i / n_theta;
    a_min = std::min(a_min, max_modulus(rotate_spec(spec, th).generator(0)));
  }
  double t_lo = xn * (1.0 + 1e-9) + 1e-12;
  double t_hi = xn + 2.0 * std::sqrt(4.0 * std::numbers::pi * yn / a_min);

  double best = std::numeric_limits<double>::infinity();
  double th0 = 0.0, T0 = 0.0;
  for (int expand = 0; expand < 6; ++expand) {
    int best_j = -1;
    for (int j = 0; j < n_time; ++j) {
      const double T = t_lo + (t_hi - t_lo) * (j + 0.5) / n_time;
      for (int i = 0; i < n_theta; ++i) {
        const double th = 2.0 * std::numbers::pi * i / n_theta;
        const auto e = detail::shoot(spec, target, th, T);
        if (e.ok && e.residual.norm() < best) {
          best = e.residual.norm();
          th0 = th;
          T0 = T;
          best_j = j;
        }
      }
    }
    if (best_j >= 0 && best_j < n_time - 2) break;
    t_lo = t_hi;
    t_hi *= 2.0;
  }
  if (!std::isfinite(best)) throw ConvergenceError("distance_in_cut_domain: no feasible shooting parameters");

  double th = th0, T = T0;
  auto cur = detail::shoot(spec, target, th, T);
  int it = 0;
  for (; it < 100 && cur.residual.norm() > tol; ++it) {
    const double hth = 1e-7, hT = 1e-7 * std::max(1.0, T);
    const auto ep = detail::shoot(spec, target, th + hth, T);
    const auto em = detail::shoot(spec, target, th - hth, T);
    auto tp = detail::shoot(spec, target, th, T + hT);
    auto tm = detail::shoot(spec, target, th, T - hT);
    Eigen::Matrix2d jac;
    if (!ep.ok || !em.ok) break;
    jac.col(0) = (ep.residual - em.residual) / (2 * hth);
    if (tp.ok && tm.ok) {
      jac.col(1) = (tp.residual - tm.residual) / (2 * hT);
    } else if (tp.ok) {
      jac.col(1) = (tp.residual - cur.residual) / hT;
    } else if (tm.ok) {
      jac.col(1) = (cur.residual - tm.residual) / hT;
    } else {
      break;
    }
    const Eigen::Vector2d step = jac.fullPivLu().solve(-cur.residual);
    if (!step.allFinite()) break;
    double lambda = 1.0;
    bool accepted = false;
    for (int b = 0; b < 40; ++b, lambda *= 0.5) {
      const auto trial = detail::shoot(spec, target, th + lambda * step(0), T + lambda * step(1));
      if (trial.ok && trial.residual.norm() < cur.residual.norm()) {
        th += lambda * step(0);
        T += lambda * step(1);
        cur = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (!(cur.residual.norm() <= tol)) {
    std::ostringstream msg;
    msg.precision(6);
    msg << "distance_in_cut_domain: shooting did not converge (residual " << cur.residual.norm()
        << "); target may lie outside the pre-cut domain";
    throw ConvergenceError(msg.str());
  }
  res.time = T;
  res.theta = std::remainder(th, 2.0 * std::numbers::pi);
  res.covector = cur.cov;
  res.residual = cur.residual.norm();
  res.iterations = it;
  return res;
}

inline double distance_in_cut_domain(const MetricSpec& spec, const GeodesicPoint& target) {
  return shoot_pre_cut(spec, target).time;
}

}  // namespace nilsynth
