#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "nilsynth/detail/parallel.hpp"
#include "nilsynth/errors.hpp"
#include "nilsynth/exponential_map.hpp"
#include "nilsynth/nilpotent_model.hpp"

namespace nilsynth {

/// Piecewise-constant controls on N equal segments of [0, T]; row j is u on segment j.
struct ControlGrid {
  int segments = 0;
  Eigen::MatrixXd controls;
  double horizon = 0.0;

  double step() const { return horizon / segments; }
  double length() const { return step() * controls.rowwise().norm().sum(); }
  double max_speed() const { return controls.rows() ? controls.rowwise().norm().maxCoeff() : 0.0; }
};

inline void check_grid(const MetricSpec& spec, const ControlGrid& g) {
  if (g.segments < 1) throw InputError("control grid: need at least one segment");
  if (g.controls.rows() != g.segments || g.controls.cols() != spec.rank())
    throw InputError("control grid: controls must be segments x m");
  if (!(g.horizon >= 0.0) || !std::isfinite(g.horizon)) throw InputError("control grid: bad horizon");
  if (!g.controls.allFinite()) throw InputError("control grid: non-finite control");
}

/// Exact endpoint: x is piecewise linear and y_h gains tau/2 x_j^T L_h u_j per
/// segment (the u^T L u term vanishes by skew symmetry).
inline GeodesicPoint integrate_controls(const MetricSpec& spec, const ControlGrid& g) {
  check_grid(spec, g);
  const int m = spec.rank(), k = spec.corank();
  const double tau = g.step();
  GeodesicPoint p{Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(k), g.horizon};
  for (int j = 0; j < g.segments; ++j) {
    const Eigen::VectorXd u = g.controls.row(j).transpose();
    for (int h = 0; h < k; ++h) p.y(h) += 0.5 * tau * p.x.dot(spec.generator(h).matrix() * u);
    p.x += tau * u;
  }
  return p;
}

struct OracleConfig {
  int segments = 64;
  int restarts = 32;
  int iterations = 200;  // per restart
  std::uint64_t seed = 42;
  int threads = 0;
  double tolerance = 1e-10;  // endpoint residual accepted as feasible
};

struct OracleResult {
  double distance = std::numeric_limits<double>::infinity();
  double residual = std::numeric_limits<double>::infinity();
  int feasible_restarts = 0;
  ControlGrid best;  // constant-speed-normalized: max speed 1
};

namespace detail {

/// Endpoint and its Jacobian with respect to all controls (unit horizon).
/// The y-rows come from the adjoint recursion
/// dy_h/du_i = tau/2 L_h (S_i - x_i), with S_i = x_N - x_{i+1}.
inline void endpoint_and_jacobian(const MetricSpec& spec, const Eigen::MatrixXd& u, Eigen::VectorXd& f,
                                  Eigen::MatrixXd& jac) {
  const int n = static_cast<int>(u.rows()), m = spec.rank(), k = spec.corank();
  const double tau = 1.0 / n;
  Eigen::MatrixXd xs(n + 1, m);
  xs.row(0).setZero();
  f = Eigen::VectorXd::Zero(m + k);
  for (int j = 0; j < n; ++j) {
    for (int h = 0; h < k; ++h) f(m + h) += 0.5 * tau * xs.row(j).dot(spec.generator(h).matrix() * u.row(j).transpose());
    xs.row(j + 1) = xs.row(j) + tau * u.row(j);
  }
  f.head(m) = xs.row(n).transpose();
  jac = Eigen::MatrixXd::Zero(m + k, n * m);
  for (int i = 0; i < n; ++i) {
    jac.block(0, i * m, m, m).diagonal().setConstant(tau);
    const Eigen::VectorXd s = (xs.row(n) - xs.row(i + 1)).transpose() - xs.row(i).transpose();
    for (int h = 0; h < k; ++h) jac.block(m + h, i * m, 1, m) = (0.5 * tau * spec.generator(h).matrix() * s).transpose();
  }
}

inline Eigen::VectorXd flatten(const Eigen::MatrixXd& u) {
  Eigen::VectorXd z(u.size());
  for (int i = 0; i < u.rows(); ++i) z.segment(i * u.cols(), u.cols()) = u.row(i).transpose();
  return z;
}

inline Eigen::MatrixXd unflatten(const Eigen::VectorXd& z, int n, int m) {
  Eigen::MatrixXd u(n, m);
  for (int i = 0; i < n; ++i) u.row(i) = z.segment(i * m, m).transpose();
  return u;
}

struct LocalSolve {
  Eigen::MatrixXd u;
  double residual = std::numeric_limits<double>::infinity();
  double length = std::numeric_limits<double>::infinity();
};

/// Minimum-energy controls on [0, 1] reaching the target: each step solves
/// min |z + d|^2 subject to F + J d = 0 (damped on the residual).
inline LocalSolve minimize_energy(const MetricSpec& spec, const Eigen::VectorXd& target, Eigen::MatrixXd u,
                                  const OracleConfig& cfg) {
  const int n = static_cast<int>(u.rows()), m = spec.rank();
  const double tau = 1.0 / n;
  const double scale = std::max(1.0, target.norm());
  Eigen::VectorXd f;
  Eigen::MatrixXd jac;
  endpoint_and_jacobian(spec, u, f, jac);
  double res = (f - target).norm();
  for (int it = 0; it < cfg.iterations; ++it) {
    const Eigen::VectorXd z = flatten(u);
    const Eigen::VectorXd g = f - target;
    const Eigen::MatrixXd jjt = jac * jac.transpose();
    const Eigen::VectorXd rhs = jac * z - g;
    const Eigen::VectorXd z_new = jac.transpose() * jjt.ldlt().solve(rhs);
    const Eigen::VectorXd d = z_new - z;
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      const Eigen::MatrixXd trial = unflatten(z + alpha * d, n, m);
      Eigen::VectorXd ft;
      Eigen::MatrixXd jt;
      endpoint_and_jacobian(spec, trial, ft, jt);
      const double rt = (ft - target).norm();
      // Accept when feasibility does not degrade beyond what the energy step may cost.
      if (rt <= std::max(0.9 * res, 1e-3 * cfg.tolerance * scale) || (res < 1e-6 * scale && rt <= 2.0 * res + 1e-14 * scale)) {
        u = trial;
        f = ft;
        jac = jt;
        res = rt;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    if (alpha == 1.0 && d.norm() <= 1e-13 * std::max(1.0, z.norm()) && res <= cfg.tolerance * scale) break;
  }
  LocalSolve out;
  out.u = u;
  out.residual = res;
  out.length = tau * u.rowwise().norm().sum();
  return out;
}

inline Eigen::MatrixXd random_controls(std::mt19937_64& rng, int n, int m, const Eigen::VectorXd& x_target) {
  std::normal_distribution<double> g(0.0, 1.0);
  constexpr int kModes = 4;
  std::vector<Eigen::VectorXd> a(kModes), b(kModes);
  for (int f = 0; f < kModes; ++f) {
    a[f] = Eigen::VectorXd(m);
    b[f] = Eigen::VectorXd(m);
    for (int i = 0; i < m; ++i) {
      a[f](i) = g(rng) / (f + 1);
      b[f](i) = g(rng) / (f + 1);
    }
  }
  const double amp = std::max(1.0, x_target.norm());
  Eigen::MatrixXd u(n, m);
  for (int j = 0; j < n; ++j) {
    const double t = (j + 0.5) / n;
    Eigen::VectorXd v = x_target;
    for (int f = 0; f < kModes; ++f) {
      v += amp * (a[f] * std::cos(2.0 * std::numbers::pi * (f + 1) * t) + b[f] * std::sin(2.0 * std::numbers::pi * (f + 1) * t));
    }
    u.row(j) = v.transpose();
  }
  return u;
}

}  // namespace detail

/// Upper bound on the distance from the origin to the target: minimum-energy
/// controls from seeded multi-start, length of the best feasible curve.
inline OracleResult brute_force_distance(const MetricSpec& spec, const GeodesicPoint& target,
                                         const OracleConfig& cfg = {}) {
  const int m = spec.rank(), k = spec.corank();
  if (target.x.size() != m || target.y.size() != k) throw InputError("brute_force_distance: target has the wrong shape");
  if (cfg.segments < 2 || cfg.restarts < 1 || cfg.iterations < 1) throw InputError("brute_force_distance: bad budget");
  Eigen::VectorXd tgt(m + k);
  tgt << target.x, target.y;
  std::vector<detail::LocalSolve> runs(cfg.restarts);
  detail::parallel_for(cfg.restarts, detail::resolve_threads(cfg.threads), [&](int r) {
    Eigen::MatrixXd u0;
    if (r == 0) {
      u0 = target.x.transpose().replicate(cfg.segments, 1);  // straight line
    } else {
      std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(r)};
      std::mt19937_64 rng(seq);
      u0 = detail::random_controls(rng, cfg.segments, m, target.x);
    }
    runs[r] = detail::minimize_energy(spec, tgt, u0, cfg);
  });
  OracleResult out;
  const double feasible = cfg.tolerance * std::max(1.0, tgt.norm());
  int best = -1;
  for (int r = 0; r < cfg.restarts; ++r) {
    const bool ok = runs[r].residual <= feasible;
    out.feasible_restarts += ok;
    if (ok && (best < 0 || runs[r].length < runs[best].length)) best = r;
  }
  if (best < 0) {
    // Nothing feasible: report the closest attempt.
    for (int r = 0; r < cfg.restarts; ++r)
      if (best < 0 || runs[r].residual < runs[best].residual) best = r;
  }
  out.distance = runs[best].length;
  out.residual = runs[best].residual;
  const double speed = runs[best].u.rowwise().norm().maxCoeff();
  out.best.segments = cfg.segments;
  out.best.horizon = speed;  // unit-horizon controls rescaled to max speed 1
  out.best.controls = speed > 0.0 ? Eigen::MatrixXd(runs[best].u / speed) : runs[best].u;
  return out;
}

}  // namespace nilsynth
