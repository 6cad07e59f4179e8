#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

#include "nilsynth/errors.hpp"
#include "nilsynth/exponential_map.hpp"
#include "nilsynth/nilpotent_model.hpp"
#include "nilsynth/quaternion_so4.hpp"
#include "nilsynth/synthesis.hpp"

namespace nilsynth {

/// Scale-relative zero threshold for Jacobian determinants (Hadamard ratio).
inline constexpr double kJacobianZeroTolerance = 1e-7;

struct TangentFrame {
  std::vector<Eigen::VectorXd> v;
  bool fallback = false;
};

namespace detail {

// Orthonormal basis of u^perp from a Householder reflection mapping u/|u| to e_1.
inline std::vector<Eigen::VectorXd> householder_tangents(const Eigen::VectorXd& u) {
  const int m = static_cast<int>(u.size());
  Eigen::VectorXd w = u / u.norm();
  Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
  e(0) = w(0) >= 0.0 ? 1.0 : -1.0;
  Eigen::VectorXd h = w + e;
  h /= h.norm();
  std::vector<Eigen::VectorXd> out;
  for (int i = 1; i < m; ++i) {
    Eigen::VectorXd col = Eigen::VectorXd::Unit(m, i);
    out.push_back(col - 2.0 * h * h.dot(col));
  }
  return out;
}

inline double hadamard_ratio(const Eigen::MatrixXd& a) {
  double scale = 1.0;
  for (int c = 0; c < a.cols(); ++c) scale *= a.col(c).norm();
  return scale == 0.0 ? 0.0 : std::abs(a.determinant()) / scale;
}

}  // namespace detail

/// Tangent vectors to the sphere at u0. For m = 4 the explicit triple
/// v1 = (-u2, u1, 0, 0), v2 = (0, 0, u4, -u3), v3 = (-u3, 0, u1, 0), replaced
/// by an orthonormal frame (flagged) where it degenerates.
inline TangentFrame tangent_frame(const Eigen::VectorXd& u0) {
  const int m = static_cast<int>(u0.size());
  TangentFrame f;
  if (m == 4) {
    const double u1 = u0(0), u2 = u0(1), u3 = u0(2), u4 = u0(3);
    f.v = {Eigen::Vector4d(-u2, u1, 0.0, 0.0), Eigen::Vector4d(0.0, 0.0, u4, -u3),
           Eigen::Vector4d(-u3, 0.0, u1, 0.0)};
    Eigen::Matrix4d a;
    a << u0, f.v[0], f.v[1], f.v[2];
    if (detail::hadamard_ratio(a) > 1e-3) return f;
    f.fallback = true;
  }
  f.v = detail::householder_tangents(u0);
  return f;
}

struct JacobianValue {
  double value = 0.0;
  /// Product of column norms, each floored at sqrt(eps) times the largest.
  double scale = 0.0;
  bool fallback_frame = false;

  double normalized() const { return scale > 0.0 ? value / scale : 0.0; }
  bool vanishes(double tol = kJacobianZeroTolerance) const { return std::abs(normalized()) <= tol; }
};

/// Jacobians of the exponential map along one covector. The vertical
/// perturbations r +- h e_j are reduced once and reused for every t.
class ExpMapJacobian {
 public:
  ExpMapJacobian(const MetricSpec& spec, const Covector& cov)
      : spec_(spec), cov_(cov), frame_(tangent_frame(cov.u0)), base_(spec, cov.r) {
    check_covector(spec, cov);
    const double eps = std::numeric_limits<double>::epsilon();
    for (int j = 0; j < spec.corank(); ++j) {
      const double scale = std::max(1.0, std::abs(cov.r(j)));
      h3_.push_back(std::cbrt(eps) * scale);
      h5_.push_back(std::pow(eps, 0.2) * scale);
      for (double step : {h3_.back(), -h3_.back(), h5_.back(), -h5_.back(), 0.5 * h5_.back(), -0.5 * h5_.back()}) {
        Eigen::VectorXd r = cov.r;
        r(j) += step;
        flows_.emplace_back(spec, r);
      }
    }
  }

  const TangentFrame& frame() const { return frame_; }

  /// det(dE/dt, dE/du0 v_1..v_{m-1}, dE/dr_1..dE/dr_k) by central differences.
  JacobianValue full(double t) const {
    const int m = spec_.rank(), k = spec_.corank(), n = m + k;
    const double eps = std::numeric_limits<double>::epsilon();
    Eigen::MatrixXd jac(n, n);
    const double ht = std::cbrt(eps) * std::max(1.0, std::abs(t));
    jac.col(0) = (base_.evaluate(cov_.u0, t + ht).stacked() - base_.evaluate(cov_.u0, t - ht).stacked()) / (2 * ht);
    const FlowSnapshot snap = base_.snapshot(t);
    const double hu = std::cbrt(eps) * std::max(1.0, cov_.u0.cwiseAbs().maxCoeff());
    for (int i = 0; i < m - 1; ++i) {
      const Eigen::VectorXd& v = frame_.v[i];
      jac.col(1 + i) = (snap.apply(cov_.u0 + hu * v).stacked() - snap.apply(cov_.u0 - hu * v).stacked()) / (2 * hu);
    }
    for (int j = 0; j < k; ++j) {
      const GeodesicFlow& fp = flows_[6 * j];
      const GeodesicFlow& fm = flows_[6 * j + 1];
      jac.col(m + j) = (fp.evaluate(cov_.u0, t).stacked() - fm.evaluate(cov_.u0, t).stacked()) / (2 * h3_[j]);
    }
    return finish(jac, 1.0);
  }

  /// (1 / r_1) det of the map without y_1, analytic in u0 and in x.
  JacobianValue reduced(double t) const {
    if (cov_.r(0) == 0.0) throw InputError("jacobian_reduced: requires r_1 != 0");
    const int m = spec_.rank(), k = spec_.corank(), n = m + k - 1;
    const FlowSnapshot snap = base_.snapshot(t, true);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
    std::vector<Eigen::VectorXd> grad_y;
    for (int h = 1; h < k; ++h) grad_y.push_back((snap.C[h] + snap.C[h].transpose()) * cov_.u0);
    for (int i = 0; i < m - 1; ++i) {
      const Eigen::VectorXd& v = frame_.v[i];
      jac.col(i).head(m) = snap.X * v;
      for (int h = 1; h < k; ++h) jac(m + h - 1, i) = grad_y[h - 1].dot(v);
    }
    for (int j = 0; j < k; ++j) {
      const int c = m - 1 + j;
      jac.col(c).head(m) = snap.dX_dr[j] * cov_.u0;
      if (k > 1) {
        const Eigen::VectorXd d1 = (flows_[6 * j + 2].evaluate(cov_.u0, t).y - flows_[6 * j + 3].evaluate(cov_.u0, t).y) / (2 * h5_[j]);
        const Eigen::VectorXd d2 = (flows_[6 * j + 4].evaluate(cov_.u0, t).y - flows_[6 * j + 5].evaluate(cov_.u0, t).y) / h5_[j];
        const Eigen::VectorXd rich = (4.0 * d2 - d1) / 3.0;
        for (int h = 1; h < k; ++h) jac(m + h - 1, c) = rich(h);
      }
    }
    return finish(jac, 1.0 / cov_.r(0));
  }

 private:
  JacobianValue finish(const Eigen::MatrixXd& jac, double factor) const {
    JacobianValue out;
    // Columns that are pure roundoff must not inflate the ratio.
    Eigen::VectorXd norms = jac.colwise().norm().transpose();
    const double floor = std::sqrt(std::numeric_limits<double>::epsilon()) * norms.maxCoeff();
    out.scale = 1.0;
    for (int c = 0; c < jac.cols(); ++c) out.scale *= std::max(norms(c), floor);
    out.scale *= std::abs(factor);
    out.value = factor * jac.partialPivLu().determinant();
    out.fallback_frame = frame_.fallback;
    return out;
  }

  MetricSpec spec_;
  Covector cov_;
  TangentFrame frame_;
  GeodesicFlow base_;
  std::vector<GeodesicFlow> flows_;
  std::vector<double> h3_, h5_;
};

inline double jacobian_full(const MetricSpec& spec, const Covector& cov, double t) {
  return ExpMapJacobian(spec, cov).full(t).value;
}

inline double jacobian_reduced(const MetricSpec& spec, const Covector& cov, double t) {
  return ExpMapJacobian(spec, cov).reduced(t).value;
}

/// Covector along the geodesic: (u(t) - A x(t) / 2, -r). Its pairing with
/// dE/dt is |u0|^2 and it annihilates the other Jacobian columns.
inline Eigen::VectorXd hamiltonian_covector(const MetricSpec& spec, const Covector& cov, double t) {
  const int m = spec.rank(), k = spec.corank();
  const SkewMatrix a = vertical_combination(spec, cov.r);
  const GeodesicPoint p = geodesic_closed_form(spec, cov, t);
  const Eigen::VectorXd u = skew_exp(a, t) * cov.u0;
  Eigen::VectorXd lambda(m + k);
  lambda.head(m) = u - 0.5 * a.matrix() * p.x;
  lambda.tail(k) = -cov.r;
  return lambda;
}

/// Factors of the reduced Jacobian at the cut time (m = 4, k = 2), in the
/// frame where L_theta is block diagonal. The reduced Jacobian at t_cut equals product / r.
struct CutFactorization {
  double bracket_term = 0.0;
  double det_m = 0.0;
  double det_n = 0.0;
  double product = 0.0;
  double t_cut = 0.0;
  double a = 0.0;
  double b = 0.0;
  /// The spec in adapted coordinates, generators (M L_theta M^T, M L~_theta M^T).
  MetricSpec reduced_spec;
};

inline MetricSpec adapted_spec(const MetricSpec& spec, double theta, BlockDiagForm* form_out = nullptr) {
  const MetricSpec rotated = rotate_spec(spec, theta);
  const BlockDiagForm form = block_diagonalize(rotated.generator(0));
  if (form_out) *form_out = form;
  return conjugate_spec(rotated, form.conjugator);
}

inline CutFactorization factor_at_cut(const MetricSpec& spec, const Eigen::VectorXd& u0, double theta, double r) {
  if (spec.rank() != 4 || spec.corank() != 2) throw InputError("factor_at_cut: requires m = 4, k = 2");
  if (u0.size() != 4) throw InputError("factor_at_cut: u0 must have length 4");
  if (!(r > 0.0)) throw InputError("factor_at_cut: r must be positive");
  BlockDiagForm form;
  CutFactorization out;
  out.reduced_spec = adapted_spec(spec, theta, &form);
  out.a = form.moduli[0];
  out.b = form.moduli[1];
  if (out.a == 0.0) throw InputError("factor_at_cut: L_theta = 0 has no cut time");
  out.t_cut = 2.0 * std::numbers::pi / (out.a * r);
  const GeodesicFlow flow(out.reduced_spec, Eigen::Vector2d(r, 0.0));
  const FlowSnapshot snap = flow.snapshot(out.t_cut, true);
  const double u1 = u0(0), u2 = u0(1), u3 = u0(2), u4 = u0(3);
  const Eigen::Vector4d v1(-u2, u1, 0.0, 0.0), v2(0.0, 0.0, u4, -u3), v3(-u3, 0.0, u1, 0.0);
  Eigen::Matrix2d mm;
  mm << (snap.X * v2).tail<2>(), (snap.X * v3).tail<2>();
  Eigen::Matrix2d nn;
  nn << (snap.dX_dr[0] * u0).head<2>(), (snap.dX_dr[1] * u0).head<2>();
  out.det_m = mm.determinant();
  out.det_n = nn.determinant();
  out.bracket_term = ((snap.C[1] + snap.C[1].transpose()) * u0).dot(v1);
  out.product = out.bracket_term * out.det_m * out.det_n;
  return out;
}

/// First zero of the reduced Jacobian in (t_max / 512, t_max]: sign changes
/// are bisected, and near-zero local minima of the normalized value are
/// refined by golden section (even-order zeros).
inline std::optional<double> first_conjugate_time(const MetricSpec& spec, const Covector& cov, double t_max,
                                                  int samples = 512) {
  check_covector(spec, cov);
  require_unit(cov, "first_conjugate_time");
  if (cov.r.norm() == 0.0) throw InputError("first_conjugate_time: r = 0 has no conjugate time");
  if (!(t_max > 0.0)) throw InputError("first_conjugate_time: t_max must be positive");
  const ReducedFrame f = reduce_frame(spec, cov.r);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(spec.corank());
  r(0) = f.r_mod;
  const ExpMapJacobian jac(rotate_spec(spec, f.theta), Covector{cov.u0, r});
  auto value = [&](double t) { return jac.reduced(t).normalized(); };

  std::vector<double> ts(samples + 1), vs(samples + 1);
  for (int i = 1; i <= samples; ++i) {
    ts[i] = t_max * i / samples;
    vs[i] = value(ts[i]);
  }
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  auto refine_dip = [&](double lo, double hi) -> std::optional<double> {
    double c = hi - phi * (hi - lo), d = lo + phi * (hi - lo);
    double fc = std::abs(value(c)), fd = std::abs(value(d));
    for (int it = 0; it < 80 && hi - lo > 1e-14 * hi; ++it) {
      if (fc < fd) {
        hi = d; d = c; fd = fc;
        c = hi - phi * (hi - lo);
        fc = std::abs(value(c));
      } else {
        lo = c; c = d; fc = fd;
        d = lo + phi * (hi - lo);
        fd = std::abs(value(d));
      }
    }
    const double tm = 0.5 * (lo + hi);
    if (std::abs(value(tm)) <= kJacobianZeroTolerance) return tm;
    return std::nullopt;
  };
  auto bisect = [&](double lo, double hi, double flo) {
    for (int it = 0; it < 100 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double fm = value(mid);
      if (fm == 0.0) return mid;
      if ((fm < 0.0) == (flo < 0.0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  };
  for (int i = 1; i <= samples; ++i) {
    if (vs[i] == 0.0) return ts[i];
    std::optional<double> found;
    if (i >= 2 && i < samples && std::abs(vs[i]) <= std::abs(vs[i - 1]) && std::abs(vs[i]) <= std::abs(vs[i + 1])) {
      found = refine_dip(ts[i - 1], ts[i + 1]);
    }
    if (i < samples && vs[i] * vs[i + 1] < 0.0) {
      const double root = bisect(ts[i], ts[i + 1], vs[i]);
      if (!found || root < *found) found = root;
    }
    if (found) return found;
  }
  return std::nullopt;
}

struct CutConjugateVerdict {
  bool p1 = false;  // Jacobian at t_cut vanished on every sample
  bool p2 = false;  // pair lies in (Q u Q^)^2 up to recombination
  PairClassification classification;
  double max_normalized = 0.0;
  Eigen::VectorXd witness_u0;  // adapted coordinates
  double witness_theta = 0.0;
};

/// Samples (u0, theta) and tests whether the reduced Jacobian vanishes at the
/// cut time, then cross-checks with classify_pair.
inline CutConjugateVerdict cut_equals_conjugate(const MetricSpec& spec, int samples, std::uint64_t seed = 42,
                                                double tol = kJacobianZeroTolerance) {
  if (spec.rank() != 4 || spec.corank() != 2) throw InputError("cut_equals_conjugate: requires m = 4, k = 2");
  if (samples < 1) throw InputError("cut_equals_conjugate: samples must be positive");
  CutConjugateVerdict out;
  out.classification = classify_pair(spec.generator(0), spec.generator(1));
  out.p2 = out.classification.p2();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  out.p1 = true;
  out.max_normalized = -1.0;
  for (int s = 0; s < samples; ++s) {
    const double theta = angle(rng);
    Eigen::Vector4d u;
    for (int i = 0; i < 4; ++i) u(i) = gauss(rng);
    u /= u.norm();
    BlockDiagForm form;
    const MetricSpec red = adapted_spec(spec, theta, &form);
    const double t_cut = 2.0 * std::numbers::pi / form.moduli[0];
    const double v = std::abs(ExpMapJacobian(red, Covector{u, Eigen::Vector2d(1.0, 0.0)}).reduced(t_cut).normalized());
    if (v > out.max_normalized) {
      out.max_normalized = v;
      out.witness_u0 = u;
      out.witness_theta = theta;
    }
    if (v > tol) out.p1 = false;
  }
  if (out.p1 != out.p2) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "cut_equals_conjugate: sampled verdict P1=" << out.p1 << " disagrees with classify_pair ("
        << to_string(out.classification.kind) << "); witness theta=" << out.witness_theta << " u0=["
        << out.witness_u0.transpose() << "] normalized Jacobian=" << out.max_normalized;
    throw ConsistencyError(msg.str());
  }
  return out;
}

}  // namespace nilsynth
