#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nilsynth/detail/parallel.hpp"
#include "nilsynth/errors.hpp"
#include "nilsynth/exponential_map.hpp"
#include "nilsynth/nilpotent_model.hpp"
#include "nilsynth/quaternion_so4.hpp"

namespace nilsynth {

enum class QuadratureMode { Tensor, MonteCarlo };

inline const char* to_string(QuadratureMode m) { return m == QuadratureMode::Tensor ? "tensor" : "monte_carlo"; }

struct QuadratureConfig {
  int theta_nodes = 64;  // total angular nodes, split into Gauss-Legendre panels
  int r_nodes = 16;
  int ball_nodes = 4;  // radial nodes of the 4-ball rule
  long long mc_samples = 1000000;
  QuadratureMode mode = QuadratureMode::Tensor;
  std::uint64_t seed = 42;
  int threads = 0;  // 0: NILSYNTH_THREADS or hardware concurrency
  double target_error = 0.0;  // > 0: ConvergenceError when the estimate exceeds it

  void validate() const {
    if (theta_nodes < 4 || r_nodes < 4 || ball_nodes < 1) throw InputError("quadrature: node counts too small");
    if (mode == QuadratureMode::MonteCarlo && mc_samples < 1000) throw InputError("quadrature: mc_samples < 1000");
  }
};

struct VolumeResult {
  double value = 0.0;
  double error_estimate = 0.0;
  long long nodes_used = 0;
};

inline constexpr double kNegativeJacobianTolerance = 1e-7;

namespace detail {

struct Rule {
  std::vector<double> x, w;
};

/// Golub-Welsch for the Jacobi weight (1-x)^alpha (1+x)^beta on [-1, 1].
inline Rule gauss_jacobi(int n, double alpha, double beta) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
  const double ab = alpha + beta;
  for (int k = 0; k < n; ++k) {
    const double d = 2.0 * k + ab;
    t(k, k) = k == 0 ? (beta - alpha) / (ab + 2.0) : (beta * beta - alpha * alpha) / (d * (d + 2.0));
    if (k + 1 < n) {
      const double j = k + 1.0, dj = 2.0 * j + ab;
      const double off = std::sqrt(4.0 * j * (j + alpha) * (j + beta) * (j + ab) / (dj * dj * (dj + 1.0) * (dj - 1.0)));
      t(k, k + 1) = t(k + 1, k) = off;
    }
  }
  const double mu0 = std::pow(2.0, ab + 1.0) * std::tgamma(alpha + 1.0) * std::tgamma(beta + 1.0) / std::tgamma(ab + 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
  Rule r;
  for (int k = 0; k < n; ++k) {
    r.x.push_back(es.eigenvalues()(k));
    const double v = es.eigenvectors()(0, k);
    r.w.push_back(mu0 * v * v);
  }
  return r;
}

inline Rule gauss_legendre(int n, double lo, double hi) {
  Rule g = gauss_jacobi(n, 0.0, 0.0);
  const double h = 0.5 * (hi - lo);
  for (int k = 0; k < n; ++k) {
    g.x[k] = lo + h * (g.x[k] + 1.0);
    g.w[k] *= h;
  }
  return g;
}

/// Points and weights on the unit 4-ball: radial Gauss-Jacobi (weight rho^3)
/// times the 24-cell vertices, a spherical 5-design on S^3.
struct BallRule {
  std::vector<Eigen::Vector4d> u;
  std::vector<double> w;
};

inline BallRule ball_rule(int radial) {
  std::vector<Eigen::Vector4d> sphere;
  for (int i = 0; i < 4; ++i)
    for (double s : {1.0, -1.0}) {
      Eigen::Vector4d v = Eigen::Vector4d::Zero();
      v(i) = s;
      sphere.push_back(v);
    }
  for (int mask = 0; mask < 16; ++mask) {
    Eigen::Vector4d v;
    for (int i = 0; i < 4; ++i) v(i) = (mask >> i & 1) ? -0.5 : 0.5;
    sphere.push_back(v);
  }
  // int_0^1 rho^3 g(rho) = (1/16) int_{-1}^{1} (1+x)^3 g((1+x)/2) dx
  const Rule rad = gauss_jacobi(radial, 0.0, 3.0);
  const double sphere_w = 2.0 * std::numbers::pi * std::numbers::pi / static_cast<double>(sphere.size());
  BallRule b;
  for (int a = 0; a < radial; ++a) {
    const double rho = 0.5 * (rad.x[a] + 1.0), wr = rad.w[a] / 16.0;
    for (const auto& s : sphere) {
      b.u.push_back(rho * s);
      b.w.push_back(wr * sphere_w);
    }
  }
  return b;
}

/// Largest modulus of L_theta = cos L1 + sin L2 (m = 4): |q(theta)| + |q^(theta)|.
inline double max_modulus_theta(const QuatDecomp& d1, const QuatDecomp& d2, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return (c * d1.q + s * d2.q).norm() + (c * d1.q_hat + s * d2.q_hat).norm();
}

/// Angles in [0, 2 pi) minimizing |c v1 + s v2| when that minimum is isolated.
inline void minimizing_angles(const Eigen::Vector3d& v1, const Eigen::Vector3d& v2, std::vector<double>& out) {
  Eigen::Matrix2d g;
  g << v1.dot(v1), v1.dot(v2), v1.dot(v2), v2.dot(v2);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(g);
  const double spread = es.eigenvalues()(1) - es.eigenvalues()(0);
  if (spread <= 1e-12 * std::max(1.0, es.eigenvalues()(1))) return;  // |.| constant in theta
  const Eigen::Vector2d e = es.eigenvectors().col(0);
  double a = std::atan2(e(1), e(0));
  if (a < 0.0) a += 2.0 * std::numbers::pi;
  out.push_back(a);
  out.push_back(std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi));
}

/// Panel edges on [0, 2 pi]: breakpoints at the minima of |q(theta)| and |q^(theta)|
/// (the double-eigenvalue angles when those minima vanish), with geometric
/// grading towards each breakpoint.
inline std::vector<double> theta_panels(const QuatDecomp& d1, const QuatDecomp& d2, int panels) {
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> bp;
  minimizing_angles(d1.q, d2.q, bp);
  minimizing_angles(d1.q_hat, d2.q_hat, bp);
  std::sort(bp.begin(), bp.end());
  std::vector<double> uniq;
  for (double b : bp)
    if (uniq.empty() || b - uniq.back() > 1e-12) uniq.push_back(b);
  if (uniq.size() > 1 && uniq.front() + two_pi - uniq.back() <= 1e-12) uniq.pop_back();
  std::vector<double> edges;
  if (uniq.empty()) {
    for (int i = 0; i <= panels; ++i) edges.push_back(two_pi * i / panels);
    return edges;
  }
  // Walk the circle from the first breakpoint; shift back into [0, 2 pi] at the end.
  constexpr double kGrade = 0.25;
  constexpr int kLevels = 4;
  const double start = uniq.front();
  std::vector<double> cuts;
  for (std::size_t i = 0; i < uniq.size(); ++i) {
    const double lo = uniq[i], hi = (i + 1 < uniq.size()) ? uniq[i + 1] : start + two_pi;
    const double len = hi - lo;
    const int inner = std::max(2, static_cast<int>(std::lround(panels * len / two_pi)));
    std::vector<double> s = {0.0};
    for (int g = kLevels; g >= 1; --g) s.push_back(0.5 * std::pow(kGrade, g) / inner * 2.0);
    const double a = s.back(), b = 1.0 - a;
    for (int j = 1; j < inner; ++j) s.push_back(a + (b - a) * j / inner);
    for (int g = 1; g <= kLevels; ++g) s.push_back(1.0 - 0.5 * std::pow(kGrade, g) / inner * 2.0);
    std::sort(s.begin(), s.end());
    for (double v : s) cuts.push_back(lo + len * v);
  }
  cuts.push_back(start + two_pi);
  // Rotate so the partition covers [0, 2 pi] exactly.
  for (double c : cuts) {
    const double v = c >= two_pi ? c - two_pi : c;
    edges.push_back(v);
  }
  edges.push_back(0.0);
  edges.push_back(two_pi);
  std::sort(edges.begin(), edges.end());
  std::vector<double> clean;
  for (double e : edges)
    if (clean.empty() || e - clean.back() > 1e-13) clean.push_back(e);
  clean.back() = two_pi;
  return clean;
}

/// Unit-time Jacobian of (u, r1, r2) -> E at a fixed r, in Cartesian r.
class UnitJacobian {
 public:
  UnitJacobian(const MetricSpec& spec, const Eigen::Vector2d& r) : base_(GeodesicFlow(spec, r).snapshot(1.0, true)) {
    const double eps = std::numeric_limits<double>::epsilon();
    for (int j = 0; j < 2; ++j) {
      h_[j] = std::cbrt(eps) * std::max(1.0, std::abs(r(j)));
      Eigen::Vector2d rp = r, rm = r;
      rp(j) += h_[j];
      rm(j) -= h_[j];
      plus_[j] = GeodesicFlow(spec, rp).snapshot(1.0).C;
      minus_[j] = GeodesicFlow(spec, rm).snapshot(1.0).C;
    }
  }

  /// Determinant and the floored Hadamard scale, as in the conjugate-time test.
  std::pair<double, double> operator()(const Eigen::Vector4d& u) const {
    Eigen::Matrix<double, 6, 6> j;
    j.topLeftCorner<4, 4>() = base_.X;
    for (int h = 0; h < 2; ++h) j.block<1, 4>(4 + h, 0) = ((base_.C[h] + base_.C[h].transpose()) * u).transpose();
    for (int c = 0; c < 2; ++c) {
      j.block<4, 1>(0, 4 + c) = base_.dX_dr[c] * u;
      for (int h = 0; h < 2; ++h) {
        j(4 + h, 4 + c) = (u.dot(plus_[c][h] * u) - u.dot(minus_[c][h] * u)) / (2.0 * h_[c]);
      }
    }
    const Eigen::Matrix<double, 6, 1> norms = j.colwise().norm().transpose();
    const double floor = std::sqrt(std::numeric_limits<double>::epsilon()) * norms.maxCoeff();
    double scale = 1.0;
    for (int c = 0; c < 6; ++c) scale *= std::max(norms(c), floor);
    return {j.partialPivLu().determinant(), scale};
  }

 private:
  FlowSnapshot base_;
  std::array<std::vector<Eigen::MatrixXd>, 2> plus_, minus_;
  std::array<double, 2> h_{};
};

inline void require_volume_spec(const MetricSpec& spec, const char* who) {
  if (spec.rank() != 4 || spec.corank() != 2) throw InputError(std::string(who) + ": requires m = 4, k = 2");
}

/// Orientation of the exponential map in (u, r1, r2): sign of J at a small interior covector.
inline double orientation(const MetricSpec& spec) {
  const UnitJacobian jac(spec, Eigen::Vector2d(1e-3, 0.0));
  const double v = jac(Eigen::Vector4d(0.5, 0.5, 0.5, 0.5)).first;
  return v >= 0.0 ? 1.0 : -1.0;
}

inline void check_sign(double normalized, double theta, double r, const Eigen::Vector4d& u) {
  if (normalized < -kNegativeJacobianTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "volume: negative Jacobian " << normalized << " at theta=" << theta << " r=" << r << " u=[" << u.transpose()
        << "]; the integration domain extends past the conjugate locus";
    throw ConsistencyError(msg.str());
  }
}

/// f(theta, r) * r: ball integral of the oriented Jacobian times the polar factor.
inline double polar_integrand(const MetricSpec& spec, const BallRule& ball, double sign, double theta, double r,
                              bool check) {
  const UnitJacobian jac(spec, Eigen::Vector2d(r * std::cos(theta), r * std::sin(theta)));
  std::vector<double> terms(ball.u.size());
  for (std::size_t i = 0; i < ball.u.size(); ++i) {
    const auto [v, scale] = jac(ball.u[i]);
    if (check) check_sign(sign * v / scale, theta, r, ball.u[i]);
    terms[i] = ball.w[i] * sign * v;
  }
  return r * pairwise_sum(terms);
}

struct ThetaNode {
  double theta, weight, lo, hi;  // r runs over [lo, hi]
};

/// Tensor quadrature of int_theta int_{lo(theta)}^{hi(theta)} f(theta, r) r dr.
inline double tensor_sum(const MetricSpec& spec, const std::vector<ThetaNode>& nodes, int r_nodes, int ball_nodes,
                         int threads, long long* count, bool check = true) {
  const BallRule ball = ball_rule(ball_nodes);
  const double sign = orientation(spec);
  const Rule unit = gauss_legendre(r_nodes, 0.0, 1.0);
  const int n = static_cast<int>(nodes.size()) * r_nodes;
  std::vector<double> cells(n, 0.0);
  parallel_for(n, threads, [&](int idx) {
    const ThetaNode& tn = nodes[idx / r_nodes];
    const int k = idx % r_nodes;
    const double len = tn.hi - tn.lo;
    if (len == 0.0) return;
    const double r = tn.lo + len * unit.x[k];
    cells[idx] = tn.weight * len * unit.w[k] * polar_integrand(spec, ball, sign, tn.theta, r, check);
  });
  if (count) *count += static_cast<long long>(n) * static_cast<long long>(ball.u.size());
  return pairwise_sum(cells);
}

inline std::vector<ThetaNode> theta_nodes(const MetricSpec& spec, int theta_nodes_total, int order,
                                          const std::function<std::pair<double, double>(double)>& range,
                                          const MetricSpec* other = nullptr) {
  const QuatDecomp d1 = decompose(spec.generator(0)), d2 = decompose(spec.generator(1));
  const int panels = std::max(1, theta_nodes_total / 8);
  std::vector<double> edges = theta_panels(d1, d2, panels);
  if (other) {
    const std::vector<double> more =
        theta_panels(decompose(other->generator(0)), decompose(other->generator(1)), panels);
    edges.insert(edges.end(), more.begin(), more.end());
    std::sort(edges.begin(), edges.end());
    std::vector<double> clean;
    for (double e : edges)
      if (clean.empty() || e - clean.back() > 1e-13) clean.push_back(e);
    clean.back() = 2.0 * std::numbers::pi;
    edges = clean;
  }
  std::vector<ThetaNode> out;
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    const Rule g = gauss_legendre(order, edges[p], edges[p + 1]);
    for (int k = 0; k < order; ++k) {
      const auto [lo, hi] = range(g.x[k]);
      out.push_back({g.x[k], g.w[k], lo, hi});
    }
  }
  return out;
}

inline double cut_radius(const QuatDecomp& d1, const QuatDecomp& d2, double theta) {
  const double s = max_modulus_theta(d1, d2, theta);
  if (s <= 0.0) throw InputError("volume: L_theta vanishes for some theta");
  return 2.0 * std::numbers::pi / s;
}

inline VolumeResult tensor_volume(const MetricSpec& spec, const QuadratureConfig& cfg) {
  const QuatDecomp d1 = decompose(spec.generator(0)), d2 = decompose(spec.generator(1));
  auto range = [&](double th) { return std::pair<double, double>{0.0, cut_radius(d1, d2, th)}; };
  const int threads = resolve_threads(cfg.threads);
  VolumeResult out;
  const double fine = tensor_sum(spec, theta_nodes(spec, cfg.theta_nodes, 8, range), cfg.r_nodes, cfg.ball_nodes,
                                 threads, &out.nodes_used);
  const double coarse = tensor_sum(spec, theta_nodes(spec, cfg.theta_nodes, 4, range), std::max(2, cfg.r_nodes / 2),
                                   cfg.ball_nodes, threads, &out.nodes_used);
  out.value = fine;
  out.error_estimate = std::abs(fine - coarse);
  return out;
}

inline VolumeResult monte_carlo_volume(const MetricSpec& spec, const QuadratureConfig& cfg) {
  const QuatDecomp d1 = decompose(spec.generator(0)), d2 = decompose(spec.generator(1));
  double r_box = 0.0;
  for (int i = 0; i < 4096; ++i) r_box = std::max(r_box, cut_radius(d1, d2, 2.0 * std::numbers::pi * i / 4096));
  r_box *= 1.02;  // A is Lipschitz; the margin covers the grid gap
  const double sign = orientation(spec);
  constexpr long long kChunk = 4096;
  const long long chunks = (cfg.mc_samples + kChunk - 1) / kChunk;
  std::vector<double> sums(chunks, 0.0), sqs(chunks, 0.0);
  std::vector<long long> accepted(chunks, 0);
  parallel_for(static_cast<int>(chunks), resolve_threads(cfg.threads), [&](int c) {
    std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(c)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const long long n = std::min(kChunk, cfg.mc_samples - c * kChunk);
    for (long long s = 0; s < n; ++s) {
      Eigen::Vector4d u;
      for (int i = 0; i < 4; ++i) u(i) = unit(rng);
      const Eigen::Vector2d r(r_box * unit(rng), r_box * unit(rng));
      if (u.squaredNorm() > 1.0) continue;
      const double th = std::atan2(r(1), r(0));
      if (r.norm() > cut_radius(d1, d2, th)) continue;
      const auto [v, scale] = UnitJacobian(spec, r)(u);
      check_sign(sign * v / scale, th, r.norm(), u);
      sums[c] += sign * v;
      sqs[c] += v * v;
      ++accepted[c];
    }
  });
  const double n = static_cast<double>(cfg.mc_samples);
  const double box = 16.0 * 4.0 * r_box * r_box;
  const double mean = pairwise_sum(sums) / n;
  const double var = std::max(0.0, pairwise_sum(sqs) / n - mean * mean);
  VolumeResult out;
  out.value = box * mean;
  out.error_estimate = 3.0 * box * std::sqrt(var / n);
  for (long long a : accepted) out.nodes_used += a;
  return out;
}

inline void check_target(const VolumeResult& v, const QuadratureConfig& cfg) {
  if (cfg.target_error > 0.0 && v.error_estimate > cfg.target_error) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "volume: error estimate " << v.error_estimate << " exceeds target " << cfg.target_error << " (V=" << v.value
        << ")";
    throw ConvergenceError(msg.str());
  }
}

}  // namespace detail

/// Ball volume without the normalization check; used for scaling studies.
inline VolumeResult lebesgue_ball_volume(const MetricSpec& spec, const QuadratureConfig& cfg = {}) {
  detail::require_volume_spec(spec, "lebesgue_ball_volume");
  cfg.validate();
  VolumeResult v = cfg.mode == QuadratureMode::Tensor ? detail::tensor_volume(spec, cfg)
                                                      : detail::monte_carlo_volume(spec, cfg);
  if (!(v.value > 0.0)) throw ConsistencyError("volume: non-positive result");
  detail::check_target(v, cfg);
  return v;
}

/// Popp volume of the nilpotent unit ball; the generators must be orthonormal.
inline VolumeResult nilpotent_ball_volume(const MetricSpec& spec, const QuadratureConfig& cfg = {}) {
  detail::require_volume_spec(spec, "nilpotent_ball_volume");
  if (!spec.normalized()) throw InputError("nilpotent_ball_volume: spec is not normalized (use normalize())");
  return lebesgue_ball_volume(spec, cfg);
}

/// Homogeneous dimension 2n - m.
inline int homogeneous_dimension(const MetricSpec& spec) { return 2 * spec.dimension() - spec.rank(); }

inline double density_from_volume(const MetricSpec& spec, double volume) {
  return std::ldexp(1.0, homogeneous_dimension(spec)) / volume;
}

inline double density(const MetricSpec& spec, const QuadratureConfig& cfg = {}) {
  return density_from_volume(spec, nilpotent_ball_volume(spec, cfg).value);
}

/// W(p) = int_theta int_{A(theta, p0)}^{A(theta, p)} f(theta, r, p) r dr, oriented.
/// Where A(theta, p) < A(theta, p0) the band lies past the cut of p, so the
/// sign guard of the volume integral does not apply.
inline VolumeResult w_component(const MetricSpec& spec_p0, const MetricSpec& spec_p, const QuadratureConfig& cfg = {}) {
  detail::require_volume_spec(spec_p0, "w_component");
  detail::require_volume_spec(spec_p, "w_component");
  cfg.validate();
  const QuatDecomp a1 = decompose(spec_p0.generator(0)), a2 = decompose(spec_p0.generator(1));
  const QuatDecomp b1 = decompose(spec_p.generator(0)), b2 = decompose(spec_p.generator(1));
  auto range = [&](double th) {
    return std::pair<double, double>{detail::cut_radius(a1, a2, th), detail::cut_radius(b1, b2, th)};
  };
  const int threads = detail::resolve_threads(cfg.threads);
  VolumeResult out;
  const double fine = detail::tensor_sum(spec_p, detail::theta_nodes(spec_p, cfg.theta_nodes, 8, range, &spec_p0),
                                         cfg.r_nodes, cfg.ball_nodes, threads, &out.nodes_used, false);
  const double coarse =
      detail::tensor_sum(spec_p, detail::theta_nodes(spec_p, cfg.theta_nodes, 4, range, &spec_p0),
                         std::max(2, cfg.r_nodes / 2), cfg.ball_nodes, threads, &out.nodes_used, false);
  out.value = fine;
  out.error_estimate = std::abs(fine - coarse);
  return out;
}

struct SweepRow {
  double parameter = 0.0;
  double volume = 0.0;
  double error_estimate = 0.0;
  double dV_dp = 0.0;
  double dV_dp_noise = 0.0;
  SigmaClass sigma_class = SigmaClass::NonCritical;
  std::string flags;
};

/// Relative jump threshold used by family_sweep.
inline constexpr double kJumpFactor = 5.0;

/// Centered differences of V and jump flags, in place. A row is flagged
/// "jump" when the change of dV/dp to the next row exceeds kJumpFactor times
/// the local scale: the median change over the neighbouring rows plus the
/// quadrature noise of the differences.
inline void differentiate_and_flag(std::vector<SweepRow>& rows) {
  const std::size_t n = rows.size();
  if (n < 3) throw InputError("family_sweep: need at least 3 grid points");
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1, hi = i + 1 == n ? n - 1 : i + 1;
    const double h = rows[hi].parameter - rows[lo].parameter;
    rows[i].dV_dp = (rows[hi].volume - rows[lo].volume) / h;
    rows[i].dV_dp_noise = (rows[hi].error_estimate + rows[lo].error_estimate) / h;
  }
  std::vector<double> delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) delta[i] = std::abs(rows[i + 1].dV_dp - rows[i].dV_dp);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    std::vector<double> window;
    for (std::size_t j = (i >= 3 ? i - 3 : 0); j <= std::min(n - 2, i + 3); ++j)
      if (j != i) window.push_back(delta[j]);
    std::nth_element(window.begin(), window.begin() + window.size() / 2, window.end());
    const double local = window[window.size() / 2] + rows[i].dV_dp_noise + rows[i + 1].dV_dp_noise;
    if (delta[i] > kJumpFactor * local) rows[i].flags = "jump";
  }
}

/// V along a one-parameter family, with dV/dp, sigma class and jump flags per row.
inline std::vector<SweepRow> family_sweep(const std::function<MetricSpec(double)>& family,
                                          const std::vector<double>& grid, const QuadratureConfig& cfg = {}) {
  if (grid.size() < 3) throw InputError("family_sweep: need at least 3 grid points");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw InputError("family_sweep: grid must be strictly increasing");
  const std::size_t n = grid.size();
  std::vector<SweepRow> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    const MetricSpec s = family(grid[i]);
    const VolumeResult v = nilpotent_ball_volume(s, cfg);
    rows[i].parameter = grid[i];
    rows[i].volume = v.value;
    rows[i].error_estimate = v.error_estimate;
    rows[i].sigma_class = classify_pair(s.generator(0), s.generator(1)).sigma_class;
  }
  differentiate_and_flag(rows);
  return rows;
}

}  // namespace nilsynth
