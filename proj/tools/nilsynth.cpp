#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <nlohmann/json.hpp>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nilsynth/conjugate.hpp"
#include "nilsynth/errors.hpp"
#include "nilsynth/exponential_map.hpp"
#include "nilsynth/hausdorff_density.hpp"
#include "nilsynth/nilpotent_model.hpp"
#include "nilsynth/oracle.hpp"
#include "nilsynth/quaternion_so4.hpp"
#include "nilsynth/synthesis.hpp"

using nlohmann::json;
using namespace nilsynth;

namespace {

// A command result: scalar metadata plus a table. JSON carries both; CSV carries the table.
struct Output {
  json meta = json::object();
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;
};

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_json(std::ostream& os, const json& j) {
  switch (j.type()) {
    case json::value_t::object: {
      os << '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ',';
        first = false;
        os << json(it.key()).dump() << ':';
        write_json(os, it.value());
      }
      os << '}';
      break;
    }
    case json::value_t::array: {
      os << '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ',';
        write_json(os, j[i]);
      }
      os << ']';
      break;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      if (std::isfinite(v)) {
        os << format_number(v);
      } else {
        os << "null";  // JSON has no inf/nan
      }
      break;
    }
    default:
      os << j.dump();
  }
}

std::string csv_cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_number_float()) return format_number(v.get<double>());
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += (c == '"') ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
  return v.dump();
}

void emit(const Output& out, const std::string& format, std::ostream& os) {
  if (format == "csv") {
    for (std::size_t c = 0; c < out.columns.size(); ++c) os << (c ? "," : "") << out.columns[c];
    os << '\n';
    for (const auto& row : out.rows) {
      for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << csv_cell(row[c]);
      os << '\n';
    }
    return;
  }
  json doc = out.meta;
  json rows = json::array();
  for (const auto& row : out.rows) {
    json obj = json::object();
    for (std::size_t c = 0; c < row.size(); ++c) obj[out.columns[c]] = row[c];
    rows.push_back(obj);
  }
  doc["rows"] = rows;
  write_json(os, doc);
  os << '\n';
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Single-row table from metadata scalars, so CSV and JSON carry the same numbers.
void scalar_row(Output& out, const std::vector<std::string>& keys) {
  out.columns = keys;
  std::vector<json> row;
  for (const auto& k : keys) row.push_back(out.meta.at(k));
  out.rows.push_back(row);
}

struct Common {
  std::string spec_path;
  std::string format = "json";
  std::string output;
  std::uint64_t seed = 42;
  int threads = 0;
  bool normalize_spec = false;

  MetricSpec spec() const {
    const MetricSpec s = load_spec(spec_path);
    return normalize_spec ? normalize(s) : s;
  }
};

struct CovectorArgs {
  std::vector<double> u0, r;

  Covector get(const MetricSpec& spec) const {
    Covector c{to_eigen(u0), to_eigen(r)};
    check_covector(spec, c);
    require_unit(c, "covector");
    return c;
  }
};

void add_common(CLI::App* cmd, Common& c, bool needs_spec = true) {
  auto* opt = cmd->add_option("--spec", c.spec_path, "Spec file (JSON: {\"m\": int, \"L\": [matrix, ...]})");
  if (needs_spec) opt->required()->check(CLI::ExistingFile);
  cmd->add_flag("--normalize", c.normalize_spec, "Orthonormalize the generators before use");
}

void add_covector(CLI::App* cmd, CovectorArgs& a) {
  cmd->add_option("--u0", a.u0, "Horizontal covector part, comma separated, unit length")->required()->delimiter(',');
  cmd->add_option("--r", a.r, "Vertical covector part, comma separated")->required()->delimiter(',');
}

void add_quadrature(CLI::App* cmd, QuadratureConfig& q, std::string& mode) {
  cmd->add_option("--mode", mode, "tensor or monte_carlo")->check(CLI::IsMember({"tensor", "monte_carlo"}));
  cmd->add_option("--theta-nodes", q.theta_nodes, "Angular nodes")->check(CLI::Range(4, 1 << 20));
  cmd->add_option("--r-nodes", q.r_nodes, "Radial covector nodes")->check(CLI::Range(4, 1 << 16));
  cmd->add_option("--ball-nodes", q.ball_nodes, "Radial nodes of the 4-ball rule")->check(CLI::Range(1, 64));
  cmd->add_option("--mc-samples", q.mc_samples, "Monte Carlo draws")->check(CLI::Range(1000LL, 1LL << 40));
  cmd->add_option("--target-error", q.target_error, "Fail with exit 4 when the error estimate is larger");
}

Output cmd_geodesic(const Common& c, const CovectorArgs& ca, std::vector<double> times, double t_max, int samples,
                    bool include_cut) {
  const MetricSpec spec = c.spec();
  const Covector cov = ca.get(spec);
  const double tc = cut_time(spec, cov);
  if (times.empty()) {
    if (!(t_max > 0.0)) throw InputError("geodesic: give --t or a positive --t-max");
    if (samples < 2) throw InputError("geodesic: --samples must be at least 2");
    for (int i = 0; i < samples; ++i) times.push_back(t_max * i / (samples - 1));
  }
  if (include_cut && std::isfinite(tc)) times.push_back(tc);
  std::sort(times.begin(), times.end());
  for (double t : times)
    if (!(t >= 0.0) || !std::isfinite(t)) throw InputError("geodesic: times must be finite and nonnegative");
  const GeodesicFlow flow(spec, cov.r);
  Output out;
  out.meta["command"] = "geodesic";
  out.meta["cut_time"] = tc;
  out.columns = {"t"};
  for (int i = 1; i <= spec.rank(); ++i) out.columns.push_back("x" + std::to_string(i));
  for (int i = 1; i <= spec.corank(); ++i) out.columns.push_back("y" + std::to_string(i));
  out.columns.push_back("flag");
  for (double t : times) {
    const GeodesicPoint p = flow.evaluate(cov.u0, t);
    std::vector<json> row{t};
    for (int i = 0; i < p.x.size(); ++i) row.push_back(p.x(i));
    for (int i = 0; i < p.y.size(); ++i) row.push_back(p.y(i));
    std::string flag;
    if (std::isfinite(tc)) {
      if (std::abs(t - tc) <= 1e-12 * tc) {
        flag = "cut";
      } else if (t > tc) {
        flag = "post_cut";
      }
    }
    row.push_back(flag);
    out.rows.push_back(row);
  }
  return out;
}

Output cmd_cut_time(const Common& c, const CovectorArgs& ca) {
  const MetricSpec spec = c.spec();
  const Covector cov = ca.get(spec);
  Output out;
  out.meta["command"] = "cut-time";
  out.meta["cut_time"] = cut_time(spec, cov);
  out.meta["max_modulus"] = cov.r.norm() == 0.0 ? 0.0 : max_modulus(vertical_combination(spec, cov.r / cov.r.norm()));
  out.meta["r_norm"] = cov.r.norm();
  scalar_row(out, {"cut_time", "max_modulus", "r_norm"});
  return out;
}

Output cmd_maxwell(const Common& c, const CovectorArgs& ca) {
  const MetricSpec spec = c.spec();
  const Covector cov = ca.get(spec);
  const MaxwellPair mp = maxwell_partner(spec, cov);
  Output out;
  out.meta["command"] = "maxwell";
  out.meta["t_star"] = mp.t_star;
  out.meta["omega_tilde"] = mp.omega_tilde;
  out.meta["endpoint_gap"] = mp.endpoint_gap;
  out.meta["velocity_gap"] = mp.velocity_gap;
  out.meta["partner_u0"] = vec_json(mp.partner.u0);
  scalar_row(out, {"t_star", "omega_tilde", "endpoint_gap", "velocity_gap"});
  for (int i = 0; i < mp.partner.u0.size(); ++i) {
    out.columns.push_back("partner_u" + std::to_string(i + 1));
    out.rows[0].push_back(mp.partner.u0(i));
  }
  return out;
}

Output cmd_conjugate(const Common& c, const CovectorArgs& ca, double t_max, int samples) {
  const MetricSpec spec = c.spec();
  const Covector cov = ca.get(spec);
  const double tc = cut_time(spec, cov);
  if (!std::isfinite(tc)) throw InputError("conjugate: r = 0 has neither cut nor conjugate time");
  const double horizon = t_max > 0.0 ? t_max : 3.0 * tc;
  const auto tconj = first_conjugate_time(spec, cov, horizon, samples);
  Output out;
  out.meta["command"] = "conjugate";
  out.meta["cut_time"] = tc;
  out.meta["conjugate_time"] = tconj ? json(*tconj) : json(nullptr);
  out.meta["search_horizon"] = horizon;
  const ReducedFrame f = reduce_frame(spec, cov.r);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(spec.corank());
  r(0) = f.r_mod;
  out.meta["jacobian_at_cut"] =
      ExpMapJacobian(rotate_spec(spec, f.theta), Covector{cov.u0, r}).reduced(tc).normalized();
  scalar_row(out, {"cut_time", "conjugate_time", "search_horizon", "jacobian_at_cut"});
  return out;
}

Output cmd_classify(const Common& c, int samples, double tol) {
  const MetricSpec spec = c.spec();
  if (spec.rank() != 4 || spec.corank() != 2) throw InputError("classify: requires m = 4, k = 2");
  const CutConjugateVerdict v = cut_equals_conjugate(spec, samples, c.seed, tol);
  Output out;
  out.meta["command"] = "classify";
  out.meta["kind"] = to_string(v.classification.kind);
  out.meta["sigma_class"] = to_string(v.classification.sigma_class);
  json angles = json::array();
  for (double a : v.classification.double_eigenvalue_angles) angles.push_back(a);
  out.meta["double_eigenvalue_angles"] = angles;
  out.meta["p1"] = v.p1;
  out.meta["p2"] = v.p2;
  out.meta["max_normalized_jacobian"] = v.max_normalized;
  scalar_row(out, {"kind", "sigma_class", "p1", "p2", "max_normalized_jacobian"});
  return out;
}

Output cmd_distance(const Common& c, const std::vector<double>& x, const std::vector<double>& y,
                    const CovectorArgs& ca, double t, bool oracle) {
  const MetricSpec spec = c.spec();
  GeodesicPoint target;
  if (!x.empty() || !y.empty()) {
    target = GeodesicPoint{to_eigen(x), to_eigen(y), 0.0};
  } else {
    if (ca.u0.empty() || !(t >= 0.0)) throw InputError("distance: give --x/--y or --u0/--r/--t");
    target = geodesic_closed_form(spec, ca.get(spec), t);
  }
  if (target.x.size() != spec.rank() || target.y.size() != spec.corank())
    throw InputError("distance: target has the wrong shape");
  Output out;
  out.meta["command"] = "distance";
  const ShootingResult s = shoot_pre_cut(spec, target);
  out.meta["distance"] = s.time;
  out.meta["shooting_residual"] = s.residual;
  out.meta["covector_u0"] = vec_json(s.covector.u0);
  out.meta["covector_r"] = vec_json(s.covector.r);
  std::vector<std::string> keys{"distance", "shooting_residual"};
  if (oracle) {
    OracleConfig oc;
    oc.seed = c.seed;
    oc.threads = c.threads;
    const OracleResult o = brute_force_distance(spec, target, oc);
    out.meta["oracle_distance"] = o.distance;
    out.meta["oracle_residual"] = o.residual;
    keys.push_back("oracle_distance");
    keys.push_back("oracle_residual");
  }
  scalar_row(out, keys);
  return out;
}

QuadratureConfig finish_quadrature(QuadratureConfig q, const std::string& mode, const Common& c) {
  q.mode = mode == "monte_carlo" ? QuadratureMode::MonteCarlo : QuadratureMode::Tensor;
  q.seed = c.seed;
  q.threads = c.threads;
  return q;
}

Output cmd_volume(const Common& c, const QuadratureConfig& q, const char* name) {
  const MetricSpec spec = c.spec();
  const VolumeResult v = nilpotent_ball_volume(spec, q);
  Output out;
  out.meta["command"] = name;
  out.meta["mode"] = to_string(q.mode);
  out.meta["volume"] = v.value;
  out.meta["error_estimate"] = v.error_estimate;
  out.meta["nodes_used"] = v.nodes_used;
  out.meta["density"] = density_from_volume(spec, v.value);
  out.meta["homogeneous_dimension"] = homogeneous_dimension(spec);
  if (std::string(name) == "density") {
    scalar_row(out, {"density", "volume", "error_estimate", "homogeneous_dimension"});
  } else {
    scalar_row(out, {"volume", "error_estimate", "nodes_used", "density"});
  }
  return out;
}

Output cmd_sweep(const Common& c, const std::string& base_path, const std::string& dir_path, double p_min,
                 double p_max, int points, const QuadratureConfig& q) {
  if (points < 3) throw InputError("sweep: --points must be at least 3");
  if (!(p_max > p_min)) throw InputError("sweep: need --p-max > --p-min");
  const MetricSpec base = load_spec(base_path);
  const std::vector<SkewMatrix> dir = generators_from_json(read_spec_json(dir_path));
  if (static_cast<int>(dir.size()) != base.corank() || dir.front().dim() != base.rank())
    throw InputError("sweep: base and direction specs differ in shape");
  // Family p -> normalize(base + p * direction), generator by generator.
  auto family = [&](double p) {
    std::vector<SkewMatrix> g;
    for (int h = 0; h < base.corank(); ++h) g.push_back(base.generator(h) + p * dir[h]);
    return normalize(MetricSpec(std::move(g)));
  };
  std::vector<double> grid;
  for (int i = 0; i < points; ++i) grid.push_back(p_min + (p_max - p_min) * i / (points - 1));
  const auto rows = family_sweep(family, grid, q);
  Output out;
  out.meta["command"] = "sweep";
  out.columns = {"parameter", "V", "dV_dp", "sigma_class", "flags"};
  for (const auto& r : rows) out.rows.push_back({r.parameter, r.volume, r.dV_dp, to_string(r.sigma_class), r.flags});
  (void)c;
  return out;
}

Output cmd_report(const Common& c, int n_samples, int verdict_samples, double tol) {
  const MetricSpec spec = c.spec();
  if (n_samples < 1) throw InputError("report: --samples must be positive");
  const int m = spec.rank(), k = spec.corank();
  Output out;
  out.meta["command"] = "report";
  out.meta["seed"] = c.seed;
  if (m == 4 && k == 2) {
    const CutConjugateVerdict v = cut_equals_conjugate(spec, verdict_samples, c.seed, tol);
    out.meta["kind"] = to_string(v.classification.kind);
    out.meta["sigma_class"] = to_string(v.classification.sigma_class);
    out.meta["p1"] = v.p1;
    out.meta["p2"] = v.p2;
    out.meta["max_normalized_jacobian"] = v.max_normalized;
  }
  out.columns = {"sample"};
  for (int i = 1; i <= m; ++i) out.columns.push_back("u" + std::to_string(i));
  for (int i = 1; i <= k; ++i) out.columns.push_back("r" + std::to_string(i));
  for (const char* s : {"cut_time", "conjugate_time", "maxwell_omega", "maxwell_endpoint_gap"}) out.columns.push_back(s);
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int s = 0; s < n_samples; ++s) {
    Covector cov{Eigen::VectorXd(m), Eigen::VectorXd(k)};
    for (int i = 0; i < m; ++i) cov.u0(i) = g(rng);
    for (int i = 0; i < k; ++i) cov.r(i) = g(rng);
    cov.u0 /= cov.u0.norm();
    std::vector<json> row{s};
    for (int i = 0; i < m; ++i) row.push_back(cov.u0(i));
    for (int i = 0; i < k; ++i) row.push_back(cov.r(i));
    const double tc = cut_time(spec, cov);
    row.push_back(tc);
    const auto tconj = first_conjugate_time(spec, cov, 3.0 * tc, 256);
    row.push_back(tconj ? json(*tconj) : json(nullptr));
    try {
      const MaxwellPair mp = maxwell_partner(spec, cov);
      row.push_back(mp.omega_tilde);
      row.push_back(mp.endpoint_gap);
    } catch (const InputError&) {
      row.push_back(nullptr);  // degenerate top block: no nontrivial partner
      row.push_back(nullptr);
    }
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal synthesis, conjugate times and ball volumes for 2-step nilpotent sub-Riemannian structures"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--format", common.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--output", common.output, "Output file (default stdout)");
  app.add_option("--seed", common.seed, "Random seed");
  app.add_option("--threads", common.threads, "Worker threads (default NILSYNTH_THREADS or all cores)")
      ->check(CLI::Range(0, 4096));

  CovectorArgs cov;
  std::vector<double> times, tx, ty;
  double t_max = 0.0, t_single = -1.0, tol = kJacobianZeroTolerance, p_min = -0.4, p_max = 0.4;
  int samples = 101, conj_samples = 512, verdict_samples = 64, points = 64;
  bool include_cut = false, oracle = false;
  QuadratureConfig quad;
  std::string mode = "tensor", base_path, dir_path;

  auto* geo = app.add_subcommand("geodesic", "Sample a geodesic from the origin");
  add_common(geo, common);
  add_covector(geo, cov);
  geo->add_option("--t", times, "Times, comma separated")->delimiter(',');
  geo->add_option("--t-max", t_max, "Uniform grid end (with --samples)");
  geo->add_option("--samples", samples, "Uniform grid size");
  geo->add_flag("--include-cut", include_cut, "Add a row at the cut time");

  auto* cut = app.add_subcommand("cut-time", "Cut time of a covector");
  add_common(cut, common);
  add_covector(cut, cov);

  auto* mx = app.add_subcommand("maxwell", "Maxwell partner at the cut time");
  add_common(mx, common);
  add_covector(mx, cov);

  auto* conj = app.add_subcommand("conjugate", "First conjugate time");
  add_common(conj, common);
  add_covector(conj, cov);
  conj->add_option("--t-max", t_max, "Search horizon (default 3 x cut time)");
  conj->add_option("--samples", conj_samples, "Scan resolution")->check(CLI::Range(8, 1 << 20));

  auto* cls = app.add_subcommand("classify", "Pair classification and cut = conjugate verdict (m = 4, k = 2)");
  add_common(cls, common);
  cls->add_option("--samples", verdict_samples, "Sampled (u0, theta) pairs")->check(CLI::Range(1, 1 << 20));
  cls->add_option("--tol", tol, "Normalized Jacobian zero tolerance");

  auto* dist = app.add_subcommand("distance", "Distance to a target in the pre-cut domain");
  add_common(dist, common);
  dist->add_option("--x", tx, "Target x, comma separated")->delimiter(',');
  dist->add_option("--y", ty, "Target y, comma separated")->delimiter(',');
  dist->add_option("--u0", cov.u0, "Or: covector u0 of a geodesic target")->delimiter(',');
  dist->add_option("--r", cov.r, "Or: covector r of a geodesic target")->delimiter(',');
  dist->add_option("--t", t_single, "Or: time along that geodesic");
  dist->add_flag("--oracle", oracle, "Also run the brute-force control oracle");

  auto* vol = app.add_subcommand("volume", "Nilpotent unit ball volume (m = 4, k = 2, normalized)");
  add_common(vol, common);
  add_quadrature(vol, quad, mode);

  auto* den = app.add_subcommand("density", "Spherical Hausdorff density 2^(2n-m) / V");
  add_common(den, common);
  add_quadrature(den, quad, mode);

  auto* sw = app.add_subcommand("sweep", "V and dV/dp along p -> normalize(base + p direction)");
  sw->add_option("--base", base_path, "Spec at p = 0")->required()->check(CLI::ExistingFile);
  sw->add_option("--direction", dir_path, "Spec added per unit p")->required()->check(CLI::ExistingFile);
  sw->add_option("--p-min", p_min, "Grid start");
  sw->add_option("--p-max", p_max, "Grid end");
  sw->add_option("--points", points, "Grid size");
  add_quadrature(sw, quad, mode);

  auto* rep = app.add_subcommand("report", "Per-sample synthesis report");
  add_common(rep, common);
  rep->add_option("--samples", samples, "Random covectors");
  rep->add_option("--verdict-samples", verdict_samples, "Samples for the cut = conjugate verdict");
  rep->add_option("--tol", tol, "Normalized Jacobian zero tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    Output out;
    if (*geo) out = cmd_geodesic(common, cov, times, t_max, samples, include_cut);
    else if (*cut) out = cmd_cut_time(common, cov);
    else if (*mx) out = cmd_maxwell(common, cov);
    else if (*conj) out = cmd_conjugate(common, cov, t_max, conj_samples);
    else if (*cls) out = cmd_classify(common, verdict_samples, tol);
    else if (*dist) out = cmd_distance(common, tx, ty, cov, t_single, oracle);
    else if (*vol) out = cmd_volume(common, finish_quadrature(quad, mode, common), "volume");
    else if (*den) out = cmd_volume(common, finish_quadrature(quad, mode, common), "density");
    else if (*sw) out = cmd_sweep(common, base_path, dir_path, p_min, p_max, points, finish_quadrature(quad, mode, common));
    else if (*rep) out = cmd_report(common, rep->count("--samples") ? samples : 16, verdict_samples, tol);

    if (common.output.empty()) {
      emit(out, common.format, std::cout);
    } else {
      std::ofstream f(common.output);
      if (!f) throw InputError("cannot open output file '" + common.output + "'");
      emit(out, common.format, f);
    }
    return 0;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const ConsistencyError& e) {
    std::cerr << "consistency error: " << e.what() << '\n';
    return 3;
  } catch (const ConvergenceError& e) {
    std::cerr << "convergence error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
}
