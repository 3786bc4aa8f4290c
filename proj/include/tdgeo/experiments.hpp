#pragma once

// Spiral sweeps, spec-driven simulation runs and minimal SVG output.

#include "tdgeo/approximators.hpp"
#include "tdgeo/dynamics.hpp"
#include "tdgeo/mrp.hpp"
#include "tdgeo/mrp_io.hpp"
#include "tdgeo/verify.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tdgeo {

// ---------------------------------------------------------------------------
// Spiral experiment on the three-state delta-chain

struct SpiralConfig {
  std::vector<double> deltas{0.0, 0.1, 0.2, 0.23};
  std::vector<int> ks{1, 2, 3};
  double gamma = 0.9;
  double epsilon_fraction = 0.5;
  double t_max = 1e9;
  /// A run counts as Converged once ||V - V*||_mu falls below this fraction
  /// of its initial value.
  double value_tolerance_fraction = 0.01;
  int record_every = 1;
};

struct SpiralRun {
  std::string sweep;  // "delta" or "k"
  double delta = 0.0;
  int k = 1;
  TerminalStatus status = TerminalStatus::HorizonReached;
  bool complex_pair = true;
  std::optional<std::string> error;
  Trajectory trajectory;
  /// 2 x m coordinates of V(theta(t)) in the orthonormalized span{U1, U2}.
  Matrix plane;
};

struct SpiralResult {
  SpiralConfig config;
  std::shared_ptr<DivergentApproximator> approx;
  Matrix basis;  // n x 2
  std::vector<SpiralRun> runs;
};

inline IntegratorConfig spiral_integrator(const SpiralConfig& cfg) {
  IntegratorConfig ic;
  ic.t_max = cfg.t_max;
  ic.record_every = cfg.record_every;
  ic.value_tolerance_fraction = cfg.value_tolerance_fraction;
  return ic;
}

inline SpiralRun spiral_run(const SpiralResult& base, const std::string& sweep, double delta, int k) {
  SpiralRun run;
  run.sweep = sweep;
  run.delta = delta;
  run.k = k;
  try {
    const auto g = td_matrix(spiral_chain(delta, base.config.gamma));
    const auto ka = k_step_matrix(g, k);
    run.complex_pair = !linalg::complex_eigenpairs(ka.A).empty();
    if (!run.complex_pair)
      run.error = "NoComplexEigenvalue: the drive matrix has a real spectrum at this point";
    const auto sys = k_step_vector_field(base.approx, g, k);
    run.trajectory = integrate(sys, base.approx->initial_theta(), spiral_integrator(base.config));
    run.status = run.trajectory.status;
    run.plane.resize(2, static_cast<Index>(run.trajectory.size()));
    for (std::size_t i = 0; i < run.trajectory.size(); ++i)
      run.plane.col(static_cast<Index>(i)) = base.basis.transpose() * run.trajectory.values[i];
  } catch (const Error& e) {
    run.error = std::string(e.what());
  }
  return run;
}

/// The approximator is constructed once from the delta = 0 geometry and then
/// driven by the TD field of every sweep point.
inline SpiralResult run_spiral(const SpiralConfig& cfg = {}) {
  require(!cfg.deltas.empty() || !cfg.ks.empty(), ErrorCode::InvalidArgument,
          "spiral sweep is empty");
  SpiralResult res;
  res.config = cfg;
  const auto g0 = td_matrix(spiral_chain(0.0, cfg.gamma));
  res.approx = construct_divergent(g0, cfg.epsilon_fraction);
  res.basis = linalg::orthonormalize(res.approx->parts().U);
  for (double d : cfg.deltas) res.runs.push_back(spiral_run(res, "delta", d, 1));
  for (int k : cfg.ks) res.runs.push_back(spiral_run(res, "k", 0.0, k));
  return res;
}

inline std::string spiral_run_name(const SpiralRun& r) {
  char buf[64];
  if (r.sweep == "delta")
    std::snprintf(buf, sizeof(buf), "spiral_delta=%g", r.delta);
  else
    std::snprintf(buf, sizeof(buf), "spiral_k=%d", r.k);
  return buf;
}

inline std::string plane_csv(const Trajectory& traj, const Matrix& plane) {
  std::string out = "t,x,y\n";
  for (Index i = 0; i < plane.cols(); ++i)
    out += format_cell(traj.times[static_cast<std::size_t>(i)]) + "," + format_cell(plane(0, i)) +
           "," + format_cell(plane(1, i)) + "\n";
  return out;
}

inline nlohmann::json spiral_summary(const SpiralResult& res) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : res.runs) {
    nlohmann::json j = {{"name", spiral_run_name(r)},
                        {"sweep", r.sweep},
                        {"delta", r.delta},
                        {"k", r.k},
                        {"complex_pair", r.complex_pair}};
    if (r.trajectory.size() > 0) {
      j["status"] = to_string(r.status);
      j["t_end"] = r.trajectory.times.back();
      j["final_norm_mu"] = io::number_or_inf(r.trajectory.diagnostics.back().norm_mu);
      j["initial_norm_mu"] = r.trajectory.diagnostics.front().norm_mu;
    } else {
      j["status"] = "Error";
    }
    if (r.error) j["note"] = *r.error;
    runs.push_back(j);
  }
  return {{"gamma", res.config.gamma},
          {"epsilon_fraction", res.config.epsilon_fraction},
          {"t_max", res.config.t_max},
          {"value_tolerance_fraction", res.config.value_tolerance_fraction},
          {"approximator", res.approx->to_json()},
          {"plane_basis", io::to_json(res.basis)},
          {"runs", runs}};
}

// ---------------------------------------------------------------------------
// SVG

struct SvgPath {
  std::vector<std::pair<double, double>> points;
  std::string color = "#c0392b";
};

/// Arrows for a vector-field grid and polylines for paths, in one square
/// viewport fitted to the data.
inline std::string render_svg(const std::vector<GridPoint>& grid, const std::vector<SvgPath>& paths,
                              int size = 480) {
  double xmin = kInfinity, xmax = -kInfinity, ymin = kInfinity, ymax = -kInfinity;
  const auto extend = [&](double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  };
  for (const auto& p : grid) extend(p.x, p.y);
  for (const auto& path : paths)
    for (const auto& [x, y] : path.points) extend(x, y);
  if (!(xmin < xmax)) xmin -= 1.0, xmax += 1.0;
  if (!(ymin < ymax)) ymin -= 1.0, ymax += 1.0;
  const double pad = 20.0;
  const double span = std::max(xmax - xmin, ymax - ymin);
  const double scale = (size - 2 * pad) / span;
  const auto px = [&](double x) { return pad + (x - xmin) * scale; };
  const auto py = [&](double y) { return size - pad - (y - ymin) * scale; };
  const auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(size) +
                    "\" height=\"" + std::to_string(size) + "\">\n";
  out += "<defs><marker id=\"h\" markerWidth=\"6\" markerHeight=\"6\" refX=\"5\" refY=\"3\" "
         "orient=\"auto\"><path d=\"M0,0 L6,3 L0,6 z\" fill=\"#555\"/></marker></defs>\n";
  double fmax = 0.0;
  for (const auto& p : grid) fmax = std::max(fmax, std::hypot(p.fx, p.fy));
  if (!grid.empty() && fmax > 0.0) {
    // Longest arrow spans roughly one grid cell.
    const double cell = span / std::max(2.0, std::sqrt(static_cast<double>(grid.size())));
    for (const auto& p : grid) {
      const double x2 = p.x + p.fx / fmax * cell * 0.9;
      const double y2 = p.y + p.fy / fmax * cell * 0.9;
      out += "<line x1=\"" + num(px(p.x)) + "\" y1=\"" + num(py(p.y)) + "\" x2=\"" + num(px(x2)) +
             "\" y2=\"" + num(py(y2)) + "\" stroke=\"#555\" marker-end=\"url(#h)\"/>\n";
    }
  }
  for (const auto& path : paths) {
    out += "<polyline fill=\"none\" stroke=\"" + path.color + "\" points=\"";
    for (const auto& [x, y] : path.points)
      if (std::isfinite(x) && std::isfinite(y)) out += num(px(x)) + "," + num(py(y)) + " ";
    out += "\"/>\n";
  }
  return out + "</svg>\n";
}

inline SvgPath plane_path(const Matrix& plane, const std::string& color) {
  SvgPath p;
  p.color = color;
  for (Index i = 0; i < plane.cols(); ++i) p.points.emplace_back(plane(0, i), plane(1, i));
  return p;
}

// ---------------------------------------------------------------------------
// Spec-driven simulation

struct ExperimentSpec {
  std::string name;
  nlohmann::json mrp;
  nlohmann::json approximator;
  nlohmann::json integrator = nlohmann::json::object();
  std::optional<Vector> theta0;
  bool zero_reward = false;
  /// Ordered sweep axes: delta, gamma, k, seed.
  std::vector<std::pair<std::string, std::vector<double>>> sweep;
  std::string output_dir = ".";
};

inline const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes{"delta", "gamma", "k", "seed"};
  return axes;
}

inline ExperimentSpec experiment_spec_from_json(const nlohmann::json& j) {
  require(j.is_object(), ErrorCode::ParseError, "experiment spec must be an object");
  for (const char* key : {"name", "mrp", "approximator"})
    require(j.contains(key), ErrorCode::ParseError, std::string("spec is missing \"") + key + "\"");
  ExperimentSpec s;
  s.name = j["name"].get<std::string>();
  require(!s.name.empty() && s.name.find('/') == std::string::npos, ErrorCode::InvalidArgument,
          "spec name must be a nonempty file stem");
  s.mrp = j["mrp"];
  s.approximator = j["approximator"];
  require(s.approximator.is_object(), ErrorCode::ParseError, "approximator must be an object");
  if (j.contains("integrator")) s.integrator = j["integrator"];
  if (j.contains("theta0")) s.theta0 = io::vector_from_json(j["theta0"], "theta0");
  s.zero_reward = j.value("zero_reward", false);
  s.output_dir = j.value("output_dir", std::string("."));
  if (j.contains("sweep")) {
    const auto& sw = j["sweep"];
    require(sw.is_object(), ErrorCode::ParseError, "sweep must be an object");
    for (const auto& [key, _] : sw.items())
      require(std::find(sweep_axes().begin(), sweep_axes().end(), key) != sweep_axes().end(),
              ErrorCode::InvalidArgument, "unknown sweep axis \"" + key + "\"");
    for (const auto& axis : sweep_axes())
      if (sw.contains(axis)) {
        const Vector v = io::vector_from_json(sw[axis], "sweep." + axis);
        require(v.size() > 0, ErrorCode::InvalidArgument, "sweep." + axis + " must be nonempty");
        s.sweep.emplace_back(axis, std::vector<double>(v.data(), v.data() + v.size()));
      }
  }
  return s;
}

using SweepPoint = std::vector<std::pair<std::string, double>>;

inline std::vector<SweepPoint> sweep_points(const ExperimentSpec& s) {
  std::vector<SweepPoint> pts{{}};
  for (const auto& [axis, values] : s.sweep) {
    std::vector<SweepPoint> next;
    for (const auto& p : pts)
      for (double v : values) {
        auto q = p;
        q.emplace_back(axis, v);
        next.push_back(std::move(q));
      }
    pts = std::move(next);
  }
  return pts;
}

inline std::optional<double> sweep_value(const SweepPoint& p, const std::string& axis) {
  for (const auto& [k, v] : p)
    if (k == axis) return v;
  return std::nullopt;
}

/// MRP from {"file": path}, {"builder": "cycle" | "random", ...} or an inline
/// MRP document, with sweep overrides applied.
inline MarkovRewardProcess resolve_mrp(const nlohmann::json& j, const SweepPoint& p,
                                       const std::string& base_dir = ".") {
  const auto delta = sweep_value(p, "delta");
  const auto gamma = sweep_value(p, "gamma");
  const auto seed = sweep_value(p, "seed");
  std::optional<MarkovRewardProcess> m;
  if (j.contains("builder")) {
    const auto b = j["builder"].get<std::string>();
    if (b == "cycle") {
      m = cycle_mrp(j.value("n", Index{3}), delta.value_or(j.value("delta", 0.0)),
                    j.value("self_loop", 0.5), gamma.value_or(j.value("gamma", 0.9)));
    } else if (b == "random") {
      m = random_mrp(j.value("n", Index{4}), gamma.value_or(j.value("gamma", 0.9)),
                     seed ? static_cast<std::uint64_t>(*seed) : j.value("seed", std::uint64_t{0}));
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown MRP builder \"" + b + "\"");
    }
    require(!delta || b == "cycle", ErrorCode::InvalidArgument,
            "a delta sweep needs the cycle builder");
  } else {
    require(!delta, ErrorCode::InvalidArgument, "a delta sweep needs the cycle builder");
    if (j.contains("file")) {
      std::filesystem::path path = j["file"].get<std::string>();
      if (path.is_relative()) path = std::filesystem::path(base_dir) / path;
      m = io::load_mrp(path.string());
    } else {
      m = io::mrp_from_json(j);
    }
    if (gamma) m = m->with_gamma(*gamma);
  }
  return *m;
}

inline IntegratorConfig integrator_from_json(const nlohmann::json& j) {
  IntegratorConfig c;
  if (j.contains("method")) {
    const auto m = j["method"].get<std::string>();
    require(m == "rk4" || m == "rk45", ErrorCode::InvalidArgument, "method must be rk4 or rk45");
    c.method = m == "rk4" ? Method::RK4 : Method::RK45;
  }
  c.dt = j.value("dt", c.dt);
  c.rtol = j.value("rtol", c.rtol);
  c.atol = j.value("atol", c.atol);
  c.t_max = j.value("t_max", c.t_max);
  c.record_every = j.value("record_every", c.record_every);
  c.divergence_threshold = j.value("divergence_threshold", c.divergence_threshold);
  c.value_tolerance_fraction = j.value("value_tolerance_fraction", c.value_tolerance_fraction);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.validate();
  return c;
}

struct SimulationRun {
  std::string file;
  SweepPoint point;
  std::optional<Trajectory> trajectory;
  std::optional<std::string> error;
};

inline std::string sweep_file_stem(const std::string& name, const SweepPoint& p) {
  std::string out = name;
  for (const auto& [k, v] : p) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "_%s=%g", k.c_str(), v);
    out += buf;
  }
  return out;
}

inline SimulationRun simulate_point(const ExperimentSpec& s, const SweepPoint& p,
                                    const std::string& base_dir = ".") {
  SimulationRun run;
  run.point = p;
  run.file = sweep_file_stem(s.name, p) + ".csv";
  try {
    auto mrp = resolve_mrp(s.mrp, p, base_dir);
    if (s.zero_reward) mrp = mrp.with_reward(Vector(Vector::Zero(mrp.n())));
    const auto g = td_matrix(mrp);
    nlohmann::json aj = s.approximator;
    if (const auto seed = sweep_value(p, "seed")) aj["seed"] = static_cast<std::uint64_t>(*seed);
    const auto approx = approximator_from_json(aj, &g);
    const int k = static_cast<int>(sweep_value(p, "k").value_or(s.integrator.value("k", 1)));
    const auto sys = k_step_vector_field(approx, g, k);
    const Vector theta0 = s.theta0.value_or(approx->initial_theta());
    run.trajectory = integrate(sys, theta0, integrator_from_json(s.integrator));
  } catch (const Error& e) {
    run.error = std::string(e.what());
  }
  return run;
}

inline std::vector<SimulationRun> run_experiment(const ExperimentSpec& s,
                                                 const std::string& base_dir = ".") {
  std::vector<SimulationRun> runs;
  for (const auto& p : sweep_points(s)) runs.push_back(simulate_point(s, p, base_dir));
  return runs;
}

inline nlohmann::json experiment_summary(const ExperimentSpec& s,
                                         const std::vector<SimulationRun>& runs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : runs) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : r.point) params[k] = v;
    nlohmann::json j = {{"file", r.file}, {"params", params}};
    if (r.trajectory) {
      j["status"] = to_string(r.trajectory->status);
      j["t_end"] = r.trajectory->times.back();
      j["final_norm_mu"] = io::number_or_inf(r.trajectory->diagnostics.back().norm_mu);
      j["final_norm_mu_err"] = io::number_or_inf(r.trajectory->diagnostics.back().norm_mu_err);
    } else {
      j["status"] = "Error";
      j["error"] = *r.error;
    }
    arr.push_back(j);
  }
  return {{"name", s.name}, {"runs", arr}};
}

}  // namespace tdgeo
