#pragma once

// Expected TD(0) / k-step ODEs in parameter space and their integration.

#include "tdgeo/approximators.hpp"
#include "tdgeo/mrp.hpp"
#include "tdgeo/mrp_io.hpp"
#include "tdgeo/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tdgeo {

enum class Method { RK4, RK45 };

enum class TerminalStatus { Converged, HorizonReached, Diverged };

inline std::string to_string(TerminalStatus s) {
  switch (s) {
    case TerminalStatus::Converged: return "Converged";
    case TerminalStatus::HorizonReached: return "HorizonReached";
    case TerminalStatus::Diverged: return "Diverged";
  }
  return "Unknown";
}

namespace diag {
enum Flag : unsigned {
  MuError = 1u << 0,
  Lyapunov = 1u << 1,
  ThetaNorm = 1u << 2,
  Kappa = 1u << 3,
  All = MuError | Lyapunov | ThetaNorm | Kappa,
};
}  // namespace diag

struct IntegratorConfig {
  Method method = Method::RK45;
  double dt = 1e-2;  // fixed step for RK4, initial step for RK45
  double rtol = 1e-8;
  double atol = 1e-10;
  double t_max = 100.0;
  int record_every = 1;  // accepted steps between recorded samples
  double divergence_threshold = 1e6;
  double convergence_tolerance = 1e-12;  // on ||field||
  int convergence_patience = 3;          // consecutive recorded samples
  /// When positive, ||V - V*||_mu below this fraction of its initial value
  /// (for `convergence_patience` records) also counts as Converged. Needed
  /// for flows that approach V* only asymptotically in theta.
  double value_tolerance_fraction = 0.0;
  double min_step = 1e-14;
  std::uint64_t max_steps = 2'000'000;
  unsigned diagnostics = diag::All;

  void validate() const {
    require(dt > 0.0 && rtol > 0.0 && atol > 0.0 && t_max > 0.0 && record_every >= 1,
            ErrorCode::InvalidArgument, "integrator: dt, rtol, atol, t_max must be positive");
  }
};

/// The vector field -J(th)^T A_k (V(th) - V*). k = 1 is plain TD(0).
class TdSystem {
 public:
  TdSystem(ApproximatorPtr approx, TDGeometry geometry, int k = 1)
      : approx_(std::move(approx)), geometry_(std::move(geometry)), k_(k) {
    require(approx_ != nullptr, ErrorCode::InvalidArgument, "missing approximator");
    require(approx_->state_dim() == geometry_.n, ErrorCode::ShapeMismatch,
            "approximator state dimension differs from the MRP");
    const auto km = k_step_matrix(geometry_, k_);
    drive_ = km.A;
    drive_sym_ = km.S;
  }

  Vector operator()(const Vector& theta) const {
    const Vector v = approx_->value(theta);
    return -(approx_->jacobian(theta).transpose() * (drive_ * (v - geometry_.V_star)));
  }

  const Approximator& approximator() const { return *approx_; }
  const ApproximatorPtr& approximator_ptr() const { return approx_; }
  const TDGeometry& geometry() const { return geometry_; }
  /// A_k and its symmetric part (the Lyapunov metric).
  const Matrix& drive() const { return drive_; }
  const Matrix& drive_symmetric() const { return drive_sym_; }
  int k() const { return k_; }

 private:
  ApproximatorPtr approx_;
  TDGeometry geometry_;
  int k_;
  Matrix drive_;
  Matrix drive_sym_;
};

inline TdSystem td_vector_field(ApproximatorPtr approx, const TDGeometry& g) {
  return {std::move(approx), g, 1};
}

inline TdSystem k_step_vector_field(ApproximatorPtr approx, const TDGeometry& g, int k) {
  return {std::move(approx), g, k};
}

struct Diagnostics {
  double norm_mu = 0.0;        // ||V||_mu
  double norm_mu_err = 0.0;    // ||V - V*||_mu
  double lyapunov = 0.0;       // ||V - V*||^2 in the symmetric part of the drive
  double theta_norm_sq = 0.0;  // ||th||^2
  double theta_norm_sq_rate = 0.0;  // d||th||^2/dt = 2 th^T th_dot
  double kappa = 0.0;          // condition number of J J^T
  double field_norm = 0.0;
};

inline Diagnostics diagnostics_at(const TdSystem& sys, const Vector& theta,
                                  unsigned flags = diag::All) {
  const auto& g = sys.geometry();
  const Vector v = sys.approximator().value(theta);
  const Vector err = v - g.V_star;
  const Vector field = sys(theta);
  Diagnostics d;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  d.norm_mu = mu_norm(g.mu, v);
  d.norm_mu_err = (flags & diag::MuError) ? mu_norm(g.mu, err) : nan;
  d.lyapunov = (flags & diag::Lyapunov) ? err.dot(sys.drive_symmetric() * err) : nan;
  d.theta_norm_sq = (flags & diag::ThetaNorm) ? theta.squaredNorm() : nan;
  d.theta_norm_sq_rate = 2.0 * theta.dot(field);
  d.kappa = (flags & diag::Kappa)
                ? tangent_kernel_condition(sys.approximator().jacobian(theta))
                : nan;
  d.field_norm = field.norm();
  return d;
}

inline Diagnostics diagnostics_at(ApproximatorPtr approx, const TDGeometry& g,
                                  const Vector& theta) {
  return diagnostics_at(td_vector_field(std::move(approx), g), theta);
}

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> thetas;
  std::vector<Vector> values;
  std::vector<Diagnostics> diagnostics;
  TerminalStatus status = TerminalStatus::HorizonReached;
  std::uint64_t accepted_steps = 0;
  std::uint64_t rejected_steps = 0;

  std::size_t size() const { return times.size(); }

  template <class Fn>
  std::vector<double> series(Fn&& pick) const {
    std::vector<double> out;
    out.reserve(diagnostics.size());
    for (const auto& d : diagnostics) out.push_back(pick(d));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Generic explicit Runge-Kutta engine

enum class ObserverAction { Continue, Stop };

struct OdeResult {
  double t = 0.0;
  Vector y;
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;
  bool stopped = false;
};

/// Integrates y' = f(y) from t = 0. `observe(t, y, is_record)` is called for
/// the initial state and after every accepted step; returning Stop ends the
/// integration. Fixed-step RK4 lands exactly on t_max.
template <class F, class Observer>
OdeResult integrate_ode(F&& f, Vector y0, const IntegratorConfig& cfg, Observer&& observe) {
  cfg.validate();
  OdeResult res;
  res.y = std::move(y0);
  require(res.y.allFinite(), ErrorCode::NonFiniteState, "initial state is not finite");
  if (observe(0.0, res.y, true) == ObserverAction::Stop) {
    res.stopped = true;
    return res;
  }
  const auto after_step = [&](bool last) {
    ++res.accepted;
    require(res.y.allFinite(), ErrorCode::NonFiniteState, "state became non-finite");
    const bool rec = last || (res.accepted % static_cast<std::uint64_t>(cfg.record_every) == 0);
    return observe(res.t, res.y, rec);
  };

  if (cfg.method == Method::RK4) {
    const auto steps = static_cast<std::uint64_t>(std::ceil(cfg.t_max / cfg.dt - 1e-9));
    for (std::uint64_t i = 0; i < steps; ++i) {
      const double h = std::min(cfg.dt, cfg.t_max - res.t);
      const Vector k1 = f(res.y);
      const Vector k2 = f(Vector(res.y + 0.5 * h * k1));
      const Vector k3 = f(Vector(res.y + 0.5 * h * k2));
      const Vector k4 = f(Vector(res.y + h * k3));
      res.y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      res.t = (i + 1 == steps) ? cfg.t_max : res.t + h;
      if (after_step(i + 1 == steps) == ObserverAction::Stop) {
        res.stopped = true;
        return res;
      }
    }
    return res;
  }

  // Dormand-Prince 5(4) with first-same-as-last reuse.
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                   a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                   a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                   b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                   e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  (void)c2, (void)c3, (void)c4, (void)c5;

  double h = std::min(cfg.dt, cfg.t_max);
  Vector k1 = f(res.y);
  require(k1.allFinite(), ErrorCode::NonFiniteState, "field is not finite at the initial state");
  std::uint64_t total = 0;
  while (res.t < cfg.t_max) {
    require(++total <= cfg.max_steps, ErrorCode::StepFailure, "exceeded the step budget");
    const bool last_try = res.t + h >= cfg.t_max;
    if (last_try) h = cfg.t_max - res.t;
    const Vector& y = res.y;
    bool finite = true;
    Vector k2, k3, k4, k5, k6, y5, k7;
    try {
      k2 = f(Vector(y + h * (a21 * k1)));
      k3 = f(Vector(y + h * (a31 * k1 + a32 * k2)));
      k4 = f(Vector(y + h * (a41 * k1 + a42 * k2 + a43 * k3)));
      k5 = f(Vector(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)));
      k6 = f(Vector(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)));
      y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      k7 = f(y5);
      finite = y5.allFinite() && k7.allFinite();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DivergedBeyondRange) throw;
      finite = false;
    }
    double err = kInfinity;
    if (finite) {
      const Vector est = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      const Eigen::ArrayXd scale =
          cfg.atol + cfg.rtol * y.cwiseAbs().cwiseMax(y5.cwiseAbs()).array();
      err = (est.array().abs() / scale).maxCoeff();
    }
    if (err <= 1.0) {
      res.t = last_try ? cfg.t_max : res.t + h;
      res.y = std::move(y5);
      k1 = std::move(k7);
      const double grow = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      h *= grow;
      if (after_step(res.t >= cfg.t_max) == ObserverAction::Stop) {
        res.stopped = true;
        return res;
      }
    } else {
      ++res.rejected;
      h *= std::isfinite(err) ? std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.5) : 0.1;
      require(h >= cfg.min_step, ErrorCode::StepFailure, "adaptive step underflow");
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// TD integration with diagnostics

/// Integrates the TD ODE, recording theta, V(theta) and diagnostics. Stops on
/// ||V||_mu > divergence_threshold (Diverged) or on sustained convergence.
/// The optional field replaces sys as the right-hand side; diagnostics still use sys.
inline Trajectory integrate(const TdSystem& sys, const Vector& theta0,
                            const IntegratorConfig& cfg,
                            const std::function<Vector(const Vector&)>& field = {}) {
  require(theta0.size() == sys.approximator().param_dim(), ErrorCode::ShapeMismatch,
          "theta0 has the wrong dimension");
  Trajectory traj;
  int small_field = 0;
  int small_value = 0;
  double initial_err = -1.0;

  auto observe = [&](double t, const Vector& theta, bool is_record) {
    const Vector v = sys.approximator().value(theta);
    const double nmu = mu_norm(sys.geometry().mu, v);
    const bool diverged = !(nmu <= cfg.divergence_threshold);
    if (!is_record && !diverged) return ObserverAction::Continue;

    Diagnostics d = diagnostics_at(sys, theta, cfg.diagnostics | diag::MuError);
    if (initial_err < 0.0) initial_err = d.norm_mu_err;
    traj.times.push_back(t);
    traj.thetas.push_back(theta);
    traj.values.push_back(v);
    traj.diagnostics.push_back(d);
    if (diverged) {
      traj.status = TerminalStatus::Diverged;
      return ObserverAction::Stop;
    }
    small_field = d.field_norm < cfg.convergence_tolerance ? small_field + 1 : 0;
    if (cfg.value_tolerance_fraction > 0.0)
      small_value =
          d.norm_mu_err < cfg.value_tolerance_fraction * initial_err ? small_value + 1 : 0;
    if (small_field >= cfg.convergence_patience || small_value >= cfg.convergence_patience) {
      traj.status = TerminalStatus::Converged;
      return ObserverAction::Stop;
    }
    return ObserverAction::Continue;
  };

  const auto rhs = field ? field : [&sys](const Vector& th) { return sys(th); };
  const auto res = integrate_ode(rhs, theta0, cfg, observe);
  traj.accepted_steps = res.accepted;
  traj.rejected_steps = res.rejected;
  if (traj.times.empty() || traj.times.back() != res.t) {
    // Make sure the terminal state is on record.
    observe(res.t, res.y, true);
  }
  return traj;
}

/// Minimum of `values` over the final `tail_fraction` of the time window.
inline double liminf_estimate(std::span<const double> times, std::span<const double> values,
                              double tail_fraction = 0.5) {
  require(times.size() == values.size() && !times.empty(), ErrorCode::ShapeMismatch,
          "times and values must be nonempty and aligned");
  const double start = times.back() - tail_fraction * (times.back() - times.front());
  double best = kInfinity;
  std::size_t count = 0;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (times[i] >= start) {
      best = std::min(best, values[i]);
      ++count;
    }
  require(count >= 10, ErrorCode::TooFewSamples, "tail window holds fewer than 10 samples");
  return best;
}

/// Maximum over the same tail window (limsup surrogate).
inline double limsup_estimate(std::span<const double> times, std::span<const double> values,
                              double tail_fraction = 0.5) {
  std::vector<double> neg(values.begin(), values.end());
  for (double& x : neg) x = -x;
  return -liminf_estimate(times, neg, tail_fraction);
}

// ---------------------------------------------------------------------------
// Function-space vector field on a plane through V*

struct GridSpec {
  double xmin = -1.0, xmax = 1.0, ymin = -1.0, ymax = 1.0;
  int nx = 21, ny = 21;
};

struct GridPoint {
  double x, y, fx, fy;
};

/// Evaluates -A(V - V*) at V = V* + x b1 + y b2 and projects onto the plane.
/// `plane_basis` is n x 2 with orthonormal columns.
inline std::vector<GridPoint> vector_field_grid(const TDGeometry& g, const Matrix& plane_basis,
                                                const GridSpec& spec, const Matrix* drive = nullptr) {
  require(plane_basis.rows() == g.n && plane_basis.cols() == 2, ErrorCode::ShapeMismatch,
          "plane basis must be n x 2");
  require((plane_basis.transpose() * plane_basis - Matrix::Identity(2, 2)).norm() < 1e-8,
          ErrorCode::InvalidArgument, "plane basis must be orthonormal");
  require(spec.nx >= 1 && spec.ny >= 1, ErrorCode::InvalidArgument, "empty grid");
  const Matrix& a = drive ? *drive : g.A;
  const Matrix reduced = -(plane_basis.transpose() * a * plane_basis);
  std::vector<GridPoint> out;
  out.reserve(static_cast<std::size_t>(spec.nx * spec.ny));
  for (int j = 0; j < spec.ny; ++j) {
    const double y = spec.ny == 1 ? spec.ymin
                                  : spec.ymin + (spec.ymax - spec.ymin) * j / (spec.ny - 1);
    for (int i = 0; i < spec.nx; ++i) {
      const double x = spec.nx == 1 ? spec.xmin
                                    : spec.xmin + (spec.xmax - spec.xmin) * i / (spec.nx - 1);
      const Eigen::Vector2d f = reduced * Eigen::Vector2d(x, y);
      out.push_back({x, y, f(0), f(1)});
    }
  }
  return out;
}

/// Orthonormal plane spanned by the real and imaginary parts of the leading
/// complex eigenvector of A; falls back to the first two coordinate axes for
/// a real spectrum.
inline Matrix spiral_plane(const TDGeometry& g) {
  const auto pairs = linalg::complex_eigenpairs(g.A);
  Matrix u(g.n, 2);
  if (pairs.empty()) {
    u.setZero();
    u(0, 0) = 1.0;
    u(1, 1) = 1.0;
    return u;
  }
  u.col(0) = pairs.front().vector.real();
  u.col(1) = pairs.front().vector.imag();
  return linalg::orthonormalize(u);
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_cell(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return io::format_double(x);
}

inline std::string trajectory_csv(const Trajectory& traj) {
  std::string out = "t";
  const Index d = traj.thetas.empty() ? 0 : traj.thetas.front().size();
  const Index n = traj.values.empty() ? 0 : traj.values.front().size();
  for (Index i = 0; i < d; ++i) out += ",theta_" + std::to_string(i);
  for (Index i = 0; i < n; ++i) out += ",v_" + std::to_string(i);
  out += ",norm_mu,norm_mu_err,lyapunov,theta_norm_sq,kappa,status\n";
  const std::string status = to_string(traj.status);
  for (std::size_t r = 0; r < traj.size(); ++r) {
    out += format_cell(traj.times[r]);
    for (Index i = 0; i < d; ++i) out += "," + format_cell(traj.thetas[r](i));
    for (Index i = 0; i < n; ++i) out += "," + format_cell(traj.values[r](i));
    const auto& dg = traj.diagnostics[r];
    out += "," + format_cell(dg.norm_mu) + "," + format_cell(dg.norm_mu_err) + "," +
           format_cell(dg.lyapunov) + "," + format_cell(dg.theta_norm_sq) + "," +
           format_cell(dg.kappa) + "," + status + "\n";
  }
  return out;
}

/// Times and V(theta) columns (v_0..v_{n-1}) of a trajectory CSV.
struct TrajectoryValues {
  std::vector<double> times;
  Matrix values;  // n x m
};

inline TrajectoryValues read_trajectory_csv(const std::string& text) {
  const auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return cells;
  };
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
    start = end + 1;
  }
  require(!lines.empty(), ErrorCode::ParseError, "trajectory CSV is empty");
  const auto header = split(lines.front());
  require(!header.empty() && header.front() == "t", ErrorCode::ParseError,
          "trajectory CSV must start with a t column");
  std::vector<std::size_t> vcols;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i].rfind("v_", 0) == 0) vcols.push_back(i);
  require(!vcols.empty(), ErrorCode::ParseError, "trajectory CSV has no v_ columns");
  TrajectoryValues out;
  out.values.resize(static_cast<Index>(vcols.size()), static_cast<Index>(lines.size() - 1));
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = split(lines[r]);
    require(cells.size() == header.size(), ErrorCode::ParseError,
            "trajectory CSV row " + std::to_string(r + 1) + " has the wrong number of cells");
    const auto num = [&](const std::string& c) {
      char* end = nullptr;
      const double x = std::strtod(c.c_str(), &end);
      require(end && *end == '\0' && !c.empty(), ErrorCode::ParseError,
              "bad number \"" + c + "\" on row " + std::to_string(r + 1));
      return x;
    };
    out.times.push_back(num(cells[0]));
    for (std::size_t k = 0; k < vcols.size(); ++k)
      out.values(static_cast<Index>(k), static_cast<Index>(r - 1)) = num(cells[vcols[k]]);
  }
  return out;
}

inline std::string grid_csv(const std::vector<GridPoint>& grid) {
  std::string out = "x,y,fx,fy\n";
  for (const auto& p : grid)
    out += format_cell(p.x) + "," + format_cell(p.y) + "," + format_cell(p.fx) + "," +
           format_cell(p.fy) + "\n";
  return out;
}

}  // namespace tdgeo
