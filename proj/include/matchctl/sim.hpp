#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "matchctl/ballbeam.hpp"
#include "matchctl/matching.hpp"

namespace matchctl::sim {

using matchctl::ClosedLoopSpec;
using matchctl::ConfigState;
using matchctl::LagrangianSystem;
using matchctl::MatrixXd;
using matchctl::VectorXd;

enum class ControllerMode { Continuous, Sampled };
enum class VelocityEstimator { Exact, ForwardDifference };
enum class TerminalStatus { Completed, Diverged, Error };

inline const char* to_string(TerminalStatus s) {
  switch (s) {
    case TerminalStatus::Completed:
      return "completed";
    case TerminalStatus::Diverged:
      return "diverged";
    case TerminalStatus::Error:
      return "error";
  }
  return "?";
}

/// State box whose exit aborts a run.
struct DivergenceBounds {
  VectorXd q_lo, q_hi, qd_lo, qd_hi;

  static DivergenceBounds none(int n) {
    const double inf = std::numeric_limits<double>::infinity();
    DivergenceBounds b;
    b.q_lo = VectorXd::Constant(n, -inf);
    b.q_hi = VectorXd::Constant(n, inf);
    b.qd_lo = VectorXd::Constant(n, -inf);
    b.qd_hi = VectorXd::Constant(n, inf);
    return b;
  }

  /// |s - s0*| <= 25, |theta| <= 0.6, |sdot| <= 50, |thetadot| <= 10.
  static DivergenceBounds ballbeam_default(double s0_star = 22.0) {
    DivergenceBounds b;
    b.q_lo = Eigen::Vector2d(s0_star - 25.0, -0.6);
    b.q_hi = Eigen::Vector2d(s0_star + 25.0, 0.6);
    b.qd_lo = Eigen::Vector2d(-50.0, -10.0);
    b.qd_hi = Eigen::Vector2d(50.0, 10.0);
    return b;
  }

  bool contains(const ConfigState& x) const {
    for (int k = 0; k < x.q.size(); ++k) {
      if (!(x.q[k] >= q_lo[k] && x.q[k] <= q_hi[k])) return false;
      if (!(x.qdot[k] >= qd_lo[k] && x.qdot[k] <= qd_hi[k])) return false;
    }
    return true;
  }
};

struct SimConfig {
  double dt = 1e-3;          // integrator micro-step, dimensionless time
  double duration = 10.0;    // total dimensionless time
  ControllerMode controller_mode = ControllerMode::Continuous;
  double sample_rate_hz = 300.0;  // physical sampling rate
  VelocityEstimator velocity_estimator = VelocityEstimator::ForwardDifference;
  double time_scale = 1.0;   // seconds per dimensionless time unit
  std::optional<ballbeam::MotorModel> motor;  // voltage chain when present
  std::optional<DivergenceBounds> divergence_bounds;
  bool enforce_domain = true;
  int record_stride = 1;

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("SimConfig: dt must be > 0");
    if (!(duration > 0.0)) throw ConfigError("SimConfig: duration must be > 0");
    if (controller_mode == ControllerMode::Sampled && !(sample_rate_hz > 0.0))
      throw ConfigError("SimConfig: sampled mode requires sample_rate_hz > 0");
    if (!(time_scale > 0.0))
      throw ConfigError("SimConfig: time_scale must be > 0");
    if (record_stride < 1)
      throw ConfigError("SimConfig: record_stride must be >= 1");
  }
};

struct TrajectoryRecord {
  double t = 0.0;
  VectorXd q, qdot;
  VectorXd u;          // applied control covector
  double v_in = 0.0;   // commanded voltage (0 when no motor model)
  double H_hat = 0.0;
  double H_hat_rate = 0.0;
  bool saturated = false;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  TerminalStatus status = TerminalStatus::Completed;
  std::string message;
};

/// Control law evaluated by the simulator. Return the full covector.
using Controller = std::function<VectorXd(double t, const ConfigState&)>;

inline Controller matched_controller(const LagrangianSystem& open,
                                     const ClosedLoopSpec& closed) {
  return [&open, &closed](double, const ConfigState& x) {
    return control_law(open, closed, x);
  };
}

inline Controller linear_controller(const LinearFeedback& fb,
                                    const VectorXd& q_eq) {
  return [fb, q_eq](double, const ConfigState& x) {
    return (fb.v + fb.a * (x.q - q_eq) + fb.b * x.qdot).eval();
  };
}

// ---------------------------------------------------------------------------
// Dynamics
// ---------------------------------------------------------------------------

/// Accelerations of g qddot + [jk,.] qd qd + C + dV = u.
struct Derivatives {
  VectorXd qdot;
  VectorXd qddot;
};

inline Derivatives dynamics_rhs(const LagrangianSystem& sys,
                                const ConfigState& x, const VectorXd& u) {
  const int n = sys.dim;
  const MatrixXd g = sys.metric.value(x.q);
  const Tensor3 first = christoffel_first(sys.metric, x.q);
  VectorXd quad(n);
  for (int r = 0; r < n; ++r) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        acc += first(r, j, k) * x.qdot[j] * x.qdot[k];
    quad[r] = acc;
  }
  const VectorXd C = sys.dissipation.value(x.q, x.qdot);
  const VectorXd dV = sys.potential.gradient(x.q);
  Eigen::FullPivLU<MatrixXd> lu(g);
  if (!lu.isInvertible())
    throw SingularMatrixError("dynamics_rhs: singular metric");
  Derivatives d;
  d.qdot = x.qdot;
  d.qddot = lu.solve(u - quad - C - dV);
  return d;
}

/// Classical RK4 step of the coupled (q, qdot) system; the controller is
/// evaluated at every stage (continuous mode) or supplied pre-held
/// (sampled mode wraps it in a constant).
inline ConfigState rk4_step(
    const LagrangianSystem& sys,
    const std::function<VectorXd(double, const ConfigState&)>& controller,
    const ConfigState& x, double t, double dt) {
  const auto f = [&](double tt, const ConfigState& xx) {
    return dynamics_rhs(sys, xx, controller(tt, xx));
  };
  const auto advance = [](const ConfigState& xx, const Derivatives& d,
                          double h) {
    return ConfigState((xx.q + h * d.qdot).eval(),
                       (xx.qdot + h * d.qddot).eval());
  };
  const Derivatives k1 = f(t, x);
  const Derivatives k2 = f(t + 0.5 * dt, advance(x, k1, 0.5 * dt));
  const Derivatives k3 = f(t + 0.5 * dt, advance(x, k2, 0.5 * dt));
  const Derivatives k4 = f(t + dt, advance(x, k3, dt));
  ConfigState out = x;
  out.q += (dt / 6.0) * (k1.qdot + 2 * k2.qdot + 2 * k3.qdot + k4.qdot);
  out.qdot += (dt / 6.0) * (k1.qddot + 2 * k2.qddot + 2 * k3.qddot + k4.qddot);
  if (!out.q.allFinite() || !out.qdot.allFinite())
    throw DomainError("rk4_step: non-finite state");
  return out;
}

namespace detail {

struct AppliedControl {
  VectorXd u;
  double v_in = 0.0;
  bool saturated = false;
};

/// Sends the actuated torque through the motor model when one is present:
/// the voltage is clamped and the effective torque recomputed from the
/// clamped voltage (torque is not clamped independently), and the
/// unactuated component is dropped (the servo drives theta only).
inline AppliedControl apply_motor(const std::optional<ballbeam::MotorModel>& m,
                                  const VectorXd& u_raw, double thetadot) {
  AppliedControl out;
  if (!m) {
    out.u = u_raw;
    return out;
  }
  const ballbeam::VoltageSample v =
      ballbeam::torque_to_voltage(*m, u_raw[1], thetadot);
  out.v_in = v.v_in;
  out.saturated = v.saturated;
  VectorXd u = VectorXd::Zero(u_raw.size());
  u[1] = v.saturated ? ballbeam::voltage_to_torque(*m, v.v_in, thetadot)
                     : u_raw[1];
  out.u = u;
  return out;
}

}  // namespace detail

/// Zero-order-hold sampling state: positions latched at the sample
/// instants, velocities replaced by the forward difference
/// (q_k - q_{k-1}) / dt_sample (zero at the first sample) when requested,
/// and the post-motor output held between samples.
class SampledController {
 public:
  SampledController(Controller inner, double sample_period,
                    VelocityEstimator estimator,
                    std::optional<ballbeam::MotorModel> motor)
      : inner_(std::move(inner)),
        period_(sample_period),
        estimator_(estimator),
        motor_(std::move(motor)) {}

  /// Called at every micro-step start; resamples when a sample instant
  /// has been reached.
  void maybe_resample(double t, const ConfigState& x) {
    if (initialized_ && t < next_sample_ - 1e-12) return;
    VectorXd qdot_est;
    if (estimator_ == VelocityEstimator::ForwardDifference) {
      qdot_est = initialized_ ? ((x.q - prev_q_) / period_).eval()
                              : VectorXd::Zero(x.q.size()).eval();
    } else {
      qdot_est = x.qdot;
    }
    const VectorXd u_raw = inner_(t, ConfigState(x.q, qdot_est));
    held_ = detail::apply_motor(motor_, u_raw,
                                qdot_est[qdot_est.size() - 1]);
    prev_q_ = x.q;
    next_sample_ = (initialized_ ? next_sample_ : t) + period_;
    initialized_ = true;
  }

  const detail::AppliedControl& current() const { return held_; }

 private:
  Controller inner_;
  double period_;
  VelocityEstimator estimator_;
  std::optional<ballbeam::MotorModel> motor_;
  bool initialized_ = false;
  double next_sample_ = 0.0;
  VectorXd prev_q_;
  detail::AppliedControl held_;
};

/// Integrates the closed loop. The controller output is passed through the
/// motor/saturation chain when a motor model is configured; HHat and its
/// rate are recorded from `closed` at every kept record. Terminates on
/// duration, divergence-box exit, domain exit, or evaluation failure; the
/// outcome is reported via the terminal status, never thrown.
inline Trajectory simulate(const LagrangianSystem& sys,
                           const ClosedLoopSpec& closed,
                           const Controller& raw_controller,
                           const SimConfig& config, const ConfigState& initial) {
  config.validate();
  Trajectory traj;
  const int total_steps =
      static_cast<int>(std::llround(config.duration / config.dt));

  std::optional<SampledController> sampler;
  if (config.controller_mode == ControllerMode::Sampled) {
    const double period = 1.0 / (config.sample_rate_hz * config.time_scale);
    sampler.emplace(raw_controller, period, config.velocity_estimator,
                    config.motor);
  }

  // Applied control at a stage: sampled mode returns the held value,
  // continuous mode sends the instantaneous law through the motor chain.
  const auto applied_control = [&](double t, const ConfigState& x) {
    if (sampler) return sampler->current().u;
    return detail::apply_motor(config.motor, raw_controller(t, x),
                               x.qdot[x.dim() - 1])
        .u;
  };

  const auto record = [&](double t, const ConfigState& x) {
    TrajectoryRecord r;
    r.t = t;
    r.q = x.q;
    r.qdot = x.qdot;
    const detail::AppliedControl ac =
        sampler ? sampler->current()
                : detail::apply_motor(config.motor, raw_controller(t, x),
                                      x.qdot[x.dim() - 1]);
    r.u = ac.u;
    r.v_in = ac.v_in;
    r.saturated = ac.saturated;
    const EnergySample e = closed_loop_energy(closed, x);
    r.H_hat = e.value;
    r.H_hat_rate = e.rate;
    traj.records.push_back(std::move(r));
  };

  ConfigState x = initial;
  double t = 0.0;
  try {
    if (config.enforce_domain && !sys.domain.contains(x.q)) {
      traj.status = TerminalStatus::Diverged;
      traj.message = "initial state outside domain";
      return traj;
    }
    if (sampler) sampler->maybe_resample(0.0, x);
    record(t, x);
    for (int step = 0; step < total_steps; ++step) {
      if (sampler) sampler->maybe_resample(t, x);
      x = rk4_step(sys, applied_control, x, t, config.dt);
      t = (step + 1) * config.dt;
      const bool in_domain = !config.enforce_domain || sys.domain.contains(x.q);
      const bool in_bounds =
          !config.divergence_bounds || config.divergence_bounds->contains(x);
      if (!in_domain || !in_bounds) {
        traj.status = TerminalStatus::Diverged;
        traj.message = in_domain ? "state left the divergence bounds"
                                 : "state left the domain";
        return traj;
      }
      if ((step + 1) % config.record_stride == 0 || step + 1 == total_steps)
        record(t, x);
    }
    traj.status = TerminalStatus::Completed;
  } catch (const DomainError& e) {
    traj.status = TerminalStatus::Diverged;
    traj.message = e.what();
  } catch (const KinematicBranchError& e) {
    traj.status = TerminalStatus::Diverged;
    traj.message = e.what();
  } catch (const SingularMatrixError& e) {
    traj.status = TerminalStatus::Diverged;
    traj.message = e.what();
  } catch (const std::exception& e) {
    traj.status = TerminalStatus::Error;
    traj.message = e.what();
  }
  return traj;
}

/// Matched-control convenience overload.
inline Trajectory simulate(const LagrangianSystem& sys,
                           const ClosedLoopSpec& closed,
                           const SimConfig& config,
                           const ConfigState& initial) {
  return simulate(sys, closed, matched_controller(sys, closed), config,
                  initial);
}

// ---------------------------------------------------------------------------
// Lyapunov diagnostics
// ---------------------------------------------------------------------------

struct LyapunovReport {
  double max_positive_increment = 0.0;
  double rate_correlation = 0.0;  // corr(central dH/dt, recorded rate)
  std::ptrdiff_t first_violation_index = -1;
  double violation_threshold = 0.0;
  double max_rate_mismatch = 0.0;  // max |central dH/dt - recorded rate|
};

inline LyapunovReport lyapunov_report(const Trajectory& traj,
                                      double threshold_scale = 1e-6) {
  LyapunovReport rep;
  const auto& r = traj.records;
  if (r.size() < 3) return rep;
  double maxH = -std::numeric_limits<double>::infinity();
  for (const auto& rec : r) maxH = std::max(maxH, rec.H_hat);
  rep.violation_threshold = threshold_scale * std::max(std::abs(maxH), 1e-30);

  for (size_t i = 1; i < r.size(); ++i) {
    const double inc = r[i].H_hat - r[i - 1].H_hat;
    rep.max_positive_increment = std::max(rep.max_positive_increment, inc);
    if (rep.first_violation_index < 0 && inc > rep.violation_threshold)
      rep.first_violation_index = static_cast<std::ptrdiff_t>(i);
  }

  // Pearson correlation between central-difference dH/dt and the rate.
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  size_t m = 0;
  for (size_t i = 1; i + 1 < r.size(); ++i) {
    const double dt = r[i + 1].t - r[i - 1].t;
    if (dt <= 0) continue;
    const double x = (r[i + 1].H_hat - r[i - 1].H_hat) / dt;
    const double y = r[i].H_hat_rate;
    rep.max_rate_mismatch = std::max(rep.max_rate_mismatch, std::abs(x - y));
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
    ++m;
  }
  if (m > 1) {
    const double cov = sxy - sx * sy / double(m);
    const double vx = sxx - sx * sx / double(m);
    const double vy = syy - sy * sy / double(m);
    rep.rate_correlation =
        (vx > 0 && vy > 0) ? cov / std::sqrt(vx * vy) : 0.0;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

namespace detail {

inline void append_shortest(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace detail

/// CSV, one row per record, floating point as shortest round-trip decimal.
/// Layout is the two-degree-of-freedom one: the recorded torque column is
/// the actuated component u_2.
inline std::string trajectory_csv(const Trajectory& traj) {
  std::string out =
      "t,s,theta,s_dot,theta_dot,u,v_in,H_hat,H_hat_rate,saturated\n";
  for (const auto& r : traj.records) {
    detail::append_shortest(out, r.t);
    out.push_back(',');
    detail::append_shortest(out, r.q[0]);
    out.push_back(',');
    detail::append_shortest(out, r.q[1]);
    out.push_back(',');
    detail::append_shortest(out, r.qdot[0]);
    out.push_back(',');
    detail::append_shortest(out, r.qdot[1]);
    out.push_back(',');
    detail::append_shortest(out, r.u[r.u.size() - 1]);
    out.push_back(',');
    detail::append_shortest(out, r.v_in);
    out.push_back(',');
    detail::append_shortest(out, r.H_hat);
    out.push_back(',');
    detail::append_shortest(out, r.H_hat_rate);
    out.push_back(',');
    out.push_back(r.saturated ? '1' : '0');
    out.push_back('\n');
  }
  return out;
}

inline void write_trajectory_csv(const Trajectory& traj,
                                 const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  const std::string body = trajectory_csv(traj);
  f.write(body.data(), static_cast<std::streamsize>(body.size()));
}

}  // namespace matchctl::sim
