#pragma once

// Closed-loop experiment harness: single-rigid-body plant integrated at a
// fixed step, MPC at its own rate with zero-order hold, schedule-driven
// contact bookkeeping, disturbance injection, and CSV run logs.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rfmpc/ea_mpc.hpp"
#include "rfmpc/errors.hpp"
#include "rfmpc/gait.hpp"
#include "rfmpc/mpc.hpp"
#include "rfmpc/srb_model.hpp"

namespace rfmpc {

// ---------------------------------------------------------------------------
// Disturbance

struct DisturbanceSpec {
  Vec3 offset_body = Vec3(0.15, -0.10, 0.0);  // front-right shoulder
  Vec3 direction = Vec3(0.0, 1.0, 0.0);       // world frame, normalized on use
  double peak = 0.0;                          // N; 0 disables
  // piecewise-linear profile: (time, fraction of peak)
  std::vector<std::pair<double, double>> knots;

  static DisturbanceSpec trapezoid(double t_start, double t_rise, double t_hold,
                                   double t_fall, double peak_force) {
    DisturbanceSpec d;
    d.peak = peak_force;
    d.knots = {{t_start, 0.0},
               {t_start + t_rise, 1.0},
               {t_start + t_rise + t_hold, 1.0},
               {t_start + t_rise + t_hold + t_fall, 0.0}};
    return d;
  }

  double fraction_at(double t) const {
    if (knots.empty() || t <= knots.front().first) return 0.0;
    if (t >= knots.back().first) return knots.back().second;
    for (size_t i = 1; i < knots.size(); ++i) {
      if (t <= knots[i].first) {
        const double span = knots[i].first - knots[i - 1].first;
        const double a = span > 0.0 ? (t - knots[i - 1].first) / span : 1.0;
        return knots[i - 1].second + a * (knots[i].second - knots[i - 1].second);
      }
    }
    return 0.0;
  }

  Wrench wrench_at(double t, const SrbState& state) const {
    Wrench w;
    if (peak <= 0.0) return w;
    const double mag = peak * fraction_at(t);
    if (mag == 0.0) return w;
    const Vec3 dir = direction.normalized();
    w.force = mag * dir;
    w.torque = (state.R * offset_body).cross(w.force);
    return w;
  }
};

// ---------------------------------------------------------------------------
// Run log

struct TickRecord {
  double t = 0.0;
  SrbState state;
  Vec12 u = Vec12::Zero();
  Vec3 p_d = Vec3::Zero();
  Vec3 v_d = Vec3::Zero();
  Mat3 R_d = Mat3::Identity();
  double e_p = 0.0;      // |p - p_d|
  double e_R = 0.0;      // |log(R_d^T R)|
  double kappa_inv = 0.0;  // Euler rate-map conditioning at the actual pose
  bool mpc_tick = false;
  double solve_time_s = 0.0;
  int iterations = 0;
  bool fallback = false;
};

// Rotation predictions retained from one MPC solve, for the prediction
// quality metric.
struct PredictionRecord {
  double t = 0.0;
  std::vector<Mat3> r_base;  // linearization rotation per step
  std::vector<Vec3> xi;      // predicted attitude variation per step
};

struct RunLog {
  std::vector<TickRecord> ticks;
  std::vector<PredictionRecord> predictions;
  double plant_dt = 1e-3;
  double dt_mpc = 0.0;  // prediction step of the controller
  int mpc_ticks = 0;
  bool diverged = false;
  double t_diverged = -1.0;

  const TickRecord& at_time(double t) const {
    const size_t idx = static_cast<size_t>(std::llround(t / plant_dt));
    return ticks[std::min(idx, ticks.size() - 1)];
  }
};

// Prediction quality: for each retained solve, compare the predicted
// rotations against the rotations the plant actually reached.  Returns
// (solve time, metric) pairs; solves whose horizon extends past the end of
// the log are skipped.
inline std::vector<std::pair<double, double>> prediction_quality(
    const RunLog& log) {
  std::vector<std::pair<double, double>> phi;
  if (log.ticks.empty() || log.dt_mpc <= 0.0) return phi;
  const double t_end = log.ticks.back().t;
  for (const PredictionRecord& rec : log.predictions) {
    const size_t n = rec.xi.size();
    if (rec.t + static_cast<double>(n) * log.dt_mpc > t_end + 1e-9) continue;
    double acc = 0.0;
    for (size_t k = 0; k < n; ++k) {
      const Mat3 r_bar =
          rec.r_base[k] * (Mat3::Identity() + hat(rec.xi[k]));
      const Mat3 r_tilde = project_to_so3(r_bar);
      const Mat3& r_actual =
          log.at_time(rec.t + static_cast<double>(k + 1) * log.dt_mpc).state.R;
      acc += (r_tilde - r_bar).norm() +
             log_so3(project_to_so3(r_actual.transpose() * r_tilde)).norm();
    }
    phi.emplace_back(rec.t, acc);
  }
  return phi;
}

inline void write_run_log(const RunLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_run_log: cannot open " + path);
  out.precision(10);
  out << "# run-log v1\n";
  out << "t,px,py,pz,vx,vy,vz,r11,r21,r31,r12,r22,r32,r13,r23,r33,"
         "wx,wy,wz,u1x,u1y,u1z,u2x,u2y,u2z,u3x,u3y,u3z,u4x,u4y,u4z,"
         "pdx,pdy,pdz,e_p,e_R,kappa_inv,mpc_tick,solve_time_s,iterations,"
         "fallback\n";
  for (const TickRecord& r : log.ticks) {
    out << r.t;
    for (int i = 0; i < 3; ++i) out << ',' << r.state.p[i];
    for (int i = 0; i < 3; ++i) out << ',' << r.state.v[i];
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 3; ++i) out << ',' << r.state.R(i, c);
    }
    for (int i = 0; i < 3; ++i) out << ',' << r.state.omega[i];
    for (int i = 0; i < 12; ++i) out << ',' << r.u[i];
    for (int i = 0; i < 3; ++i) out << ',' << r.p_d[i];
    out << ',' << r.e_p << ',' << r.e_R << ',' << r.kappa_inv << ','
        << (r.mpc_tick ? 1 : 0) << ',' << r.solve_time_s << ','
        << r.iterations << ',' << (r.fallback ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("write_run_log: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Closed loop

struct SimOptions {
  double duration = 5.0;
  double plant_dt = 1e-3;
  DisturbanceSpec disturbance;
  bool stop_on_divergence = true;
  double fail_speed = 8.0;      // m/s
  double fail_e_R = 2.5;        // rad
  double fail_min_height = 0.02;  // m (ignored when <= 0)
  bool keep_predictions = false;
};

// How the plant's foot positions evolve.
struct FeetPolicy {
  enum class Mode { kFixed, kPinOnTouchdown } mode = Mode::kPinOnTouchdown;
  std::array<Vec3, 4> fixed{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(),
                            Vec3::Zero()};
  double ground_z = 0.0;
  double stance_lead = 0.0;   // seconds of velocity lead at foot placement
  double raibert_gain = 0.0;  // foot shift per unit velocity error (s)
  // constant per-leg world-x placement offset: lets the vertical force
  // profile realize a mean pitch torque without tangential forces
  std::array<double, 4> x_offset{0.0, 0.0, 0.0, 0.0};

  static FeetPolicy fixed_at(const std::array<Vec3, 4>& feet) {
    FeetPolicy p;
    p.mode = Mode::kFixed;
    p.fixed = feet;
    return p;
  }
};

using ControllerFn = std::function<MpcSolution(
    const SrbState&, const std::array<Vec3, 4>&, const ReferenceWindow&)>;
// Reference window lookup; receives the current plant state so references
// can be re-anchored at the robot.
using WindowFn = std::function<ReferenceWindow(double, const SrbState&)>;

inline RunLog run_closed_loop(const RobotParams& params, const GainSet& gains,
                              const SimOptions& options, SrbState state,
                              const WindowFn& window_fn,
                              const ControllerFn& controller,
                              const FeetPolicy& feet_policy,
                              LinScheme scheme = LinScheme::kOperatingPoint) {
  RunLog log;
  log.plant_dt = options.plant_dt;
  log.dt_mpc = gains.dt_mpc;
  const int n_ticks =
      static_cast<int>(std::llround(options.duration / options.plant_dt));
  const int ticks_per_mpc = std::max(
      1, static_cast<int>(std::llround(1.0 / (gains.rate_hz * options.plant_dt))));

  std::array<Vec3, 4> feet = feet_policy.mode == FeetPolicy::Mode::kFixed
                                 ? feet_policy.fixed
                                 : std::array<Vec3, 4>{Vec3::Zero(), Vec3::Zero(),
                                                       Vec3::Zero(), Vec3::Zero()};
  std::array<bool, 4> in_contact{false, false, false, false};
  Vec12 u_hold = Vec12::Zero();
  MpcSolution last_sol;

  log.ticks.reserve(static_cast<size_t>(n_ticks) + 1);
  for (int tick = 0; tick <= n_ticks; ++tick) {
    const double t = tick * options.plant_dt;
    const ReferenceWindow ref = window_fn(t, state);
    const std::array<bool, 4>& contact_now = ref.contact[0];

    // feet bookkeeping: a stance foot stays pinned where it touched down; a
    // swing foot tracks its expected touchdown point so the controller's
    // operating point has sensible lever arms for upcoming stances
    for (int i = 0; i < 4; ++i) {
      const bool c = contact_now[static_cast<size_t>(i)];
      if (feet_policy.mode == FeetPolicy::Mode::kPinOnTouchdown &&
          (!c || !in_contact[static_cast<size_t>(i)])) {
        Vec3 f = state.hip_position(params, i) +
                 feet_policy.stance_lead * state.v +
                 feet_policy.raibert_gain * (state.v - ref.v_d[0]);
        f.x() += feet_policy.x_offset[static_cast<size_t>(i)];
        f.z() = feet_policy.ground_z;
        feet[static_cast<size_t>(i)] = f;
      }
      in_contact[static_cast<size_t>(i)] = c;
    }

    const bool is_mpc_tick = (tick % ticks_per_mpc == 0);
    if (is_mpc_tick) {
      last_sol = controller(state, feet, ref);
      u_hold = last_sol.u;
      ++log.mpc_ticks;
      if (options.keep_predictions && !last_sol.predicted.empty()) {
        PredictionRecord rec;
        rec.t = t;
        for (size_t k = 0; k < last_sol.predicted.size(); ++k) {
          rec.xi.push_back(last_sol.predicted[k].segment<3>(6));
          rec.r_base.push_back(scheme == LinScheme::kOperatingPoint
                                   ? state.R
                                   : ref.R_d[k + 1]);
        }
        log.predictions.push_back(std::move(rec));
      }
    }

    TickRecord rec;
    rec.t = t;
    rec.state = state;
    rec.u = u_hold;
    rec.p_d = ref.p_d[0];
    rec.v_d = ref.v_d[0];
    rec.R_d = ref.R_d[0];
    rec.e_p = (state.p - rec.p_d).norm();
    rec.e_R = log_so3(project_to_so3(rec.R_d.transpose() * state.R)).norm();
    rec.kappa_inv = singularity_metric_at(state.R);
    rec.mpc_tick = is_mpc_tick;
    rec.solve_time_s = last_sol.solve_time_s;
    rec.iterations = last_sol.iterations;
    rec.fallback = last_sol.fallback;
    log.ticks.push_back(rec);

    if (options.stop_on_divergence) {
      const bool below =
          options.fail_min_height > 0.0 && state.p.z() < options.fail_min_height;
      if (state.v.norm() > options.fail_speed || rec.e_R > options.fail_e_R ||
          below || !state.p.allFinite()) {
        log.diverged = true;
        log.t_diverged = t;
        break;
      }
    }
    if (tick == n_ticks) break;

    // plant step with zero-order-held forces; swing legs push nothing
    FootForces f;
    f.feet = feet;
    for (int i = 0; i < 4; ++i) {
      f.u[static_cast<size_t>(i)] =
          contact_now[static_cast<size_t>(i)] ? Vec3(u_hold.segment<3>(3 * i))
                                              : Vec3::Zero();
    }
    const Wrench ext = options.disturbance.wrench_at(t, state);
    state = integrate_step(state, f, params, options.plant_dt, &ext);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Experiment presets

inline RunLog run_trot(const RobotParams& params, const GainSet& gains,
                       const Vec3& v_cmd, double accel,
                       const SimOptions& options,
                       LinScheme scheme = LinScheme::kOperatingPoint) {
  const GaitTiming timing = GaitTiming::trot(gains.t_stance, gains.t_swing);
  MpcController ctrl(params, gains, scheme);
  SrbState state;
  state.p = Vec3(0.0, 0.0, params.nominal_height);
  FeetPolicy feet;
  feet.stance_lead = 0.5 * gains.t_stance;
  const WindowFn window = [&, timing](double t, const SrbState&) {
    return trot_window(timing, params, v_cmd, accel, t, gains.horizon,
                       gains.dt_mpc);
  };
  const ControllerFn solve = [&ctrl](const SrbState& s,
                                     const std::array<Vec3, 4>& f,
                                     const ReferenceWindow& w) {
    return ctrl.solve(s, f, w);
  };
  return run_closed_loop(params, gains, options, state, window, solve, feet,
                         scheme);
}

// Track a time-indexed reference trajectory (bounding, twist jump, replay).
inline RunLog run_tracking(const RobotParams& params, const GainSet& gains,
                           const ReferenceTrajectory& traj,
                           const SimOptions& options, const FeetPolicy& feet,
                           LinScheme scheme = LinScheme::kOperatingPoint,
                           const SrbState* start = nullptr,
                           bool anchor_horizontal = false) {
  MpcController ctrl(params, gains, scheme);
  SrbState state;
  if (start != nullptr) {
    state = *start;
  } else {
    const TrajectorySample& s0 = traj.at_time(0.0);
    state.p = s0.p;
    state.v = s0.v;
    state.R = s0.R;
    state.omega = s0.w;
  }
  const WindowFn window = [&](double t, const SrbState& now) {
    ReferenceWindow ref = traj.window(t, gains.horizon, gains.dt_mpc, params);
    if (anchor_horizontal) {
      // re-anchor the horizontal position reference at the robot so speed,
      // not accumulated distance, is tracked (avoids windup on long runs)
      const Vec3 shift(now.p.x() - ref.p_d[0].x(),
                       now.p.y() - ref.p_d[0].y(), 0.0);
      for (Vec3& p : ref.p_d) p += shift;
      for (auto& fs : ref.feet) {
        for (Vec3& f : fs) f += shift;
      }
    }
    return ref;
  };
  const ControllerFn solve = [&ctrl](const SrbState& s,
                                     const std::array<Vec3, 4>& f,
                                     const ReferenceWindow& w) {
    return ctrl.solve(s, f, w);
  };
  FeetPolicy fp = feet;
  // the trajectory's placement corrections keep the plant's footholds
  // consistent with the reference forces
  for (size_t i = 0; i < 4; ++i) fp.x_offset[i] += traj.foot_x_offset[i];
  return run_closed_loop(params, gains, options, state, window, solve, fp,
                         scheme);
}

// Apply a trajectory's stored forces open loop (no feedback), with the feet
// fixed where the reference planned them.
inline RunLog run_open_loop(const RobotParams& params,
                            const ReferenceTrajectory& traj,
                            const std::array<Vec3, 4>& feet,
                            const SimOptions& options,
                            const SrbState* start = nullptr) {
  RunLog log;
  log.plant_dt = options.plant_dt;
  SrbState state;
  if (start != nullptr) {
    state = *start;
  } else {
    const TrajectorySample& s0 = traj.at_time(0.0);
    state.p = s0.p;
    state.v = s0.v;
    state.R = s0.R;
    state.omega = s0.w;
  }
  const int n_ticks =
      static_cast<int>(std::llround(options.duration / options.plant_dt));
  for (int tick = 0; tick <= n_ticks; ++tick) {
    const double t = tick * options.plant_dt;
    const TrajectorySample& ref = traj.at_time(t);
    TickRecord rec;
    rec.t = t;
    rec.state = state;
    rec.u = ref.u;
    rec.p_d = ref.p;
    rec.v_d = ref.v;
    rec.R_d = ref.R;
    rec.e_p = (state.p - ref.p).norm();
    rec.e_R = log_so3(project_to_so3(ref.R.transpose() * state.R)).norm();
    rec.kappa_inv = singularity_metric_at(state.R);
    log.ticks.push_back(rec);
    if (tick == n_ticks) break;
    FootForces f;
    f.feet = feet;
    for (int i = 0; i < 4; ++i) {
      f.u[static_cast<size_t>(i)] = ref.u.segment<3>(3 * i);
    }
    const Wrench ext = options.disturbance.wrench_at(t, state);
    state = integrate_step(state, f, params, options.plant_dt, &ext);
  }
  return log;
}

// Pose regulation study: hold footholds fixed, command a constant desired
// orientation, report steady-state deviations.  Used for the controller
// comparison near the Euler representation singularity (force limits are
// lifted to match that protocol).
struct PoseResult {
  double e_p_final = 0.0;
  double e_R_final = 0.0;
  bool diverged = false;
};

inline PoseResult run_pose(const RobotParams& params, const GainSet& gains,
                           const Mat3& r_start, const Mat3& r_target,
                           bool use_ea, const SimOptions& options) {
  SrbState state;
  state.p = Vec3(0.0, 0.0, params.nominal_height);
  state.R = r_start;
  std::array<Vec3, 4> feet;
  for (int i = 0; i < 4; ++i) {
    SrbState level;
    level.p = state.p;
    Vec3 f = level.hip_position(params, i);
    f.z() = 0.0;
    feet[static_cast<size_t>(i)] = f;
  }
  ReferenceWindow ref;
  const std::array<bool, 4> all{true, true, true, true};
  const Vec12 u_support = detail::support_forces(params, all);
  for (int k = 0; k <= gains.horizon; ++k) {
    ref.p_d.push_back(state.p);
    ref.v_d.push_back(Vec3::Zero());
    ref.R_d.push_back(r_target);
    ref.w_d.push_back(Vec3::Zero());
  }
  for (int k = 0; k < gains.horizon; ++k) {
    ref.u_d.push_back(u_support);
    ref.contact.push_back(all);
    ref.feet.push_back(feet);
  }
  const WindowFn window = [&ref](double, const SrbState&) { return ref; };

  MpcController rf(params, gains);
  EaMpcController ea(params, gains);
  rf.set_force_limits_enabled(false);
  ea.set_force_limits_enabled(false);
  const ControllerFn solve = [&](const SrbState& s,
                                 const std::array<Vec3, 4>& f,
                                 const ReferenceWindow& w) -> MpcSolution {
    if (!use_ea) return rf.solve(s, f, w);
    try {
      return ea.solve(s, f, w);
    } catch (const RateMapNearSingular&) {
      // the failure mode under study: hold the previous command
      MpcSolution sol;
      sol.u = Vec12::Zero();
      sol.fallback = true;
      return sol;
    }
  };

  SimOptions opt = options;
  opt.fail_min_height = 0.0;  // strongly tilted poses are legitimate here
  opt.fail_e_R = 6.0;
  const RunLog log = run_closed_loop(params, gains, opt, state, window, solve,
                                     FeetPolicy::fixed_at(feet));
  PoseResult res;
  res.diverged = log.diverged;
  // average over the last 20 % of the run
  const size_t n = log.ticks.size();
  const size_t tail = std::max<size_t>(1, n / 5);
  double ep = 0.0, er = 0.0;
  for (size_t i = n - tail; i < n; ++i) {
    ep += log.ticks[i].e_p;
    er += log.ticks[i].e_R;
  }
  res.e_p_final = ep / static_cast<double>(tail);
  res.e_R_final = er / static_cast<double>(tail);
  return res;
}

}  // namespace rfmpc
