#pragma once

// Gait scheduling (time-based finite state machine), capture-point foothold
// planning, the trot reference generator, and trajectory file I/O.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rfmpc/errors.hpp"
#include "rfmpc/mpc.hpp"
#include "rfmpc/so3.hpp"
#include "rfmpc/srb_model.hpp"

namespace rfmpc {

struct GaitTiming {
  double t_stance = 0.3;
  double t_swing = 0.15;
  std::array<double, 4> offsets = {0, 0, 0, 0};  // phase offsets in [0,1)
  std::string name = "stand";

  double period() const { return t_stance + t_swing; }

  // Diagonal pairs half a period apart.
  static GaitTiming trot(double t_st = 0.3, double t_sw = 0.15) {
    GaitTiming g;
    g.t_stance = t_st;
    g.t_swing = t_sw;
    g.offsets = {0.0, 0.5, 0.5, 0.0};  // FL, FR, HL, HR
    g.name = "trot";
    return g;
  }

  // Front pair leads; hind pair touches down after a short aerial phase.
  static GaitTiming bound(double t_st = 0.1, double t_sw = 0.16) {
    GaitTiming g;
    g.t_stance = t_st;
    g.t_swing = t_sw;
    const double hind_offset =
        (t_st + 0.5 * (t_sw - t_st)) / (t_st + t_sw);  // stance + one aerial
    g.offsets = {0.0, 0.0, hind_offset, hind_offset};
    g.name = "bound";
    return g;
  }

  static GaitTiming stand() { return GaitTiming{}; }
};

enum class LegMode { kStance, kSwing };

struct LegPhase {
  LegMode mode = LegMode::kStance;
  double s = 0.0;      // fraction of the current dwell in [0,1]
  double dwell = 0.0;  // time since the last transition (s)
};

// Deterministic time-based schedule: transition exactly at the guard
// (dwell == dwell time of the mode), reset zeroes the dwell clock.
inline std::array<LegPhase, 4> fsm_step(const GaitTiming& timing, double t) {
  std::array<LegPhase, 4> phases;
  const double T = timing.period();
  for (int i = 0; i < 4; ++i) {
    double c = std::fmod(t / T + timing.offsets[static_cast<size_t>(i)], 1.0);
    if (c < 0) c += 1.0;
    const double elapsed = c * T;
    LegPhase& ph = phases[static_cast<size_t>(i)];
    if (elapsed < timing.t_stance) {
      ph.mode = LegMode::kStance;
      ph.dwell = elapsed;
      ph.s = elapsed / timing.t_stance;
    } else {
      ph.mode = LegMode::kSwing;
      ph.dwell = elapsed - timing.t_stance;
      ph.s = ph.dwell / timing.t_swing;
    }
  }
  return phases;
}

inline std::array<bool, 4> contact_flags(const GaitTiming& timing, double t) {
  const auto phases = fsm_step(timing, t);
  std::array<bool, 4> b;
  for (int i = 0; i < 4; ++i) {
    b[static_cast<size_t>(i)] =
        phases[static_cast<size_t>(i)].mode == LegMode::kStance;
  }
  return b;
}

struct GaitSchedule {
  std::vector<std::array<bool, 4>> contacts;  // one entry per horizon step
};

inline GaitSchedule horizon_contacts(const GaitTiming& timing, double t,
                                     int n_hor, double dt_pred) {
  GaitSchedule s;
  s.contacts.reserve(static_cast<size_t>(n_hor));
  for (int k = 0; k < n_hor; ++k) {
    s.contacts.push_back(contact_flags(timing, t + k * dt_pred));
  }
  return s;
}

// Capture-point foothold: feed-forward half-stance travel plus a
// velocity-error feedback term, projected to the ground plane.
inline Vec3 foothold_plan(const Vec3& hip_pos, const Vec3& hip_vel,
                          const Vec3& hip_vel_desired, double t_stance,
                          double z0, double gravity = 9.81) {
  Vec3 step = hip_pos + (t_stance / 2.0) * hip_vel_desired +
              std::sqrt(z0 / gravity) * (hip_vel - hip_vel_desired);
  step.z() = 0.0;
  return step;
}

// Velocity profile for the walking experiment: constant acceleration from
// rest up to the commanded speed.
inline Vec3 ramped_velocity(const Vec3& v_cmd, double accel, double t) {
  const double target = v_cmd.norm();
  if (target < 1e-12 || t <= 0.0) return Vec3::Zero();
  const double speed = std::min(target, accel * std::max(0.0, t));
  return v_cmd * (speed / target);
}

inline Vec3 ramped_position(const Vec3& v_cmd, double accel, double t) {
  const double target = v_cmd.norm();
  if (target < 1e-12 || t <= 0.0) return Vec3::Zero();
  const double t_ramp = target / accel;
  double dist;
  if (t <= t_ramp) {
    dist = 0.5 * accel * t * t;
  } else {
    dist = 0.5 * accel * t_ramp * t_ramp + target * (t - t_ramp);
  }
  return v_cmd * (dist / target);
}

// Reference window for trotting/standing: level pose, ramped velocity, and
// stance forces that share the robot's weight evenly (zero tangential).
inline ReferenceWindow trot_window(const GaitTiming& timing,
                                   const RobotParams& params,
                                   const Vec3& v_cmd, double accel, double t,
                                   int n_hor, double dt_pred) {
  ReferenceWindow ref;
  for (int k = 0; k <= n_hor; ++k) {
    const double tk = t + k * dt_pred;
    Vec3 p = ramped_position(v_cmd, accel, tk);
    p.z() = params.nominal_height;
    ref.p_d.push_back(p);
    ref.v_d.push_back(ramped_velocity(v_cmd, accel, tk));
    ref.R_d.push_back(Mat3::Identity());
    ref.w_d.push_back(Vec3::Zero());
  }
  for (int k = 0; k < n_hor; ++k) {
    const double tk = t + k * dt_pred;
    const auto contact = contact_flags(timing, tk);
    int n_st = 0;
    for (bool b : contact) n_st += b ? 1 : 0;
    Vec12 u = Vec12::Zero();
    if (n_st > 0) {
      const double fz = params.mass * params.gravity / n_st;
      for (int i = 0; i < 4; ++i) {
        if (contact[static_cast<size_t>(i)]) u[3 * i + 2] = fz;
      }
    }
    ref.u_d.push_back(u);
    ref.contact.push_back(contact);
    // nominal footholds below the hips of the reference pose
    std::array<Vec3, 4> feet;
    SrbState s;
    s.p = ref.p_d[static_cast<size_t>(k)];
    for (int i = 0; i < 4; ++i) {
      Vec3 f = s.hip_position(params, i);
      f.z() = 0.0;
      feet[static_cast<size_t>(i)] = f;
    }
    ref.feet.push_back(feet);
  }
  return ref;
}

// ---------------------------------------------------------------------------
// Time-indexed reference trajectories and their CSV serialization.

struct TrajectorySample {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Vec3 w = Vec3::Zero();
  Vec12 u = Vec12::Zero();
  std::array<bool, 4> contact = {true, true, true, true};
};

struct ReferenceTrajectory {
  std::vector<TrajectorySample> samples;
  double period = 0.0;  // > 0 for periodic trajectories (tiled on lookup)
  double stance_lead = 0.0;  // foothold lead time [s] used by the gait
  // per-leg world-x placement correction so each stance's tangential force
  // integrates to zero at the planned foothold
  std::array<double, 4> foot_x_offset{0.0, 0.0, 0.0, 0.0};
  std::string name;

  double duration() const {
    return samples.empty() ? 0.0 : samples.back().t - samples.front().t;
  }

  // Sample index for time t; wraps periodic trajectories with integer
  // arithmetic so times near a period boundary never land on the seam
  // sample (whose contact flags belong to the next period).
  long sample_index(double t) const {
    if (samples.empty()) throw DimensionMismatch("empty trajectory");
    const double dt = duration() / static_cast<double>(samples.size() - 1);
    long idx = std::lround((t - samples.front().t) / dt);
    if (period > 0.0) {
      const long n_per = std::lround(period / dt);
      idx %= n_per;
      if (idx < 0) idx += n_per;
    }
    return std::min(std::max(idx, 0L),
                    static_cast<long>(samples.size()) - 1);
  }

  const TrajectorySample& at_time(double t) const {
    return samples[static_cast<size_t>(sample_index(t))];
  }

  // Periodic trajectories advance p by an integer number of per-period
  // displacements so position references keep moving forward.
  Vec3 position_at(double t) const {
    const TrajectorySample& s = at_time(t);
    if (period <= 0.0) return s.p;
    const double dt = duration() / static_cast<double>(samples.size() - 1);
    const long k = std::lround((t - samples.front().t) / dt);
    const long n_per = std::lround(period / dt);
    long n = k / n_per;
    if (k % n_per < 0) --n;  // floor division for negative times
    const Vec3 shift = samples.back().p - samples.front().p;
    return s.p + static_cast<double>(n) * shift;
  }

  ReferenceWindow window(double t, int n_hor, double dt_pred,
                         const RobotParams& params) const {
    ReferenceWindow ref;
    for (int k = 0; k <= n_hor; ++k) {
      const double tk = t + k * dt_pred;
      const TrajectorySample& s = at_time(tk);
      ref.p_d.push_back(position_at(tk));
      ref.v_d.push_back(s.v);
      ref.R_d.push_back(s.R);
      ref.w_d.push_back(s.w);
    }
    for (int k = 0; k < n_hor; ++k) {
      const double tk = t + k * dt_pred;
      const TrajectorySample& s = at_time(tk);
      // sample the held force at the step midpoint so the zero-order-hold
      // impulse matches the continuous profile to second order
      ref.u_d.push_back(at_time(tk + 0.5 * dt_pred).u);
      ref.contact.push_back(s.contact);
      // footholds: a stance foot is pinned where the gait placed it at
      // touchdown (hip projection plus velocity lead); a swing foot uses the
      // ground projection of its hip
      std::array<Vec3, 4> feet;
      SrbState st;
      st.p = position_at(tk);
      st.R = s.R;
      const double dts =
          duration() / static_cast<double>(samples.size() - 1);
      for (int i = 0; i < 4; ++i) {
        Vec3 f;
        if (s.contact[static_cast<size_t>(i)]) {
          double td = tk;
          while (tk - td < duration() &&
                 at_time(td - dts).contact[static_cast<size_t>(i)]) {
            td -= dts;
          }
          const TrajectorySample& sd = at_time(td);
          SrbState st_td;
          st_td.p = position_at(td);
          st_td.R = sd.R;
          f = st_td.hip_position(params, i) + stance_lead * sd.v;
          f.x() += foot_x_offset[static_cast<size_t>(i)];
        } else {
          f = st.hip_position(params, i);
        }
        f.z() = 0.0;
        feet[static_cast<size_t>(i)] = f;
      }
      ref.feet.push_back(feet);
    }
    return ref;
  }
};

inline void save_trajectory(const ReferenceTrajectory& traj,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_trajectory: cannot open " + path);
  out.precision(17);
  out << "t,px,py,pz,vx,vy,vz,"
         "r11,r21,r31,r12,r22,r32,r13,r23,r33,"
         "wx,wy,wz,"
         "u1x,u1y,u1z,u2x,u2y,u2z,u3x,u3y,u3z,u4x,u4y,u4z,"
         "c1,c2,c3,c4\n";
  for (const auto& s : traj.samples) {
    out << s.t;
    for (int i = 0; i < 3; ++i) out << "," << s.p[i];
    for (int i = 0; i < 3; ++i) out << "," << s.v[i];
    for (int i = 0; i < 9; ++i) out << "," << s.R.data()[i];  // column-major
    for (int i = 0; i < 3; ++i) out << "," << s.w[i];
    for (int i = 0; i < 12; ++i) out << "," << s.u[i];
    for (int i = 0; i < 4; ++i) {
      out << "," << (s.contact[static_cast<size_t>(i)] ? 1 : 0);
    }
    out << "\n";
  }
}

// Loads the CSV format written by save_trajectory.  Rotations with modest
// orthogonality drift (< 1e-3) are repaired by projection; worse drift is
// rejected.
inline ReferenceTrajectory load_trajectory(const std::string& path,
                                           bool* repaired = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("load_trajectory: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("load_trajectory: missing header in " + path);
  }
  if (line.rfind("t,", 0) != 0) {
    throw ParseError("load_trajectory: unrecognized header in " + path);
  }
  if (repaired != nullptr) *repaired = false;

  ReferenceTrajectory traj;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::array<double, 35> f{};
    for (int i = 0; i < 35; ++i) {
      std::string cell;
      if (!std::getline(ss, cell, ',')) {
        throw ParseError("load_trajectory: truncated row at line " +
                         std::to_string(line_no));
      }
      try {
        f[static_cast<size_t>(i)] = std::stod(cell);
      } catch (const std::exception&) {
        throw ParseError("load_trajectory: bad number at line " +
                         std::to_string(line_no));
      }
    }
    TrajectorySample s;
    s.t = f[0];
    for (int i = 0; i < 3; ++i) s.p[i] = f[static_cast<size_t>(1 + i)];
    for (int i = 0; i < 3; ++i) s.v[i] = f[static_cast<size_t>(4 + i)];
    for (int i = 0; i < 9; ++i) s.R.data()[i] = f[static_cast<size_t>(7 + i)];
    for (int i = 0; i < 3; ++i) s.w[i] = f[static_cast<size_t>(16 + i)];
    for (int i = 0; i < 12; ++i) s.u[i] = f[static_cast<size_t>(19 + i)];
    for (int i = 0; i < 4; ++i) {
      s.contact[static_cast<size_t>(i)] = f[static_cast<size_t>(31 + i)] > 0.5;
    }
    const double drift =
        (s.R.transpose() * s.R - Mat3::Identity()).norm();
    if (drift > 1e-3) {
      throw InvalidRotationInFile(
          "load_trajectory: rotation drift " + std::to_string(drift) +
          " at line " + std::to_string(line_no));
    }
    if (drift > 1e-12) {
      s.R = project_to_so3(s.R);
      if (repaired != nullptr) *repaired = true;
    }
    traj.samples.push_back(s);
  }
  if (traj.samples.empty()) {
    throw ParseError("load_trajectory: no samples in " + path);
  }
  return traj;
}

}  // namespace rfmpc
