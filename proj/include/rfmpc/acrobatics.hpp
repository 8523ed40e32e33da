#pragma once

// Reference generators for the dynamic maneuvers: periodic bounding built
// from impulse-scaled Bezier force profiles, and the slope twist jump
// solved by single shooting over constant ground-reaction forces.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "rfmpc/errors.hpp"
#include "rfmpc/gait.hpp"
#include "rfmpc/so3.hpp"
#include "rfmpc/srb_model.hpp"

namespace rfmpc {

// ---------------------------------------------------------------------------
// Bounding

// Degree-4 Bernstein bump with zero endpoints: forces vanish at touchdown
// and liftoff.
inline double bezier_bump(double s) {
  s = std::min(std::max(s, 0.0), 1.0);
  static const std::array<double, 5> ctrl = {0.0, 1.0, 1.0, 1.0, 0.0};
  static const std::array<double, 5> binom = {1, 4, 6, 4, 1};
  double val = 0.0;
  for (int i = 0; i <= 4; ++i) {
    val += ctrl[static_cast<size_t>(i)] * binom[static_cast<size_t>(i)] *
           std::pow(s, i) * std::pow(1.0 - s, 4 - i);
  }
  return val;
}

// integral of bezier_bump over [0,1]: each Bernstein basis integrates to 1/5
inline double bezier_bump_integral() { return 3.0 / 5.0; }

// Analytic force/torque profiles over one bounding period:
//   front stance [0, t_st), aerial, hind stance, aerial.
struct BoundingProfile {
  double t_st = 0.1;
  double t_air = 0.03;
  double scale_fz = 0.0;   // vertical force scale (N)
  double scale_tau = 0.0;  // pitch torque scale (N m)

  double period() const { return 2.0 * (t_st + t_air); }
  bool front_stance(double t) const {
    const double c = std::fmod(t, period());
    return c < t_st;
  }
  bool hind_stance(double t) const {
    const double c = std::fmod(t, period());
    return c >= t_st + t_air && c < 2.0 * t_st + t_air;
  }
  // total vertical GRF
  double fz(double t) const {
    const double c = std::fmod(t, period());
    if (c < t_st) return scale_fz * bezier_bump(c / t_st);
    if (c >= t_st + t_air && c < 2.0 * t_st + t_air) {
      return scale_fz * bezier_bump((c - t_st - t_air) / t_st);
    }
    return 0.0;
  }
  // net pitch torque: nose-up during front stance (support ahead of the
  // center of mass), nose-down during hind stance with the same shape, so
  // the net angular impulse over a period is zero.
  double tau_y(double t) const {
    const double c = std::fmod(t, period());
    if (c < t_st) return -scale_tau * bezier_bump(c / t_st);
    if (c >= t_st + t_air && c < 2.0 * t_st + t_air) {
      return scale_tau * bezier_bump((c - t_st - t_air) / t_st);
    }
    return 0.0;
  }
};

// Impulse scaling: the vertical force scale is chosen so the net vertical
// impulse over one period equals M g T (periodic vertical velocity).
inline BoundingProfile bounding_profile(const RobotParams& params,
                                        double t_st = 0.1, double t_air = 0.03,
                                        double tau_scale = -1.0) {
  BoundingProfile prof;
  prof.t_st = t_st;
  prof.t_air = t_air;
  const double T = prof.period();
  prof.scale_fz =
      params.mass * params.gravity * T / (2.0 * t_st * bezier_bump_integral());
  // default torque scale matches the pitch moment the stance feet generate:
  // the feet sit roughly a hip offset fore/aft of the CoM, so the vertical
  // force profile implies tau_y ~= -+ hip_x * fz pointwise
  prof.scale_tau =
      tau_scale >= 0.0 ? tau_scale
                       : params.hip_offsets[0].x() * prof.scale_fz;
  const double peak_leg = prof.scale_fz * bezier_bump(0.5) / 2.0;
  if (peak_leg > params.u_z_max) {
    throw InfeasibleTiming("bounding_profile: peak leg force " +
                           std::to_string(peak_leg) + " N exceeds limit");
  }
  return prof;
}

// One period of planar bounding reference, periodic in z, pitch, and their
// rates; x advances at the commanded speed.
inline ReferenceTrajectory bounding_reference(const RobotParams& params,
                                              double speed, double t_st = 0.1,
                                              double t_air = 0.03,
                                              double tau_scale = -1.0,
                                              double dt = 1e-3) {
  const BoundingProfile prof = bounding_profile(params, t_st, t_air, tau_scale);
  const double T = prof.period();
  const int n = static_cast<int>(std::lround(T / dt));
  const double iyy = params.inertia_body(1, 1);

  // quadrature with zero initial rates, then shift the initial conditions
  // to make z and theta exactly periodic on this grid
  std::vector<double> az(static_cast<size_t>(n) + 1),
      alpha(static_cast<size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    const double t = k * dt;
    az[static_cast<size_t>(k)] = prof.fz(t) / params.mass - params.gravity;
    alpha[static_cast<size_t>(k)] = prof.tau_y(t) / iyy;
  }
  // the impulse balance is exact in continuous time but not under trapezoid
  // quadrature; remove the residual so the rates are periodic on this grid.
  // The correction is weighted by the force profile so flight samples stay
  // exactly force-free.
  const auto remove_residual = [&](std::vector<double>& a,
                                   const std::vector<double>& weight) {
    double residual = 0.0, wsum = 0.0;
    for (size_t k = 1; k < a.size(); ++k) {
      residual += 0.5 * dt * (a[k] + a[k - 1]);
      wsum += 0.5 * dt * (weight[k] + weight[k - 1]);
    }
    for (size_t k = 0; k < a.size(); ++k) a[k] -= residual * weight[k] / wsum;
  };
  std::vector<double> fz_weight(static_cast<size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    fz_weight[static_cast<size_t>(k)] = prof.fz(k * dt);
  }
  remove_residual(az, fz_weight);
  const auto cumtrapz = [dt](const std::vector<double>& f) {
    std::vector<double> out(f.size(), 0.0);
    for (size_t k = 1; k < f.size(); ++k) {
      out[k] = out[k - 1] + 0.5 * dt * (f[k] + f[k - 1]);
    }
    return out;
  };
  std::vector<double> vz = cumtrapz(az);       // with vz(0) = 0
  std::vector<double> wy = cumtrapz(alpha);    // with wy(0) = 0
  std::vector<double> z0 = cumtrapz(vz);
  std::vector<double> th0 = cumtrapz(wy);
  // choose initial rates so the positions are periodic: x(T) = x(0) + v0 T
  const double vz_init = -z0.back() / T;
  const double wy_init = -th0.back() / T;

  std::vector<double> z(z0.size()), th(th0.size());
  double z_mean = 0.0, th_mean = 0.0;
  for (size_t k = 0; k < z0.size(); ++k) {
    z[k] = z0[k] + vz_init * (static_cast<double>(k) * dt);
    th[k] = th0[k] + wy_init * (static_cast<double>(k) * dt);
    z_mean += z[k];
    th_mean += th[k];
  }
  z_mean /= static_cast<double>(z.size());
  th_mean /= static_cast<double>(th.size());

  // Tangential forces: the stance foot is pinned at touchdown (hip projection
  // plus a half-stance velocity lead), so its pitch lever sweeps through the
  // stance while tau_y assumes the average lever. The fore/aft force that
  // makes the pinned-foot torque equal tau_y pointwise is part of the
  // reference; it integrates to zero over each stance.
  const double lead = 0.5 * t_st;  // foothold lead time [s]
  const double hx = params.hip_offsets[0].x();
  std::vector<double> fx_pair(static_cast<size_t>(n) + 1, 0.0);
  std::vector<double> vx_wiggle(fx_pair.size(), 0.0);
  std::vector<double> x_wiggle(fx_pair.size(), 0.0);
  const auto pitch_at = [&](int k) {
    return th[static_cast<size_t>(k)] - th_mean;
  };
  const auto z_at = [&](int k) {
    return params.nominal_height + z[static_cast<size_t>(k)] - z_mean;
  };
  // The foothold depends on the velocity at touchdown, which in turn carries
  // the fore/aft wiggle induced by fx; iterate the construction to a fixed
  // point (a few passes reach sub-millimetre consistency). Each pass also
  // nudges the foothold so the stance's tangential impulse vanishes — a
  // foothold shift leaves the pitch torque unchanged by construction, so it
  // can zero the net fore/aft impulse without disturbing the rotation.
  double off_front = 0.0;
  double off_hind = 0.0;
  for (int pass = 0; pass < 4; ++pass) {
    for (int k = 0; k <= n; ++k) {
      const double t = k * dt;
      const bool front = prof.front_stance(t);
      const bool hind = prof.hind_stance(t);
      if (!front && !hind) {
        fx_pair[static_cast<size_t>(k)] = 0.0;
        continue;
      }
      const double t_td = front ? 0.0 : t_st + t_air;
      const int k_td = static_cast<int>(std::lround(t_td / dt));
      const double foot_x = speed * t_td + x_wiggle[static_cast<size_t>(k_td)] +
                            (front ? hx : -hx) * std::cos(pitch_at(k_td)) +
                            lead * (speed + vx_wiggle[static_cast<size_t>(k_td)]) +
                            (front ? off_front : off_hind);
      const double r_x = foot_x - speed * t - x_wiggle[static_cast<size_t>(k)];
      const double r_z = -z_at(k);
      fx_pair[static_cast<size_t>(k)] =
          (prof.tau_y(t) + r_x * prof.fz(t)) / r_z;
    }
    // per stance: net fx impulse and its sensitivity to a foothold shift
    // (d fx / d foot_x = fz / r_z); update the offsets to cancel the impulse.
    // Skip on the last pass so the stored forces match the final offsets.
    for (const bool front : {true, false}) {
      if (pass == 3) break;
      double imp = 0.0, sens = 0.0;
      for (int k = 0; k <= n; ++k) {
        const double t = k * dt;
        if ((front ? prof.front_stance(t) : prof.hind_stance(t)) &&
            prof.fz(t) > 0.0) {
          const double wq = (k == 0 || k == n) ? 0.5 * dt : dt;
          imp += wq * fx_pair[static_cast<size_t>(k)];
          sens += wq * prof.fz(t) / (-z_at(k));
        }
      }
      (front ? off_front : off_hind) -= imp / sens;
    }
    // integrate the fore/aft wiggle into the reference velocity and position;
    // remove the quadrature residual and recenter so the mean speed holds
    std::vector<double> ax(fx_pair.size());
    for (size_t k = 0; k < ax.size(); ++k) ax[k] = fx_pair[k] / params.mass;
    remove_residual(ax, fz_weight);
    vx_wiggle = cumtrapz(ax);
    double vx_mean = 0.0;
    for (double w : vx_wiggle) vx_mean += w;
    vx_mean /= static_cast<double>(vx_wiggle.size());
    for (double& w : vx_wiggle) w -= vx_mean;
    x_wiggle = cumtrapz(vx_wiggle);
  }

  ReferenceTrajectory traj;
  traj.name = "bound";
  traj.period = T;
  traj.stance_lead = lead;
  traj.foot_x_offset = {off_front, off_front, off_hind, off_hind};
  traj.samples.reserve(static_cast<size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    const double t = k * dt;
    TrajectorySample s;
    s.t = t;
    s.p = Vec3(speed * t + x_wiggle[static_cast<size_t>(k)], 0.0, z_at(k));
    s.v = Vec3(speed + vx_wiggle[static_cast<size_t>(k)], 0.0,
               vz[static_cast<size_t>(k)] + vz_init);
    s.R = exp_so3(Vec3(0.0, pitch_at(k), 0.0));
    s.w = Vec3(0.0, wy[static_cast<size_t>(k)] + wy_init, 0.0);
    const bool front = prof.front_stance(t);
    const bool hind = prof.hind_stance(t);
    s.contact = {front, front, hind, hind};
    const double fz_leg = prof.fz(t) / 2.0;
    const double fx_leg = fx_pair[static_cast<size_t>(k)] / 2.0;
    s.u.setZero();
    if (front) {
      s.u[0] = fx_leg;
      s.u[2] = fz_leg;
      s.u[3] = fx_leg;
      s.u[5] = fz_leg;
    } else if (hind) {
      s.u[6] = fx_leg;
      s.u[8] = fz_leg;
      s.u[9] = fx_leg;
      s.u[11] = fz_leg;
    }
    traj.samples.push_back(s);
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Twist jump

struct TwistJumpOptions {
  double slope_deg = 45.0;
  double t_phase1 = 0.1;  // all four legs in stance
  double t_phase2 = 0.1;  // hind legs only
  double t_flight = 0.3;
  double yaw_target = M_PI;  // twist about the slope normal
  double pitch_back = 0.72;  // extra pitch over the hind legs at liftoff
  double liftoff_twist_frac = 0.08;  // share of the twist done before liftoff
  double w_effort = 2e-4;
  double w_orient = 60.0;
  double w_waypoint = 25.0;
  double w_position = 20.0;
  double w_rate = 2.0;  // match the liftoff rate to the flight rotation
  int max_outer = 8;
  int max_inner = 120;
  int restarts = 3;
  unsigned seed = 0;
  double dt_rollout = 2.5e-3;
};

struct TwistJumpSetup {
  Mat3 R_slope;                // world-from-slope frame
  Mat3 R0;                     // initial body orientation (matches slope)
  Vec3 p0;                     // initial CoM
  std::array<Vec3, 4> feet;    // footholds on the slope
  Mat3 R_liftoff;              // shaping waypoint at end of phase 2
  Mat3 R_target;               // landing orientation
};

inline TwistJumpSetup twist_jump_setup(const RobotParams& params,
                                       const TwistJumpOptions& opt) {
  TwistJumpSetup s;
  const double beta = opt.slope_deg * M_PI / 180.0;
  s.R_slope = exp_so3(Vec3(0.0, -beta, 0.0));
  s.R0 = s.R_slope;
  s.p0 = s.R_slope * Vec3(0.0, 0.0, params.nominal_height);
  for (int i = 0; i < 4; ++i) {
    s.feet[static_cast<size_t>(i)] =
        s.R_slope * (params.hip_offsets[static_cast<size_t>(i)]);
  }
  const Vec3 normal = s.R_slope.col(2);
  // half twist about the slope normal brings the robot back onto the slope
  // facing the other way
  s.R_target = exp_so3(opt.yaw_target * normal) * s.R0;
  // waypoint: pitched back over the hind feet (nose near vertical) with a
  // small share of the twist under way; most of the twist happens in flight
  s.R_liftoff = exp_so3(opt.liftoff_twist_frac * opt.yaw_target * normal) *
                exp_so3(Vec3(0.0, -opt.pitch_back, 0.0)) * s.R0;
  return s;
}

// Decision vector layout: u[0..11] phase-1 GRFs (4 legs), u[12..23]
// phase-2 GRFs (front entries are zeroed in the rollout).
struct TwistJumpRollout {
  SrbState liftoff;    // end of phase 2
  SrbState landing;    // end of flight
  ReferenceTrajectory traj;
};

inline TwistJumpRollout twist_jump_rollout(
    const Eigen::Matrix<double, 24, 1>& vars, const TwistJumpSetup& setup,
    const RobotParams& params, const TwistJumpOptions& opt,
    bool record = false) {
  TwistJumpRollout out;
  SrbState state;
  state.p = setup.p0;
  state.R = setup.R0;
  const double dt = opt.dt_rollout;

  const auto phase_forces = [&](int phase) {
    FootForces f;
    f.feet = setup.feet;
    for (int i = 0; i < 4; ++i) {
      Vec3 u = vars.segment<3>(12 * phase + 3 * i);
      if (phase == 1 && i < 2) u.setZero();  // front legs lifted
      f.u[static_cast<size_t>(i)] = u;
    }
    return f;
  };

  double t = 0.0;
  const auto record_sample = [&](const FootForces& f,
                                 const std::array<bool, 4>& contact) {
    if (!record) return;
    TrajectorySample s;
    s.t = t;
    s.p = state.p;
    s.v = state.v;
    s.R = state.R;
    s.w = state.omega;
    for (int i = 0; i < 4; ++i) {
      s.u.segment<3>(3 * i) = f.u[static_cast<size_t>(i)];
    }
    s.contact = contact;
    out.traj.samples.push_back(s);
  };

  const std::array<std::array<bool, 4>, 3> contacts = {
      std::array<bool, 4>{true, true, true, true},
      std::array<bool, 4>{false, false, true, true},
      std::array<bool, 4>{false, false, false, false}};
  const std::array<double, 3> durations = {opt.t_phase1, opt.t_phase2,
                                           opt.t_flight};
  for (int phase = 0; phase < 3; ++phase) {
    const FootForces f =
        (phase < 2) ? phase_forces(phase) : FootForces{};
    const int steps = static_cast<int>(
        std::lround(durations[static_cast<size_t>(phase)] / dt));
    for (int k = 0; k < steps; ++k) {
      record_sample(f, contacts[static_cast<size_t>(phase)]);
      state = integrate_step(state, f, params, dt);
      t += dt;
    }
    if (phase == 1) out.liftoff = state;
  }
  record_sample(FootForces{}, contacts[2]);
  out.landing = state;
  out.traj.name = "twist_jump";
  return out;
}

// Augmented-Lagrangian objective pieces -------------------------------------

namespace detail {

// friction pyramid in the slope frame plus normal-force bounds, stacked as
// g(u) <= 0; 6 rows per active leg per phase.
inline Eigen::VectorXd twist_jump_constraints(
    const Eigen::Matrix<double, 24, 1>& vars, const TwistJumpSetup& setup,
    const RobotParams& params) {
  std::vector<double> g;
  for (int phase = 0; phase < 2; ++phase) {
    for (int i = 0; i < 4; ++i) {
      if (phase == 1 && i < 2) continue;
      const Vec3 f_slope =
          setup.R_slope.transpose() * vars.segment<3>(12 * phase + 3 * i);
      g.push_back(f_slope.x() - params.mu * f_slope.z());
      g.push_back(-f_slope.x() - params.mu * f_slope.z());
      g.push_back(f_slope.y() - params.mu * f_slope.z());
      g.push_back(-f_slope.y() - params.mu * f_slope.z());
      g.push_back(f_slope.z() - params.u_z_max);
      g.push_back(-f_slope.z() + params.u_z_min);
    }
  }
  return Eigen::Map<Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

}  // namespace detail

// Single-shooting trajectory optimization: finite-difference gradient
// descent with backtracking inside an augmented-Lagrangian loop, restarted
// from perturbed heuristic seeds.  Returns the best feasible rollout.
inline ReferenceTrajectory twist_jump_reference(const RobotParams& params,
                                                const TwistJumpOptions& opt) {
  if (opt.slope_deg < 30.0 || opt.slope_deg > 60.0) {
    throw NoFeasibleSolution("twist_jump_reference: slope outside [30,60] deg");
  }
  const TwistJumpSetup setup = twist_jump_setup(params, opt);

  // flight rotation implied by the waypoint: constant world angular velocity
  // that carries R_liftoff to R_target over the flight time
  const Vec3 sigma_flight =
      log_so3(project_to_so3(setup.R_target * setup.R_liftoff.transpose()));
  const Vec3 w_world_des = sigma_flight / opt.t_flight;
  const Vec3 w_body_des = setup.R_liftoff.transpose() * w_world_des;

  const auto objective = [&](const Eigen::Matrix<double, 24, 1>& v) {
    const TwistJumpRollout r = twist_jump_rollout(v, setup, params, opt);
    double j = opt.w_effort * v.squaredNorm();
    j += opt.w_orient *
         log_so3(project_to_so3(setup.R_target.transpose() * r.landing.R))
             .squaredNorm();
    j += opt.w_waypoint *
         log_so3(project_to_so3(setup.R_liftoff.transpose() * r.liftoff.R))
             .squaredNorm();
    j += opt.w_position * (r.landing.p - setup.p0).squaredNorm();
    j += opt.w_rate * (r.liftoff.omega - w_body_des).squaredNorm();
    return j;
  };

  // heuristic seed: distribute the wrench needed to build the flight
  // momentum and the ballistic launch velocity across the stance legs by
  // least squares on the grasp map
  const Vec3 v_des =
      Vec3(0.0, 0.0, 0.5 * params.gravity * opt.t_flight);  // land at height
  const Mat3 iw0 = setup.R0 * params.inertia_body * setup.R0.transpose();
  const Vec3 l_des = iw0 * w_world_des;
  const auto grasp_seed = [&](const std::vector<int>& legs, const Vec3& force,
                              const Vec3& torque) {
    Eigen::MatrixXd a(6, 3 * static_cast<Eigen::Index>(legs.size()));
    for (size_t i = 0; i < legs.size(); ++i) {
      a.block<3, 3>(0, 3 * static_cast<Eigen::Index>(i)) = Mat3::Identity();
      a.block<3, 3>(3, 3 * static_cast<Eigen::Index>(i)) =
          hat(setup.feet[static_cast<size_t>(legs[i])] - setup.p0);
    }
    Eigen::Matrix<double, 6, 1> b;
    b << force, torque;
    return Eigen::VectorXd(a.completeOrthogonalDecomposition().solve(b));
  };
  const double mg = params.mass * params.gravity;
  Eigen::Matrix<double, 24, 1> seed0 = Eigen::Matrix<double, 24, 1>::Zero();
  {
    // phase 1: support plus 30 % of the momentum build
    const Vec3 f1 = mg * Vec3::UnitZ() +
                    0.3 * params.mass * v_des / opt.t_phase1;
    const Eigen::VectorXd s1 =
        grasp_seed({0, 1, 2, 3}, f1, 0.3 * l_des / opt.t_phase1);
    seed0.segment<12>(0) = s1;
    // phase 2: hind legs carry the support and the remaining 70 %
    const Vec3 f2 = mg * Vec3::UnitZ() +
                    0.7 * params.mass * v_des / opt.t_phase2;
    const Eigen::VectorXd s2 =
        grasp_seed({2, 3}, f2, 0.7 * l_des / opt.t_phase2);
    seed0.segment<6>(18) = s2;
  }

  std::mt19937 rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  double best_merit = std::numeric_limits<double>::infinity();
  Eigen::Matrix<double, 24, 1> best = seed0;
  bool found = false;

  for (int attempt = 0; attempt <= opt.restarts; ++attempt) {
    Eigen::Matrix<double, 24, 1> v = seed0;
    if (attempt > 0) {
      for (int i = 0; i < 24; ++i) v[i] += 4.0 * gauss(rng);
      v.segment<3>(12).setZero();
      v.segment<3>(15).setZero();
    }

    Eigen::VectorXd lambda =
        Eigen::VectorXd::Zero(detail::twist_jump_constraints(v, setup, params).size());
    double rho = 10.0;

    for (int outer = 0; outer < opt.max_outer; ++outer) {
      const auto merit = [&](const Eigen::Matrix<double, 24, 1>& x) {
        const Eigen::VectorXd g = detail::twist_jump_constraints(x, setup, params);
        double m = objective(x);
        for (Eigen::Index i = 0; i < g.size(); ++i) {
          const double viol = std::max(0.0, lambda[i] / rho + g[i]);
          m += 0.5 * rho * (viol * viol - (lambda[i] / rho) * (lambda[i] / rho));
        }
        return m;
      };

      double step = 0.5;
      for (int inner = 0; inner < opt.max_inner; ++inner) {
        Eigen::Matrix<double, 24, 1> grad;
        const double h = 1e-4;
        for (int i = 0; i < 24; ++i) {
          if (i >= 12 && i < 18) {  // frozen front-leg phase-2 entries
            grad[i] = 0.0;
            continue;
          }
          Eigen::Matrix<double, 24, 1> vp = v, vm = v;
          vp[i] += h;
          vm[i] -= h;
          grad[i] = (merit(vp) - merit(vm)) / (2.0 * h);
        }
        const double gnorm = grad.norm();
        if (gnorm < 1e-6) break;
        const double m0 = merit(v);
        bool moved = false;
        for (int bt = 0; bt < 12; ++bt) {
          const Eigen::Matrix<double, 24, 1> trial = v - (step / gnorm) * grad;
          if (merit(trial) < m0) {
            v = trial;
            step = std::min(4.0, step * 1.6);
            moved = true;
            break;
          }
          step *= 0.5;
        }
        if (!moved) break;
      }

      const Eigen::VectorXd g = detail::twist_jump_constraints(v, setup, params);
      double max_viol = 0.0;
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        lambda[i] = std::max(0.0, lambda[i] + rho * g[i]);
        max_viol = std::max(max_viol, g[i]);
      }
      if (max_viol < 1e-4) break;
      rho *= 4.0;
    }

    const Eigen::VectorXd g = detail::twist_jump_constraints(v, setup, params);
    const double viol = g.maxCoeff();
    if (viol < 1e-3) {
      const double j = objective(v);
      if (j < best_merit) {
        best_merit = j;
        best = v;
        found = true;
      }
    }
    if (found) break;  // later restarts only run when earlier seeds fail
  }

  if (!found) {
    throw NoFeasibleSolution(
        "twist_jump_reference: no feasible solution within restart budget");
  }
  TwistJumpOptions fine = opt;
  fine.dt_rollout = 1e-3;
  return twist_jump_rollout(best, setup, params, fine, /*record=*/true).traj;
}

}  // namespace rfmpc
