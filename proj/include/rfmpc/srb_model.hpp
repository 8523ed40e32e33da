#pragma once

// Nonlinear single-rigid-body model and the fixed-step integrator used as
// the simulation plant.  Legs are massless force applicators; the only
// inputs are ground reaction forces at the four feet.

#include <Eigen/Dense>

#include <array>
#include <cmath>

#include "rfmpc/so3.hpp"

namespace rfmpc {

using Vec12 = Eigen::Matrix<double, 12, 1>;

// Leg indexing convention: 0 = FL, 1 = FR, 2 = HL, 3 = HR.
enum LegIndex { kFL = 0, kFR = 1, kHL = 2, kHR = 3 };

struct RobotParams {
  double mass = 5.5;                    // kg
  Mat3 inertia_body = Mat3::Identity(); // kg m^2, body frame
  double body_length = 0.3;             // m
  double body_width = 0.2;              // m
  double link_length = 0.14;            // m
  double gravity = 9.81;                // m/s^2
  double mu = 0.7;                      // friction coefficient
  double u_z_max = 60.0;                // N
  double u_z_min = 0.0;                 // N
  double nominal_height = 0.2;          // m, standing CoM height
  std::array<Vec3, 4> hip_offsets{};    // body frame, m

  Mat3 inertia_inv() const { return inertia_body.inverse(); }

  Vec3 weight_accel() const { return Vec3(0, 0, -gravity); }

  // Parameters of the 5.5 kg robot used for all experiments.  Hip offsets
  // are placed at half body length/width; these are not measured values.
  static RobotParams panther() {
    RobotParams p;
    p.inertia_body = Vec3(0.026, 0.112, 0.075).asDiagonal();
    const double hx = p.body_length / 2.0;
    const double hy = p.body_width / 2.0;
    p.hip_offsets = {Vec3(hx, hy, 0), Vec3(hx, -hy, 0),
                     Vec3(-hx, hy, 0), Vec3(-hx, -hy, 0)};
    return p;
  }
};

struct SrbState {
  Vec3 p = Vec3::Zero();      // CoM position, inertial frame
  Vec3 v = Vec3::Zero();      // CoM velocity, inertial frame
  Mat3 R = Mat3::Identity();  // body-to-inertial rotation
  Vec3 omega = Vec3::Zero();  // angular velocity, body frame

  Vec3 hip_position(const RobotParams& params, int leg) const {
    return p + R * params.hip_offsets[static_cast<size_t>(leg)];
  }
};

struct FootForces {
  // note: Eigen vectors are NOT zeroed by value-initialization
  std::array<Vec3, 4> u = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero(),
                           Vec3::Zero()};  // GRF per leg, inertial frame
  std::array<Vec3, 4> feet = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero(),
                              Vec3::Zero()};  // foot positions, inertial frame
};

struct Wrench {
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();
};

inline Wrench net_wrench(const SrbState& state, const FootForces& forces) {
  Wrench w;
  for (int i = 0; i < 4; ++i) {
    w.force += forces.u[i];
    w.torque += (forces.feet[i] - state.p).cross(forces.u[i]);
  }
  return w;
}

struct SrbDerivative {
  Vec3 pdot;
  Vec3 pddot;
  Vec3 omega_dot;  // body frame; Rdot = R hat(omega) is implicit
};

inline SrbDerivative continuous_dynamics(const SrbState& state,
                                         const FootForces& forces,
                                         const RobotParams& params,
                                         const Wrench* external = nullptr) {
  Wrench w = net_wrench(state, forces);
  if (external != nullptr) {
    w.force += external->force;
    w.torque += external->torque;
  }
  SrbDerivative d;
  d.pdot = state.v;
  d.pddot = w.force / params.mass + params.weight_accel();
  d.omega_dot = params.inertia_body.ldlt().solve(
      state.R.transpose() * w.torque -
      state.omega.cross(params.inertia_body * state.omega));
  return d;
}

namespace detail {

// Sigma rate for the update R+ = R exp(sigma) with body angular velocity w:
// sigma_dot = dexpinv(-sigma, w), truncated after the second Bernoulli
// term -- sufficient for a 4th-order step with |sigma| ~ w dt.
inline Vec3 dexpinv_so3(const Vec3& sigma, const Vec3& w) {
  return w + 0.5 * sigma.cross(w) + (1.0 / 12.0) * sigma.cross(sigma.cross(w));
}

}  // namespace detail

// One RK4 step with the rotation handled multiplicatively (Munthe-Kaas
// form, R+ = R exp(sigma)) so the state never leaves SO(3); the result is
// re-orthonormalized only if numerical drift exceeds 1e-9.
inline SrbState integrate_step(const SrbState& state, const FootForces& forces,
                               const RobotParams& params, double dt,
                               const Wrench* external = nullptr) {
  struct Stage {
    Vec3 p, v, sigma, omega;
  };
  const auto deriv = [&](const Stage& s) -> Stage {
    SrbState x;
    x.p = s.p;
    x.v = s.v;
    x.R = state.R * exp_so3(s.sigma);
    x.omega = s.omega;
    const SrbDerivative d = continuous_dynamics(x, forces, params, external);
    return {d.pdot, d.pddot, detail::dexpinv_so3(s.sigma, s.omega),
            d.omega_dot};
  };

  const Stage y0{state.p, state.v, Vec3::Zero(), state.omega};
  const auto advance = [&](const Stage& k, double h) -> Stage {
    return {y0.p + h * k.p, y0.v + h * k.v, y0.sigma + h * k.sigma,
            y0.omega + h * k.omega};
  };

  const Stage k1 = deriv(y0);
  const Stage k2 = deriv(advance(k1, dt / 2));
  const Stage k3 = deriv(advance(k2, dt / 2));
  const Stage k4 = deriv(advance(k3, dt));

  SrbState out;
  out.p = state.p + dt / 6.0 * (k1.p + 2 * k2.p + 2 * k3.p + k4.p);
  out.v = state.v + dt / 6.0 * (k1.v + 2 * k2.v + 2 * k3.v + k4.v);
  out.omega =
      state.omega + dt / 6.0 * (k1.omega + 2 * k2.omega + 2 * k3.omega + k4.omega);
  const Vec3 sigma =
      dt / 6.0 * (k1.sigma + 2 * k2.sigma + 2 * k3.sigma + k4.sigma);
  out.R = state.R * exp_so3(sigma);
  if ((out.R.transpose() * out.R - Mat3::Identity()).norm() > 1e-9) {
    out.R = project_to_so3(out.R);
  }
  return out;
}

}  // namespace rfmpc
