#pragma once

// Variation-based linearization of the single-rigid-body dynamics about an
// operating point: the rotation is written R = R_op exp(hat(xi)) and the
// discrete affine model x+ = A x + B du + d is assembled in the 12-dim
// state x = [p; pdot; xi; omega_b].

#include <Eigen/Dense>

#include <array>
#include <vector>

#include "rfmpc/errors.hpp"
#include "rfmpc/so3.hpp"
#include "rfmpc/srb_model.hpp"

namespace rfmpc {

using MpcState = Eigen::Matrix<double, 12, 1>;
using Mat12 = Eigen::Matrix<double, 12, 12>;

struct OperatingPoint {
  SrbState state;
  Vec12 u_op = Vec12::Zero();   // stacked GRFs, swing entries zero
  std::array<Vec3, 4> feet = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero(),
                              Vec3::Zero()};  // footholds, inertial frame

  Vec3 leg_force(int i) const { return u_op.segment<3>(3 * i); }

  Vec3 net_torque() const {
    Vec3 tau = Vec3::Zero();
    for (int i = 0; i < 4; ++i) {
      tau += (feet[static_cast<size_t>(i)] - state.p).cross(leg_force(i));
    }
    return tau;
  }
};

struct AffineDynamics {
  Mat12 A = Mat12::Identity();
  Mat12 B = Mat12::Zero();
  MpcState d = MpcState::Zero();
  double dt = 0.0;
};

enum class LinScheme {
  kOperatingPoint,      // one LTI triple reused over the horizon (scheme 2)
  kReferenceTrajectory  // one LTV triple per reference point (scheme 1)
};

// Coefficients of the linearized angular dynamics (constants of the
// vectorized xi update and of I wdot = C_c + C_dp p + C_xi xi + C_w w +
// C_du du).  The xi-side constants live in vec(3x3) coordinates.
struct WdotCoefficients {
  Vec3 c_const;
  Mat3 c_dp;
  Mat3 c_xi;
  Mat3 c_omega;
  Eigen::Matrix<double, 3, 12> c_du;
  Eigen::Matrix<double, 9, 1> xi_const;
  Eigen::Matrix<double, 9, 3> xi_xi;
  Eigen::Matrix<double, 9, 3> xi_omega;
};

inline WdotCoefficients wdot_coefficients(const OperatingPoint& op,
                                          const RobotParams& params) {
  const auto& basis = VecHatBasis::instance();
  const Mat3& R = op.state.R;
  const Vec3& w = op.state.omega;
  const Mat3 w_hat = hat(w);
  const Mat3& Ib = params.inertia_body;
  const Vec3 tau = op.net_torque();

  WdotCoefficients c;

  const auto kron_I_A = [](const Mat3& a) {
    Eigen::Matrix<double, 9, 9> k = Eigen::Matrix<double, 9, 9>::Zero();
    for (int i = 0; i < 3; ++i) k.block<3, 3>(3 * i, 3 * i) = a;
    return k;
  };

  c.xi_const = vec3x3(R * w_hat) - kron_I_A(R) * basis.N * w;
  c.xi_xi = kron_I_A(R * w_hat) * basis.N - kron_I_A(R) * basis.N * w_hat;
  c.xi_omega = kron_I_A(R) * basis.N;

  Mat3 sum_u_hat = Mat3::Zero();
  for (int i = 0; i < 4; ++i) sum_u_hat += hat(op.leg_force(i));

  const Mat3 coriolis = hat(Ib * w) - w_hat * Ib;

  c.c_dp = R.transpose() * sum_u_hat;
  // Coupling of the torque through the rotation variation: d/dxi of
  // exp(-hat(xi)) R_op^T tau_op, i.e. hat(R_op^T tau_op).
  c.c_xi = hat(R.transpose() * tau);
  c.c_omega = coriolis;
  c.c_const = -w_hat * (Ib * w) + R.transpose() * tau - coriolis * w -
              c.c_dp * op.state.p;
  for (int i = 0; i < 4; ++i) {
    c.c_du.block<3, 3>(0, 3 * i) =
        R.transpose() * hat(op.feet[static_cast<size_t>(i)] - op.state.p);
  }
  return c;
}

// Discrete affine triple at one operating point.  Translational rows are
// forward Euler like the rotational ones.
inline AffineDynamics build_affine_step(const OperatingPoint& op,
                                        const RobotParams& params, double dt) {
  const auto& basis = VecHatBasis::instance();
  const WdotCoefficients c = wdot_coefficients(op, params);
  const Mat3& R = op.state.R;
  const Mat3 Ib_inv = params.inertia_inv();

  AffineDynamics dyn;
  dyn.dt = dt;
  const Mat3 I3 = Mat3::Identity();

  // p row: p+ = p + dt v
  dyn.A.block<3, 3>(0, 3) = dt * I3;

  // v row: v+ = v + dt ((sum u_op + sum du)/M + a_g)
  Vec3 sum_u = Vec3::Zero();
  for (int i = 0; i < 4; ++i) sum_u += op.leg_force(i);
  dyn.d.segment<3>(3) = dt * (sum_u / params.mass + params.weight_accel());
  for (int i = 0; i < 4; ++i) {
    dyn.B.block<3, 3>(3, 3 * i) = (dt / params.mass) * I3;
  }

  // xi row: xi+ = xi + dt N* (I kron R^T) (C_c + C_xi xi + C_w w)
  Eigen::Matrix<double, 3, 9> G;
  for (int i = 0; i < 3; ++i) {
    G.block<3, 3>(0, 3 * i) =
        basis.Nstar.block<3, 3>(0, 3 * i) * R.transpose();
  }
  dyn.A.block<3, 3>(6, 6) += dt * G * c.xi_xi;
  dyn.A.block<3, 3>(6, 9) = dt * G * c.xi_omega;
  dyn.d.segment<3>(6) = dt * G * c.xi_const;

  // omega row: w+ = w + dt I^-1 (C_c + C_dp p + C_xi xi + C_w w + C_du du)
  dyn.A.block<3, 3>(9, 0) = dt * Ib_inv * c.c_dp;
  dyn.A.block<3, 3>(9, 6) = dt * Ib_inv * c.c_xi;
  dyn.A.block<3, 3>(9, 9) += dt * Ib_inv * c.c_omega;
  dyn.B.block<3, 12>(9, 0) = dt * Ib_inv * c.c_du;
  dyn.d.segment<3>(9) = dt * Ib_inv * c.c_const;

  return dyn;
}

// Scheme 2 returns a single LTI triple; scheme 1 one triple per reference
// operating point over the horizon.
inline std::vector<AffineDynamics> build_affine_dynamics(
    const OperatingPoint& op, const RobotParams& params, double dt,
    LinScheme scheme,
    const std::vector<OperatingPoint>* reference = nullptr) {
  if (scheme == LinScheme::kOperatingPoint) {
    return {build_affine_step(op, params, dt)};
  }
  if (reference == nullptr || reference->empty()) {
    throw MissingReference(
        "build_affine_dynamics: reference scheme requires a horizon of "
        "reference operating points");
  }
  std::vector<AffineDynamics> out;
  out.reserve(reference->size());
  for (const auto& ref_op : *reference) {
    out.push_back(build_affine_step(ref_op, params, dt));
  }
  return out;
}

inline MpcState lift_state(const SrbState& state, const OperatingPoint& op) {
  MpcState x;
  x.segment<3>(0) = state.p;
  x.segment<3>(3) = state.v;
  x.segment<3>(6) = log_so3(op.state.R.transpose() * state.R);
  x.segment<3>(9) = state.omega;
  return x;
}

inline SrbState retract_state(const MpcState& x, const OperatingPoint& op) {
  SrbState s;
  s.p = x.segment<3>(0);
  s.v = x.segment<3>(3);
  s.R = op.state.R * exp_so3(x.segment<3>(6));
  s.omega = x.segment<3>(9);
  return s;
}

}  // namespace rfmpc
