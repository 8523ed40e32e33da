#pragma once

// Euler-angle baseline MPC: same horizon, costs, force constraints, and QP
// backend as the rotation-variation controller, but with the orientation
// represented by Z-Y-X Euler angles and the kinematics Theta_dot =
// T(Theta)^-1 * omega linearized at the current attitude.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <vector>

#include "rfmpc/errors.hpp"
#include "rfmpc/mpc.hpp"
#include "rfmpc/qp.hpp"
#include "rfmpc/so3.hpp"
#include "rfmpc/srb_model.hpp"

namespace rfmpc {

// Z-Y-X Euler angles Theta = [roll, pitch, yaw]: R = Rz(yaw) Ry(pitch)
// Rx(roll).
inline Mat3 rotation_from_euler(const Vec3& theta) {
  return (Eigen::AngleAxisd(theta.z(), Vec3::UnitZ()) *
          Eigen::AngleAxisd(theta.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(theta.x(), Vec3::UnitX()))
      .toRotationMatrix();
}

inline Vec3 euler_from_rotation(const Mat3& r) {
  const double pitch = -std::asin(std::min(1.0, std::max(-1.0, r(2, 0))));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return Vec3(roll, pitch, yaw);
}

// Rate map: world angular velocity = T(Theta) * Theta_dot.  Columns are the
// world-frame directions of the roll, pitch, and yaw rate axes.
inline Mat3 euler_rate_map(const Vec3& theta) {
  const double ct = std::cos(theta.y()), st = std::sin(theta.y());
  const double cp = std::cos(theta.z()), sp = std::sin(theta.z());
  Mat3 t;
  t << ct * cp, -sp, 0.0,
       ct * sp,  cp, 0.0,
       -st,      0.0, 1.0;
  return t;
}

// Inverse condition number of the rate map: sigma_min / sigma_max, zero at
// the pitch = +-90 deg representation singularity.
inline double singularity_metric(const Mat3& rate_map) {
  const Eigen::JacobiSVD<Mat3> svd(rate_map);
  return svd.singularValues().minCoeff() / svd.singularValues().maxCoeff();
}

inline double singularity_metric_at(const Mat3& rotation) {
  return singularity_metric(euler_rate_map(euler_from_rotation(rotation)));
}

// QP over z = [du_0; x_1; ...] with the 12-dim state
// x = [p; v; Theta; omega_world].
inline MpcQp assemble_ea_qp(const SrbState& x0,
                            const std::array<Vec3, 4>& feet_now,
                            const ReferenceWindow& ref, const GainSet& gains,
                            const RobotParams& params,
                            bool enforce_force_limits = true) {
  const int N = gains.horizon;
  ref.validate(N);
  const double dt = gains.dt_mpc;

  const Vec3 theta0 = euler_from_rotation(x0.R);
  if (std::abs(theta0.y()) >= M_PI / 2.0) {
    throw RateMapNearSingular("assemble_ea_qp: |pitch| >= 90 deg");
  }
  const Mat3 t_map = euler_rate_map(theta0);
  if (singularity_metric(t_map) < 1e-6) {
    throw RateMapNearSingular("assemble_ea_qp: rate map near singular");
  }
  const Mat3 t_inv = t_map.inverse();

  // world-frame inertia frozen at the current attitude
  const Mat3 iw = x0.R * params.inertia_body * x0.R.transpose();
  const Mat3 iw_inv = iw.inverse();

  MpcQp out;
  out.horizon = N;
  out.u_base.resize(static_cast<size_t>(N));
  for (int k = 0; k < N; ++k) {
    out.u_base[static_cast<size_t>(k)] =
        detail::support_forces(params, ref.contact[static_cast<size_t>(k)]);
  }

  // LTI triple at the current attitude
  Mat12 A = Mat12::Identity();
  Mat12 B = Mat12::Zero();
  MpcState d = MpcState::Zero();
  A.block<3, 3>(0, 3) = dt * Mat3::Identity();
  A.block<3, 3>(6, 9) = dt * t_inv;
  for (int i = 0; i < 4; ++i) {
    B.block<3, 3>(3, 3 * i) = (dt / params.mass) * Mat3::Identity();
    B.block<3, 3>(9, 3 * i) =
        dt * iw_inv * hat(feet_now[static_cast<size_t>(i)] - x0.p);
  }
  Vec3 sum_u = Vec3::Zero();
  Vec3 tau = Vec3::Zero();
  for (int i = 0; i < 4; ++i) {
    const Vec3 f = out.u_base[0].segment<3>(3 * i);
    sum_u += f;
    tau += (feet_now[static_cast<size_t>(i)] - x0.p).cross(f);
  }
  d.segment<3>(3) = dt * (sum_u / params.mass + params.weight_accel());
  d.segment<3>(9) = dt * iw_inv * tau;

  MpcState x_init;
  x_init.segment<3>(0) = x0.p;
  x_init.segment<3>(3) = x0.v;
  x_init.segment<3>(6) = theta0;
  x_init.segment<3>(9) = x0.R * x0.omega;  // world angular velocity

  std::vector<MpcState> x_ref(static_cast<size_t>(N) + 1);
  for (int k = 0; k <= N; ++k) {
    MpcState& xr = x_ref[static_cast<size_t>(k)];
    xr.segment<3>(0) = ref.p_d[static_cast<size_t>(k)];
    xr.segment<3>(3) = ref.v_d[static_cast<size_t>(k)];
    xr.segment<3>(6) = euler_from_rotation(ref.R_d[static_cast<size_t>(k)]);
    xr.segment<3>(9) =
        ref.R_d[static_cast<size_t>(k)] * ref.w_d[static_cast<size_t>(k)];
  }

  const Eigen::Index nz = 24 * N;
  QpProblem& qp = out.qp;
  qp.c = Eigen::VectorXd::Zero(nz);
  std::vector<Eigen::Triplet<double>> pt;
  for (int k = 0; k < N; ++k) {
    const double decay = std::pow(gains.decay, k);
    const Eigen::Index iu = out.du_index(k);
    for (int leg = 0; leg < 4; ++leg) {
      for (int a = 0; a < 3; ++a) {
        const Eigen::Index idx = iu + 3 * leg + a;
        pt.emplace_back(idx, idx, 2.0 * decay * gains.r_u[a]);
        qp.c[idx] += 2.0 * decay * gains.r_u[a] *
                     (out.u_base[static_cast<size_t>(k)][3 * leg + a] -
                      ref.u_d[static_cast<size_t>(k)][3 * leg + a]);
      }
    }
    const bool terminal = (k == N - 1);
    const double w_decay = std::pow(gains.decay, k + 1);
    Eigen::Matrix<double, 12, 1> w;
    w.segment<3>(0) = terminal ? gains.q_p_term : gains.q_p;
    w.segment<3>(3) = terminal ? gains.q_v_term : gains.q_v;
    w.segment<3>(6) = terminal ? gains.q_R_term : gains.q_R;
    w.segment<3>(9) = terminal ? gains.q_w_term : gains.q_w;
    const Eigen::Index ix = out.x_index(k + 1);
    for (int j = 0; j < 12; ++j) {
      pt.emplace_back(ix + j, ix + j, 2.0 * w_decay * w[j]);
      qp.c[ix + j] -= 2.0 * w_decay * w[j] * x_ref[static_cast<size_t>(k) + 1][j];
    }
  }
  qp.P.resize(nz, nz);
  qp.P.setFromTriplets(pt.begin(), pt.end());

  int swing_rows = 0;
  for (int k = 0; k < N; ++k) swing_rows += 3 * (4 - ref.stance_count(k));
  const Eigen::Index n_eq = 12 * N + swing_rows;
  std::vector<Eigen::Triplet<double>> et;
  qp.b_eq = Eigen::VectorXd::Zero(n_eq);
  Eigen::Index row = 0;
  for (int k = 0; k < N; ++k) {
    MpcState dk = d;
    dk.segment<3>(9) +=
        dt * iw_inv *
        [&] {
          Vec3 t2 = Vec3::Zero();
          for (int i = 0; i < 4; ++i) {
            t2 += (feet_now[static_cast<size_t>(i)] - x0.p)
                      .cross(Vec3(out.u_base[static_cast<size_t>(k)]
                                      .segment<3>(3 * i) -
                                  out.u_base[0].segment<3>(3 * i)));
          }
          return t2;
        }();
    dk.segment<3>(3) += dt / params.mass *
                        Vec3((out.u_base[static_cast<size_t>(k)] -
                              out.u_base[0])
                                 .segment<3>(0) +
                             (out.u_base[static_cast<size_t>(k)] -
                              out.u_base[0])
                                 .segment<3>(3) +
                             (out.u_base[static_cast<size_t>(k)] -
                              out.u_base[0])
                                 .segment<3>(6) +
                             (out.u_base[static_cast<size_t>(k)] -
                              out.u_base[0])
                                 .segment<3>(9));
    const Eigen::Index iu = out.du_index(k);
    for (int r = 0; r < 12; ++r) {
      et.emplace_back(row + r, out.x_index(k + 1) + r, 1.0);
      for (int cidx = 0; cidx < 12; ++cidx) {
        if (B(r, cidx) != 0.0) et.emplace_back(row + r, iu + cidx, -B(r, cidx));
      }
    }
    if (k == 0) {
      qp.b_eq.segment<12>(row) = A * x_init + dk;
    } else {
      const Eigen::Index ixp = out.x_index(k);
      for (int r = 0; r < 12; ++r) {
        for (int cidx = 0; cidx < 12; ++cidx) {
          if (A(r, cidx) != 0.0) {
            et.emplace_back(row + r, ixp + cidx, -A(r, cidx));
          }
        }
      }
      qp.b_eq.segment<12>(row) = dk;
    }
    row += 12;
  }
  for (int k = 0; k < N; ++k) {
    const Eigen::Index iu = out.du_index(k);
    for (int leg = 0; leg < 4; ++leg) {
      if (ref.contact[static_cast<size_t>(k)][static_cast<size_t>(leg)]) {
        continue;
      }
      for (int a = 0; a < 3; ++a) {
        et.emplace_back(row, iu + 3 * leg + a, 1.0);
        qp.b_eq[row] = -out.u_base[static_cast<size_t>(k)][3 * leg + a];
        ++row;
      }
    }
  }
  qp.A_eq.resize(n_eq, nz);
  qp.A_eq.setFromTriplets(et.begin(), et.end());

  if (enforce_force_limits) {
    int stance_rows = 0;
    for (int k = 0; k < N; ++k) stance_rows += 6 * ref.stance_count(k);
    std::vector<Eigen::Triplet<double>> it;
    qp.b_ineq = Eigen::VectorXd::Zero(stance_rows);
    Eigen::Index irow = 0;
    for (int k = 0; k < N; ++k) {
      const Eigen::Index iu = out.du_index(k);
      for (int leg = 0; leg < 4; ++leg) {
        if (!ref.contact[static_cast<size_t>(k)][static_cast<size_t>(leg)]) {
          continue;
        }
        const Eigen::Index ix = iu + 3 * leg;
        const Vec3 ub = out.u_base[static_cast<size_t>(k)].segment<3>(3 * leg);
        const double sgn[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        for (int r = 0; r < 4; ++r) {
          if (sgn[r][0] != 0) it.emplace_back(irow, ix + 0, sgn[r][0]);
          if (sgn[r][1] != 0) it.emplace_back(irow, ix + 1, sgn[r][1]);
          it.emplace_back(irow, ix + 2, -params.mu);
          qp.b_ineq[irow] =
              -(sgn[r][0] * ub[0] + sgn[r][1] * ub[1] - params.mu * ub[2]);
          ++irow;
        }
        it.emplace_back(irow, ix + 2, 1.0);
        qp.b_ineq[irow] = params.u_z_max - ub[2];
        ++irow;
        it.emplace_back(irow, ix + 2, -1.0);
        qp.b_ineq[irow] = ub[2] - params.u_z_min;
        ++irow;
      }
    }
    qp.A_ineq.resize(stance_rows, nz);
    qp.A_ineq.setFromTriplets(it.begin(), it.end());
  } else {
    qp.A_ineq.resize(0, nz);
    qp.b_ineq.resize(0);
  }
  return out;
}

class EaMpcController {
 public:
  EaMpcController(RobotParams params, GainSet gains,
                  SolverSettings solver_settings = {})
      : params_(std::move(params)),
        gains_(std::move(gains)),
        solver_(solver_settings) {}

  void set_force_limits_enabled(bool enabled) { force_limits_ = enabled; }

  MpcSolution solve(const SrbState& x0, const std::array<Vec3, 4>& feet_now,
                    const ReferenceWindow& ref) {
    const MpcQp mpc =
        assemble_ea_qp(x0, feet_now, ref, gains_, params_, force_limits_);
    const SolverResult res = solver_.solve(mpc.qp);
    MpcSolution sol;
    sol.status = res.status;
    sol.iterations = res.iterations;
    sol.solve_time_s = res.solve_time_s;
    if (res.status == SolveStatus::kOptimal ||
        res.status == SolveStatus::kMaxIters) {
      sol.delta_u = res.z.segment<12>(mpc.du_index(0));
      sol.u = mpc.u_base[0] + sol.delta_u;
      sol.fallback = (res.status != SolveStatus::kOptimal);
    } else {
      sol.fallback = true;
      sol.u = have_prev_ ? prev_u_
                         : detail::support_forces(params_, ref.contact[0]);
    }
    prev_u_ = sol.u;
    have_prev_ = true;
    return sol;
  }

  void reset() { have_prev_ = false; }

 private:
  RobotParams params_;
  GainSet gains_;
  QpSolver solver_;
  bool force_limits_ = true;
  bool have_prev_ = false;
  Vec12 prev_u_ = Vec12::Zero();
};

}  // namespace rfmpc
