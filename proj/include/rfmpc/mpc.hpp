#pragma once

// Model predictive controller over the affine rotation-variation dynamics.
//
// Decision vector (per prediction step k = 0..N-1):
//   z = [du_0; x_1; du_1; x_2; ...; du_{N-1}; x_N]  in R^{24N}
// where du_k is the stacked ground-reaction-force variation of the four
// legs and x_k the 12-dim lifted state.  The current state x_0 is known and
// eliminated into the first dynamics equality.
//
// Two linearization schemes are supported:
//  - kOperatingPoint: one LTI triple evaluated at the measured state.
//  - kReferenceTrajectory: an LTV sequence evaluated along the reference,
//    with the residual chosen so the reference is an exact solution of the
//    affine recursion.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <optional>
#include <vector>

#include "rfmpc/errors.hpp"
#include "rfmpc/linearize.hpp"
#include "rfmpc/qp.hpp"
#include "rfmpc/so3.hpp"
#include "rfmpc/srb_model.hpp"

namespace rfmpc {

struct GainSet {
  Vec3 q_p, q_v, q_R, q_w;                          // stage state weights
  Vec3 q_p_term, q_v_term, q_R_term, q_w_term;      // terminal state weights
  Vec3 r_u = Vec3::Constant(0.1);                   // control weight per axis
  int horizon = 6;
  double decay = 1.0;       // per-step cost decay factor
  double dt_mpc = 0.05;     // prediction step length [s]
  double rate_hz = 100.0;   // controller update rate
  double t_stance = 0.3;    // gait stance duration [s]
  double t_swing = 0.15;    // gait swing duration [s]

  static GainSet pose() {
    GainSet g;
    g.q_p = Vec3(3e5, 5e5, 2e5);
    g.q_p_term = Vec3(1e5, 1e5, 1e5);
    g.q_v = Vec3(10, 8, 10);
    g.q_v_term = Vec3(30, 30, 30);
    g.q_R = Vec3(5e2, 2e3, 1e3);
    g.q_R_term = Vec3(5e2, 3e3, 1e3);
    g.q_w = Vec3(2, 4, 3);
    g.q_w_term = g.q_w;
    g.r_u = Vec3::Constant(0.1);
    g.horizon = 7;
    g.decay = 1.0;
    g.dt_mpc = 0.05;
    g.rate_hz = 100.0;
    return g;
  }

  static GainSet trot_walk() {
    GainSet g;
    g.q_p = Vec3(1e5, 2e5, 3e5);
    g.q_v = Vec3(5e2, 1e3, 1e3);
    g.q_R = Vec3(2e3, 2e4, 1.6e3);
    g.q_w = Vec3(80, 80, 20);
    g.q_p_term = g.q_p;
    g.q_v_term = g.q_v;
    g.q_R_term = g.q_R;
    g.q_w_term = g.q_w;
    g.r_u = Vec3(0.1, 0.2, 0.1);
    g.horizon = 6;
    g.decay = 1.0;
    g.dt_mpc = 0.08;
    g.rate_hz = 100.0;
    g.t_stance = 0.3;
    g.t_swing = 0.15;
    return g;
  }

  static GainSet bound() {
    GainSet g;
    g.q_p = Vec3(8e4, 5e4, 3e6);
    g.q_p_term = g.q_p;
    g.q_v = Vec3(4e3, 5e2, 7e2);
    g.q_v_term = Vec3(5e2, 5e2, 5e2);
    g.q_R = Vec3(8e3, 5e5, 8e3);
    g.q_R_term = Vec3(8e3, 5e4, 8e3);
    g.q_w = Vec3(2e2, 1e2, 2e2);
    g.q_w_term = g.q_w;
    g.r_u = Vec3::Constant(0.2);
    g.horizon = 20;
    g.decay = 0.9;
    g.dt_mpc = 0.01;
    g.rate_hz = 100.0;
    g.t_stance = 0.1;
    g.t_swing = 0.16;
    return g;
  }

  static GainSet acrobatic() {
    GainSet g;
    g.q_p = Vec3::Constant(5e6);
    g.q_p_term = g.q_p;
    g.q_v = Vec3::Constant(5e3);
    g.q_v_term = g.q_v;
    g.q_R = Vec3::Constant(1e6);
    g.q_R_term = g.q_R;
    g.q_w = Vec3::Constant(5e3);
    g.q_w_term = g.q_w;
    g.r_u = Vec3::Constant(0.1);
    g.horizon = 7;
    g.decay = 0.9;
    g.dt_mpc = 0.01;
    g.rate_hz = 100.0;
    g.t_stance = 0.1;
    g.t_swing = 0.2;
    return g;
  }
};

// Reference samples over the prediction window: states at the N+1 knots,
// controls / contact flags / foot positions on the N intervals.
struct ReferenceWindow {
  std::vector<Vec3> p_d, v_d, w_d;          // size N+1
  std::vector<Mat3> R_d;                    // size N+1
  std::vector<Vec12> u_d;                   // size N
  std::vector<std::array<bool, 4>> contact; // size N
  std::vector<std::array<Vec3, 4>> feet;    // size N

  void validate(int horizon) const {
    const size_t nk = static_cast<size_t>(horizon) + 1;
    const size_t ni = static_cast<size_t>(horizon);
    if (p_d.size() != nk || v_d.size() != nk || w_d.size() != nk ||
        R_d.size() != nk || u_d.size() != ni || contact.size() != ni ||
        feet.size() != ni) {
      throw DimensionMismatch("ReferenceWindow: wrong sample counts");
    }
  }

  int stance_count(int k) const {
    int c = 0;
    for (bool b : contact[static_cast<size_t>(k)]) c += b ? 1 : 0;
    return c;
  }
};

struct MpcSolution {
  Vec12 u = Vec12::Zero();        // total commanded stance forces
  Vec12 delta_u = Vec12::Zero();  // first-step variation
  std::vector<MpcState> predicted;
  SolveStatus status = SolveStatus::kMaxIters;
  int iterations = 0;
  double solve_time_s = 0.0;
  bool fallback = false;
};

namespace detail {

// Evenly distribute the robot's weight over the stance legs of a step.
inline Vec12 support_forces(const RobotParams& params,
                            const std::array<bool, 4>& contact) {
  Vec12 u = Vec12::Zero();
  int n = 0;
  for (bool b : contact) n += b ? 1 : 0;
  if (n == 0) return u;
  const double fz = params.mass * params.gravity / n;
  for (int i = 0; i < 4; ++i) {
    if (contact[static_cast<size_t>(i)]) u[3 * i + 2] = fz;
  }
  return u;
}

}  // namespace detail

// Fully assembled QP plus the bookkeeping needed to interpret its solution.
struct MpcQp {
  QpProblem qp;
  std::vector<Vec12> u_base;  // per-step control around which du is defined
  int horizon = 0;

  Eigen::Index du_index(int k) const { return 24 * k; }
  Eigen::Index x_index(int k) const { return 24 * (k - 1) + 12; }  // k >= 1
};

inline MpcQp assemble_mpc_qp(const SrbState& x0,
                             const std::array<Vec3, 4>& feet_now,
                             const ReferenceWindow& ref, const GainSet& gains,
                             const RobotParams& params, LinScheme scheme,
                             bool enforce_force_limits = true,
                             const Vec12* u_warm = nullptr) {
  const int N = gains.horizon;
  ref.validate(N);
  const double dt = gains.dt_mpc;

  MpcQp out;
  out.horizon = N;
  out.u_base.resize(static_cast<size_t>(N));

  // Per-step base controls: the control cost is centered on the reference
  // feedforward forces under both schemes. Centering it on the previously
  // applied force instead would lag the commanded profile by a control
  // period, which biases the tangential force impulse over a stance.
  for (int k = 0; k < N; ++k) {
    out.u_base[static_cast<size_t>(k)] = ref.u_d[static_cast<size_t>(k)];
  }
  (void)u_warm;

  // Dynamics triples and per-step charts.
  std::vector<AffineDynamics> dyn(static_cast<size_t>(N));
  std::vector<MpcState> x_ref(static_cast<size_t>(N) + 1);
  MpcState x_init;  // x_0 in the chart of step 0

  if (scheme == LinScheme::kOperatingPoint) {
    // Attitude and velocity are linearized once at the current state; the
    // contact geometry still advances along the horizon, using the measured
    // foot while a leg stays in its current stance and the planned foothold
    // after the next touchdown.
    std::array<bool, 4> still_current_stance;
    still_current_stance.fill(true);
    OperatingPoint op;
    op.state = x0;
    for (int k = 0; k < N; ++k) {
      // advance the CoM along the reference displacement so the lever arms
      // to held stance feet shrink as the body travels over them
      op.state.p = x0.p + (ref.p_d[static_cast<size_t>(k)] - ref.p_d[0]);
      for (int i = 0; i < 4; ++i) {
        auto& hold = still_current_stance[static_cast<size_t>(i)];
        hold = hold && ref.contact[static_cast<size_t>(k)][static_cast<size_t>(i)];
        op.feet[static_cast<size_t>(i)] =
            hold ? feet_now[static_cast<size_t>(i)]
                 : ref.feet[static_cast<size_t>(k)][static_cast<size_t>(i)];
      }
      op.u_op = out.u_base[static_cast<size_t>(k)];
      AffineDynamics& dk = dyn[static_cast<size_t>(k)];
      dk = build_affine_step(op, params, dt);
      // the torque row linearizes the lever about the step-start position;
      // recenter its residual on the step midpoint so the held force acts at
      // the average lever over the step
      const Vec3 half_adv = 0.5 * (ref.p_d[static_cast<size_t>(k) + 1] -
                                   ref.p_d[static_cast<size_t>(k)]);
      dk.d.segment<3>(9) += dk.A.block<3, 3>(9, 0) * half_adv;
      // the position and attitude rows integrate the start-of-step rates
      // (forward Euler); promote them to trapezoid along the reference so a
      // zero-deviation rollout reproduces the reference knots
      dk.d.segment<3>(0) += 0.5 * dt *
                            (ref.v_d[static_cast<size_t>(k) + 1] -
                             ref.v_d[static_cast<size_t>(k)]);
      const Mat3 Re_k =
          x0.R.transpose() * ref.R_d[static_cast<size_t>(k)];
      const Mat3 Re_k1 =
          x0.R.transpose() * ref.R_d[static_cast<size_t>(k) + 1];
      dk.d.segment<3>(6) += 0.5 * dt *
                            (Re_k1 * ref.w_d[static_cast<size_t>(k) + 1] -
                             Re_k * ref.w_d[static_cast<size_t>(k)]);
    }
    op.state = x0;
    op.feet = feet_now;
    op.u_op = out.u_base[0];
    x_init = lift_state(x0, op);
    for (int k = 0; k <= N; ++k) {
      MpcState& xr = x_ref[static_cast<size_t>(k)];
      xr.segment<3>(0) = ref.p_d[static_cast<size_t>(k)];
      xr.segment<3>(3) = ref.v_d[static_cast<size_t>(k)];
      const Mat3 R_err = x0.R.transpose() * ref.R_d[static_cast<size_t>(k)];
      xr.segment<3>(6) = log_so3(project_to_so3(R_err));
      xr.segment<3>(9) = R_err * ref.w_d[static_cast<size_t>(k)];
    }
  } else {
    // LTV around the reference; x_k lives in the chart of reference knot k,
    // so the state targets are [p_d; v_d; 0; w_d].
    for (int k = 0; k <= N; ++k) {
      MpcState& xr = x_ref[static_cast<size_t>(k)];
      xr.segment<3>(0) = ref.p_d[static_cast<size_t>(k)];
      xr.segment<3>(3) = ref.v_d[static_cast<size_t>(k)];
      xr.segment<3>(6).setZero();
      xr.segment<3>(9) = ref.w_d[static_cast<size_t>(k)];
    }
    for (int k = 0; k < N; ++k) {
      OperatingPoint op;
      op.state.p = ref.p_d[static_cast<size_t>(k)];
      op.state.v = ref.v_d[static_cast<size_t>(k)];
      op.state.R = ref.R_d[static_cast<size_t>(k)];
      op.state.omega = ref.w_d[static_cast<size_t>(k)];
      op.feet = ref.feet[static_cast<size_t>(k)];
      op.u_op = out.u_base[static_cast<size_t>(k)];
      // Euler residual at the reference point; for a dynamically
      // consistent reference sampled at dt this keeps the reference an
      // O(dt^2)-accurate solution of the affine recursion with du = 0.
      AffineDynamics& dk = dyn[static_cast<size_t>(k)];
      dk = build_affine_step(op, params, dt);
      // recenter the torque residual on the step midpoint (see scheme 2)
      const Vec3 half_adv = 0.5 * (ref.p_d[static_cast<size_t>(k) + 1] -
                                   ref.p_d[static_cast<size_t>(k)]);
      dk.d.segment<3>(9) += dk.A.block<3, 3>(9, 0) * half_adv;
      // promote the forward-Euler position/attitude rows to trapezoid along
      // the reference (see scheme 2)
      dk.d.segment<3>(0) += 0.5 * dt *
                            (ref.v_d[static_cast<size_t>(k) + 1] -
                             ref.v_d[static_cast<size_t>(k)]);
      dk.d.segment<3>(6) += 0.5 * dt *
                            (ref.w_d[static_cast<size_t>(k) + 1] -
                             ref.w_d[static_cast<size_t>(k)]);
    }
    x_init.segment<3>(0) = x0.p;
    x_init.segment<3>(3) = x0.v;
    x_init.segment<3>(6) = log_so3(project_to_so3(ref.R_d[0].transpose() * x0.R));
    x_init.segment<3>(9) = x0.omega;
  }

  // ---- cost
  const Eigen::Index nz = 24 * N;
  QpProblem& qp = out.qp;
  qp.c = Eigen::VectorXd::Zero(nz);
  std::vector<Eigen::Triplet<double>> pt;
  pt.reserve(static_cast<size_t>(nz));

  for (int k = 0; k < N; ++k) {
    const double decay = std::pow(gains.decay, k);
    // control block du_k
    const Eigen::Index iu = out.du_index(k);
    for (int leg = 0; leg < 4; ++leg) {
      for (int a = 0; a < 3; ++a) {
        const Eigen::Index idx = iu + 3 * leg + a;
        pt.emplace_back(idx, idx, 2.0 * decay * gains.r_u[a]);
      }
    }
    if (scheme == LinScheme::kOperatingPoint) {
      // penalize total force deviation from the reference control
      for (int leg = 0; leg < 4; ++leg) {
        for (int a = 0; a < 3; ++a) {
          const Eigen::Index idx = iu + 3 * leg + a;
          qp.c[idx] += 2.0 * decay * gains.r_u[a] *
                       (out.u_base[static_cast<size_t>(k)][3 * leg + a] -
                        ref.u_d[static_cast<size_t>(k)][3 * leg + a]);
        }
      }
    }

    // state block x_{k+1}
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

  // ---- equality constraints: dynamics plus swing-leg force pinning
  int swing_rows = 0;
  for (int k = 0; k < N; ++k) swing_rows += 3 * (4 - ref.stance_count(k));
  const Eigen::Index n_eq = 12 * N + swing_rows;
  std::vector<Eigen::Triplet<double>> et;
  qp.b_eq = Eigen::VectorXd::Zero(n_eq);
  Eigen::Index row = 0;
  for (int k = 0; k < N; ++k) {
    const AffineDynamics& d = dyn[static_cast<size_t>(k)];
    const Eigen::Index iu = out.du_index(k);
    for (int r = 0; r < 12; ++r) {
      et.emplace_back(row + r, out.x_index(k + 1) + r, 1.0);
      for (int cidx = 0; cidx < 12; ++cidx) {
        if (d.B(r, cidx) != 0.0) {
          et.emplace_back(row + r, iu + cidx, -d.B(r, cidx));
        }
      }
    }
    if (k == 0) {
      qp.b_eq.segment<12>(row) = d.A * x_init + d.d;
    } else {
      const Eigen::Index ixp = out.x_index(k);
      for (int r = 0; r < 12; ++r) {
        for (int cidx = 0; cidx < 12; ++cidx) {
          if (d.A(r, cidx) != 0.0) {
            et.emplace_back(row + r, ixp + cidx, -d.A(r, cidx));
          }
        }
      }
      qp.b_eq.segment<12>(row) = d.d;
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
        qp.b_eq[row] =
            -out.u_base[static_cast<size_t>(k)][3 * leg + a];
        ++row;
      }
    }
  }
  qp.A_eq.resize(n_eq, nz);
  qp.A_eq.setFromTriplets(et.begin(), et.end());

  // ---- inequality constraints: friction pyramid + normal force bounds on
  // every stance leg, expressed in the du variables.
  if (enforce_force_limits) {
    int stance_rows = 0;
    for (int k = 0; k < N; ++k) stance_rows += 6 * ref.stance_count(k);
    std::vector<Eigen::Triplet<double>> it;
    qp.b_ineq = Eigen::VectorXd::Zero(stance_rows);
    Eigen::Index irow = 0;
    const double mu = params.mu;
    for (int k = 0; k < N; ++k) {
      const Eigen::Index iu = out.du_index(k);
      for (int leg = 0; leg < 4; ++leg) {
        if (!ref.contact[static_cast<size_t>(k)][static_cast<size_t>(leg)]) {
          continue;
        }
        const Eigen::Index ix = iu + 3 * leg;
        const Vec3 ub = out.u_base[static_cast<size_t>(k)].segment<3>(3 * leg);
        // rows: ux - mu*uz, -ux - mu*uz, uy - mu*uz, -uy - mu*uz <= 0
        const double sgn[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        for (int r = 0; r < 4; ++r) {
          if (sgn[r][0] != 0) it.emplace_back(irow, ix + 0, sgn[r][0]);
          if (sgn[r][1] != 0) it.emplace_back(irow, ix + 1, sgn[r][1]);
          it.emplace_back(irow, ix + 2, -mu);
          qp.b_ineq[irow] =
              -(sgn[r][0] * ub[0] + sgn[r][1] * ub[1] - mu * ub[2]);
          ++irow;
        }
        // uz <= u_z_max ; -uz <= -u_z_min
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

class MpcController {
 public:
  MpcController(RobotParams params, GainSet gains,
                LinScheme scheme = LinScheme::kOperatingPoint,
                SolverSettings solver_settings = {})
      : params_(std::move(params)),
        gains_(std::move(gains)),
        scheme_(scheme),
        solver_(solver_settings) {}

  // Relax the force limit inequalities (used by tracking studies that probe
  // large attitude errors).
  void set_force_limits_enabled(bool enabled) { force_limits_ = enabled; }
  void set_scheme(LinScheme scheme) { scheme_ = scheme; }

  const GainSet& gains() const { return gains_; }
  LinScheme scheme() const { return scheme_; }

  MpcSolution solve(const SrbState& x0, const std::array<Vec3, 4>& feet_now,
                    const ReferenceWindow& ref) {
    const Vec12* warm = have_prev_ ? &prev_u_ : nullptr;
    const MpcQp mpc =
        assemble_mpc_qp(x0, feet_now, ref, gains_, params_, scheme_,
                        force_limits_, warm);
    const SolverResult res = solver_.solve(mpc.qp);

    MpcSolution sol;
    sol.status = res.status;
    sol.iterations = res.iterations;
    sol.solve_time_s = res.solve_time_s;

    if (res.status == SolveStatus::kOptimal ||
        res.status == SolveStatus::kMaxIters) {
      sol.delta_u = res.z.segment<12>(mpc.du_index(0));
      sol.u = mpc.u_base[0] + sol.delta_u;
      sol.predicted.resize(static_cast<size_t>(mpc.horizon));
      for (int k = 1; k <= mpc.horizon; ++k) {
        sol.predicted[static_cast<size_t>(k) - 1] =
            res.z.segment<12>(mpc.x_index(k));
      }
      sol.fallback = (res.status != SolveStatus::kOptimal);
    } else {
      // infeasible: fall back to the previous command (or static support)
      sol.fallback = true;
      sol.u = have_prev_ ? prev_u_
                         : detail::support_forces(params_, ref.contact[0]);
      for (int leg = 0; leg < 4; ++leg) {
        if (!ref.contact[0][static_cast<size_t>(leg)]) {
          sol.u.segment<3>(3 * leg).setZero();
        }
      }
    }
    prev_u_ = sol.u;
    have_prev_ = true;
    return sol;
  }

  void reset() { have_prev_ = false; }

 private:
  RobotParams params_;
  GainSet gains_;
  LinScheme scheme_;
  QpSolver solver_;
  bool force_limits_ = true;
  bool have_prev_ = false;
  Vec12 prev_u_ = Vec12::Zero();
};

}  // namespace rfmpc
