#include "ctxmhe/lee_controller.hpp"

#include <stdexcept>

namespace ctxmhe {

void ControlGains::validate() const {
  if (!(k_x > 0.0 && k_v > 0.0 && k_r > 0.0 && k_omega > 0.0))
    throw std::invalid_argument("ControlGains: all gains must be > 0");
}

ThrustMoment lee_control(const RigidBodyState& state, const ReferencePoint& ref,
                         const ControlGains& gains, const QuadParams& params,
                         const Disturbance& dist_estimate) {
  if (!is_rotation(state.R, 1e-6))
    throw std::invalid_argument("lee_control: state rotation is not in SO(3)");

  const Vec3 e_x = state.p - ref.x_d;
  const Vec3 e_v = state.v - ref.v_d;
  const Vec3 e3(0, 0, 1);

  // Desired world-frame rotor force. Gravity points along -z here, so the
  // tracking errors enter negated relative to the z-down formulation.
  const Vec3 f_des = -gains.k_x * e_x - gains.k_v * e_v +
                     params.mass * params.gravity * e3 + params.mass * ref.a_d -
                     dist_estimate.force;

  const double f_des_norm = f_des.norm();
  if (f_des_norm < 1e-9)
    throw std::runtime_error("lee_control: degenerate reference, thrust direction undefined");

  ThrustMoment out;
  out.f = f_des.dot(state.R * e3);

  // Desired attitude: body z along f_des, body x toward yaw_d.
  const Vec3 b3_c = f_des / f_des_norm;
  const Vec3 b1_d(std::cos(ref.yaw_d), std::sin(ref.yaw_d), 0.0);
  Vec3 b2_c = b3_c.cross(b1_d);
  const double b2_norm = b2_c.norm();
  if (b2_norm < 1e-9)
    throw std::runtime_error("lee_control: desired thrust parallel to heading");
  b2_c /= b2_norm;
  const Vec3 b1_c = b2_c.cross(b3_c);
  Mat3 r_c;
  r_c.col(0) = b1_c;
  r_c.col(1) = b2_c;
  r_c.col(2) = b3_c;

  const Vec3 e_r = 0.5 * vee(r_c.transpose() * state.R - state.R.transpose() * r_c);
  // Setpoint stream carries no angular rate reference (omega_c = 0).
  const Vec3 omega_c = Vec3::Zero();
  const Vec3 domega_c = Vec3::Zero();
  const Vec3 e_omega = state.omega - state.R.transpose() * r_c * omega_c;

  const Vec3 j = params.inertia_diag;
  const Vec3 jw(j.x() * state.omega.x(), j.y() * state.omega.y(), j.z() * state.omega.z());
  const Vec3 transport = hat(state.omega) * (state.R.transpose() * r_c * omega_c) -
                         state.R.transpose() * r_c * domega_c;
  const Vec3 j_transport(j.x() * transport.x(), j.y() * transport.y(), j.z() * transport.z());

  out.moment = -gains.k_r * e_r - gains.k_omega * e_omega + state.omega.cross(jw) -
               j_transport - dist_estimate.torque;
  return out;
}

MotorMixer::MotorMixer(const QuadParams& params) {
  params.validate();
  const double d = params.arm_length;
  const double ct = params.torque_coeff;
  b_ << 1, 1, 1, 1,
        0, -d, 0, d,
        d, 0, -d, 0,
        -ct, ct, -ct, ct;
  Eigen::FullPivLU<Mat4> lu(b_);
  if (!lu.isInvertible())
    throw std::invalid_argument("MotorMixer: singular allocation matrix");
  b_inv_ = lu.inverse();
}

Vec4 MotorMixer::mix(const ThrustMoment& tm) const {
  Vec4 wrench;
  wrench << tm.f, tm.moment.x(), tm.moment.y(), tm.moment.z();
  return b_inv_ * wrench;
}

ThrustMoment MotorMixer::unmix(const Vec4& motor_thrusts) const {
  const Vec4 wrench = b_ * motor_thrusts;
  ThrustMoment tm;
  tm.f = wrench(0);
  tm.moment = wrench.tail<3>();
  return tm;
}

Vec4 saturate_motors(const Vec4& thrusts, double min_n, double max_n) {
  return thrusts.cwiseMax(min_n).cwiseMin(max_n);
}

}  // namespace ctxmhe
