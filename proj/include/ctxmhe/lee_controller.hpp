#pragma once

#include "ctxmhe/quad_model.hpp"

namespace ctxmhe {

struct ControlGains {
  double k_x = 0.4;
  double k_v = 0.25;
  double k_r = 4e-3;
  double k_omega = 5e-4;

  void validate() const;
};

struct ReferencePoint {
  Vec3 x_d = Vec3::Zero();   // m
  Vec3 v_d = Vec3::Zero();   // m/s
  Vec3 a_d = Vec3::Zero();   // m/s^2
  double yaw_d = 0.0;        // rad
};

struct ThrustMoment {
  double f = 0.0;      // N, collective
  Vec3 moment = Vec3::Zero();  // N m, body
};

/// Geometric tracking controller on SE(3) with disturbance feedforward.
/// Thrust is the projection of the desired world force onto the body z axis;
/// the desired attitude aligns body z with that force and body x with yaw_d.
/// The disturbance estimate is subtracted from the force and moment commands.
ThrustMoment lee_control(const RigidBodyState& state, const ReferencePoint& ref,
                         const ControlGains& gains, const QuadParams& params,
                         const Disturbance& dist_estimate);

/// Invertible map between (f, M) and the four motor thrusts.
class MotorMixer {
 public:
  explicit MotorMixer(const QuadParams& params);

  /// Exact solve of the 4x4 allocation system.
  Vec4 mix(const ThrustMoment& tm) const;

  /// Wrench produced by a given set of motor thrusts.
  ThrustMoment unmix(const Vec4& motor_thrusts) const;

  const Mat4& matrix() const { return b_; }

 private:
  Mat4 b_;       // motors -> (f, M)
  Mat4 b_inv_;
};

Vec4 saturate_motors(const Vec4& thrusts, double min_n, double max_n);

}  // namespace ctxmhe
