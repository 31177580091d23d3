#pragma once

#include <cstdint>

#include "ctxmhe/geometry.hpp"

namespace ctxmhe {

struct QuadParams {
  double mass = 0.033;                             // kg
  Vec3 inertia_diag{1.66e-5, 1.66e-5, 2.93e-5};    // kg m^2, body axes
  double arm_length = 0.0397;                      // m, motor to center
  double torque_coeff = 0.005;                     // thrust-to-torque ratio
  double gravity = 9.81;                           // m/s^2

  void validate() const;
};

/// World frame is z-up; R maps body to world.
struct RigidBodyState {
  Vec3 p = Vec3::Zero();       // m, world
  Vec3 v = Vec3::Zero();       // m/s, world
  Mat3 R = Mat3::Identity();   // body -> world
  Vec3 omega = Vec3::Zero();   // rad/s, body

  bool finite() const;
};

struct Disturbance {
  Vec3 force = Vec3::Zero();    // N, world
  Vec3 torque = Vec3::Zero();   // N m, body
};

struct Measurement {
  Vec6 y = Vec6::Zero();   // (position, velocity)
  double timestamp = 0.0;  // s
};

/// One RK4 step of the rigid-body dynamics under motor thrusts and an
/// additive disturbance wrench. Attitude is integrated through the SO(3)
/// exponential of a body-frame increment and re-orthonormalized.
RigidBodyState step_dynamics(const RigidBodyState& state, const Vec4& motor_thrusts,
                             const Disturbance& disturbance, const QuadParams& params,
                             double dt);

/// Position/velocity measurement with per-axis Gaussian noise. Deterministic
/// for a fixed seed.
Measurement measure(const RigidBodyState& state, const Vec6& noise_std,
                    std::uint64_t rng_seed, double timestamp = 0.0);

}  // namespace ctxmhe
