#include "ctxmhe/quad_model.hpp"

#include <stdexcept>

#include "ctxmhe/rng.hpp"

namespace ctxmhe {

void QuadParams::validate() const {
  if (!(mass > 0.0)) throw std::invalid_argument("QuadParams: mass must be > 0");
  if (!(inertia_diag.minCoeff() > 0.0))
    throw std::invalid_argument("QuadParams: inertia diagonal must be > 0");
  if (!(arm_length > 0.0)) throw std::invalid_argument("QuadParams: arm length must be > 0");
  if (!(torque_coeff > 0.0)) throw std::invalid_argument("QuadParams: torque coeff must be > 0");
  if (!(gravity > 0.0)) throw std::invalid_argument("QuadParams: gravity must be > 0");
}

bool RigidBodyState::finite() const {
  return p.allFinite() && v.allFinite() && R.allFinite() && omega.allFinite();
}

namespace {

// Translational state plus attitude increment relative to the step's
// initial rotation; phi-dot = omega is exact to the order RK4 needs here.
struct LocalState {
  Vec3 p, v, phi, omega;
};

struct Derivative {
  Vec3 dp, dv, dphi, domega;
};

LocalState advance(const LocalState& s, const Derivative& d, double h) {
  return {s.p + h * d.dp, s.v + h * d.dv, s.phi + h * d.dphi, s.omega + h * d.domega};
}

}  // namespace

RigidBodyState step_dynamics(const RigidBodyState& state, const Vec4& motor_thrusts,
                             const Disturbance& disturbance, const QuadParams& params,
                             double dt) {
  if (!(dt > 0.0) || dt > 0.1) throw std::invalid_argument("step_dynamics: dt must be in (0, 0.1]");
  if (!motor_thrusts.allFinite() || motor_thrusts.minCoeff() < 0.0)
    throw std::invalid_argument("step_dynamics: motor thrusts must be finite and >= 0");
  if (!state.finite() || !disturbance.force.allFinite() || !disturbance.torque.allFinite())
    throw std::invalid_argument("step_dynamics: non-finite input");

  const double d = params.arm_length;
  const double ct = params.torque_coeff;
  const double f_total = motor_thrusts.sum();
  const Vec3 moment(d * (motor_thrusts(3) - motor_thrusts(1)),
                    d * (motor_thrusts(0) - motor_thrusts(2)),
                    ct * (-motor_thrusts(0) + motor_thrusts(1) - motor_thrusts(2) +
                          motor_thrusts(3)));

  const Vec3 j = params.inertia_diag;
  const Mat3 r0 = state.R;

  auto deriv = [&](const LocalState& s) -> Derivative {
    const Mat3 r = r0 * so3_exp(s.phi);
    Derivative out;
    out.dp = s.v;
    out.dv = Vec3(0, 0, -params.gravity) + (f_total / params.mass) * r.col(2) +
             disturbance.force / params.mass;
    out.dphi = s.omega;
    const Vec3 jw(j.x() * s.omega.x(), j.y() * s.omega.y(), j.z() * s.omega.z());
    const Vec3 dw = moment - s.omega.cross(jw) + disturbance.torque;
    out.domega = Vec3(dw.x() / j.x(), dw.y() / j.y(), dw.z() / j.z());
    return out;
  };

  const LocalState s0{state.p, state.v, Vec3::Zero(), state.omega};
  const Derivative k1 = deriv(s0);
  const Derivative k2 = deriv(advance(s0, k1, 0.5 * dt));
  const Derivative k3 = deriv(advance(s0, k2, 0.5 * dt));
  const Derivative k4 = deriv(advance(s0, k3, dt));

  auto blend = [&](const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d4) {
    return (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d4);
  };

  RigidBodyState out;
  out.p = state.p + blend(k1.dp, k2.dp, k3.dp, k4.dp);
  out.v = state.v + blend(k1.dv, k2.dv, k3.dv, k4.dv);
  out.omega = state.omega + blend(k1.domega, k2.domega, k3.domega, k4.domega);
  const Vec3 phi = blend(k1.dphi, k2.dphi, k3.dphi, k4.dphi);
  out.R = orthonormalize(r0 * so3_exp(phi));
  return out;
}

Measurement measure(const RigidBodyState& state, const Vec6& noise_std,
                    std::uint64_t rng_seed, double timestamp) {
  if (!state.finite() || !noise_std.allFinite())
    throw std::invalid_argument("measure: non-finite input");
  if (noise_std.minCoeff() < 0.0)
    throw std::invalid_argument("measure: noise std must be >= 0");

  Measurement m;
  m.timestamp = timestamp;
  m.y.head<3>() = state.p;
  m.y.tail<3>() = state.v;
  Rng rng(splitmix64(rng_seed));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < 6; ++i) {
    m.y(i) += noise_std(i) * gauss(rng);
  }
  return m;
}

}  // namespace ctxmhe
