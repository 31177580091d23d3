#include "ctxmhe/kalman.hpp"

#include <stdexcept>

namespace ctxmhe {

KalmanBelief kf_predict(const KalmanBelief& belief, const Eigen::MatrixXd& a,
                        const Eigen::VectorXd& b, const Eigen::MatrixXd& q_cov) {
  KalmanBelief out;
  out.x = a * belief.x + b;
  out.cov = a * belief.cov * a.transpose() + q_cov;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

KalmanBelief kf_update(const KalmanBelief& belief, const Eigen::MatrixXd& h,
                       const Eigen::VectorXd& y, const Eigen::MatrixXd& r_cov) {
  const Eigen::MatrixXd s = h * belief.cov * h.transpose() + r_cov;
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("kf_update: innovation covariance is singular");
  const Eigen::MatrixXd gain = llt.solve(h * belief.cov).transpose();
  const Eigen::MatrixXd ikh =
      Eigen::MatrixXd::Identity(belief.x.size(), belief.x.size()) - gain * h;

  KalmanBelief out;
  out.x = belief.x + gain * (y - h * belief.x);
  out.cov = ikh * belief.cov * ikh.transpose() + gain * r_cov * gain.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

std::pair<AugmentedState, Eigen::Matrix<double, 9, 9>> ekf_estimate(
    const AugmentedState& prev, const Eigen::Matrix<double, 9, 9>& prev_cov, const Vec3& u,
    const Measurement& y, const EkfNoiseConfig& noise, const MheModel& model) {
  Eigen::LLT<Eigen::Matrix<double, 9, 9>> spd_check(prev_cov);
  if (spd_check.info() != Eigen::Success)
    throw std::invalid_argument("ekf_estimate: prior covariance is not SPD");

  KalmanBelief belief{prev.to_vec(), prev_cov};
  belief = kf_predict(belief, model.a_matrix(), model.input_offset(u),
                      Eigen::MatrixXd(noise.q_cov_diag.asDiagonal()));
  belief = kf_update(belief, model.h_matrix(), y.y,
                     Eigen::MatrixXd(noise.r_cov_diag.asDiagonal()));
  return {AugmentedState::from_vec(belief.x), belief.cov};
}

}  // namespace ctxmhe
