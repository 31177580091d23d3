#pragma once

#include "ctxmhe/mhe.hpp"

namespace ctxmhe {

struct KalmanBelief {
  Eigen::VectorXd x;
  Eigen::MatrixXd cov;
};

KalmanBelief kf_predict(const KalmanBelief& belief, const Eigen::MatrixXd& a,
                        const Eigen::VectorXd& b, const Eigen::MatrixXd& q_cov);

/// Joseph-form measurement update; throws if the innovation covariance is
/// not positive definite.
KalmanBelief kf_update(const KalmanBelief& belief, const Eigen::MatrixXd& h,
                       const Eigen::VectorXd& y, const Eigen::MatrixXd& r_cov);

struct EkfNoiseConfig {
  Vec9 q_cov_diag = (Vec9() << 1e-8, 1e-8, 1e-8, 1e-6, 1e-6, 1e-6, 4e-4, 4e-4, 4e-4).finished();
  Vec6 r_cov_diag = (Vec6() << 2.5e-5, 2.5e-5, 2.5e-5, 1e-4, 1e-4, 1e-4).finished();
  Vec9 p0_cov_diag = (Vec9() << 1e-4, 1e-4, 1e-4, 1e-2, 1e-2, 1e-2, 1e-2, 1e-2, 1e-2).finished();
};

/// One predict-update cycle on the augmented translational model.
std::pair<AugmentedState, Eigen::Matrix<double, 9, 9>> ekf_estimate(
    const AugmentedState& prev, const Eigen::Matrix<double, 9, 9>& prev_cov, const Vec3& u,
    const Measurement& y, const EkfNoiseConfig& noise, const MheModel& model);

}  // namespace ctxmhe
