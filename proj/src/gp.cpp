#include "ctxmhe/gp.hpp"

#include <cmath>
#include <stdexcept>

namespace ctxmhe {

void GpModel::add_observation(const ContextPoint& c, double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("GpModel: non-finite observation");
  x_.push_back(c);
  y_.push_back(value);
}

double GpModel::kernel(const ContextPoint& a, const ContextPoint& b) const {
  const double d2 = (a - b).squaredNorm();
  return cfg_.signal_variance * std::exp(-0.5 * d2 / (cfg_.length_scale * cfg_.length_scale));
}

std::pair<double, double> GpModel::posterior(const ContextPoint& query) const {
  const int k = size();
  if (k == 0) return {cfg_.prior_mean, kernel(query, query)};

  Eigen::MatrixXd gram(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) gram(i, j) = kernel(x_[i], x_[j]);

  Eigen::VectorXd resid(k);
  for (int i = 0; i < k; ++i) resid(i) = y_[i] - cfg_.prior_mean;
  Eigen::VectorXd kv(k);
  for (int i = 0; i < k; ++i) kv(i) = kernel(query, x_[i]);

  double jitter = cfg_.noise_variance;
  while (true) {
    const Eigen::MatrixXd sys = gram + jitter * Eigen::MatrixXd::Identity(k, k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sys);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (lo > 0.0 && hi / lo <= cfg_.cond_limit) {
      Eigen::LLT<Eigen::MatrixXd> llt(sys);
      if (llt.info() == Eigen::Success) {
        const Eigen::VectorXd alpha = llt.solve(resid);
        const double mean = cfg_.prior_mean + kv.dot(alpha);
        const double var = kernel(query, query) - kv.dot(llt.solve(kv));
        return {mean, std::max(var, 0.0)};
      }
    }
    jitter = jitter == 0.0 ? 1e-12 : jitter * 10.0;
    if (jitter > cfg_.max_jitter)
      throw std::runtime_error("GpModel: gram matrix ill-conditioned beyond jitter limit");
  }
}

}  // namespace ctxmhe
