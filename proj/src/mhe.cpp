#include "ctxmhe/mhe.hpp"

#include <cmath>
#include <stdexcept>

namespace ctxmhe {

Eigen::VectorXd GenericWeights::theta() const {
  Eigen::VectorXd th(theta_dim());
  th << p_diag, r_diag, q_diag, gamma;
  return th;
}

GenericWeights GenericWeights::from_theta(const Eigen::VectorXd& theta, int n, int m) {
  if (theta.size() != 2 * n + m + 1)
    throw std::invalid_argument("GenericWeights: theta size mismatch");
  GenericWeights w;
  w.p_diag = theta.segment(0, n);
  w.r_diag = theta.segment(n, m);
  w.q_diag = theta.segment(n + m, n);
  w.gamma = theta(2 * n + m);
  return w;
}

void MheWeights::validate() const {
  if (p_diag.minCoeff() < kEigFloor || r_diag.minCoeff() < kEigFloor ||
      q_diag.minCoeff() < kEigFloor) {
    throw std::invalid_argument("MheWeights: weight diagonal below the SPD floor");
  }
  if (!(gamma > kGammaFloor) || gamma > 1.0)
    throw std::invalid_argument("MheWeights: gamma outside (1e-3, 1]");
}

GenericWeights MheWeights::generic() const {
  GenericWeights w;
  w.p_diag = p_diag;
  w.r_diag = r_diag;
  w.q_diag = q_diag;
  w.gamma = gamma;
  return w;
}

MheWeights MheWeights::from_theta(const Eigen::VectorXd& theta) {
  const GenericWeights g = GenericWeights::from_theta(theta, 9, 6);
  MheWeights w;
  w.p_diag = g.p_diag;
  w.r_diag = g.r_diag;
  w.q_diag = g.q_diag;
  w.gamma = g.gamma;
  return w;
}

void LinearGaussianWindow::validate() const {
  if (A.rows() != A.cols() || H.cols() != A.rows() || xbar.size() != A.rows())
    throw std::invalid_argument("LinearGaussianWindow: inconsistent model dimensions");
  if (y.empty()) throw std::invalid_argument("LinearGaussianWindow: empty window");
  if (b.size() + 1 != y.size())
    throw std::invalid_argument("LinearGaussianWindow: need one input offset per interval");
  for (const auto& yk : y)
    if (yk.size() != H.rows()) throw std::invalid_argument("LinearGaussianWindow: bad y dim");
  for (const auto& bk : b)
    if (bk.size() != A.rows()) throw std::invalid_argument("LinearGaussianWindow: bad b dim");
}

namespace {

// Stage discount gamma^(t-k) with the newest stage undiscounted.
inline double stage_scale(double gamma, int length, int k) {
  return std::pow(gamma, static_cast<double>(length - 1 - k));
}

void check_weights(const LinearGaussianWindow& w, const GenericWeights& weights) {
  if (weights.p_diag.size() != w.n() || weights.q_diag.size() != w.n() ||
      weights.r_diag.size() != w.m())
    throw std::invalid_argument("solve_linear_mhe: weight dimensions do not match window");
  if (weights.p_diag.minCoeff() <= 0.0 || weights.r_diag.minCoeff() <= 0.0 ||
      weights.q_diag.minCoeff() <= 0.0 || !(weights.gamma > 0.0))
    throw std::invalid_argument("solve_linear_mhe: weights must be positive definite");
}

Eigen::VectorXd stack_gradient(const LinearGaussianWindow& w, const GenericWeights& weights,
                               const std::vector<Eigen::VectorXd>& x) {
  const int n = w.n();
  const int L = w.length();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n * L);
  g.segment(0, n) += weights.p_diag.asDiagonal() * (x[0] - w.xbar);
  for (int k = 0; k < L; ++k) {
    const double s = stage_scale(weights.gamma, L, k);
    const Eigen::VectorXd r = w.H * x[k] - w.y[k];
    g.segment(n * k, n) += w.H.transpose() * (s * weights.r_diag.asDiagonal() * r);
  }
  for (int k = 0; k + 1 < L; ++k) {
    const double s = stage_scale(weights.gamma, L, k);
    const Eigen::VectorXd r = x[k + 1] - w.A * x[k] - w.b[k];
    const Eigen::VectorXd qr = s * weights.q_diag.asDiagonal() * r;
    g.segment(n * k, n) -= w.A.transpose() * qr;
    g.segment(n * (k + 1), n) += qr;
  }
  return g;
}

Eigen::MatrixXd stack_hessian(const LinearGaussianWindow& w, const GenericWeights& weights) {
  const int n = w.n();
  const int L = w.length();
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(n * L, n * L);
  hess.block(0, 0, n, n) += Eigen::MatrixXd(weights.p_diag.asDiagonal());
  for (int k = 0; k < L; ++k) {
    const double s = stage_scale(weights.gamma, L, k);
    hess.block(n * k, n * k, n, n) +=
        w.H.transpose() * (s * weights.r_diag.asDiagonal()) * w.H;
  }
  for (int k = 0; k + 1 < L; ++k) {
    const double s = stage_scale(weights.gamma, L, k);
    const Eigen::MatrixXd q = (s * weights.q_diag).asDiagonal();
    hess.block(n * k, n * k, n, n) += w.A.transpose() * q * w.A;
    hess.block(n * k, n * (k + 1), n, n) -= w.A.transpose() * q;
    hess.block(n * (k + 1), n * k, n, n) -= q * w.A;
    hess.block(n * (k + 1), n * (k + 1), n, n) += q;
  }
  return hess;
}

}  // namespace

double mhe_cost(const LinearGaussianWindow& w, const GenericWeights& weights,
                const std::vector<Eigen::VectorXd>& x) {
  const int L = w.length();
  double cost = 0.5 * (x[0] - w.xbar).dot(weights.p_diag.asDiagonal() * (x[0] - w.xbar));
  for (int k = 0; k < L; ++k) {
    const double s = stage_scale(weights.gamma, L, k);
    const Eigen::VectorXd r = w.H * x[k] - w.y[k];
    cost += 0.5 * s * r.dot(weights.r_diag.asDiagonal() * r);
  }
  for (int k = 0; k + 1 < L; ++k) {
    const double s = stage_scale(weights.gamma, L, k);
    const Eigen::VectorXd r = x[k + 1] - w.A * x[k] - w.b[k];
    cost += 0.5 * s * r.dot(weights.q_diag.asDiagonal() * r);
  }
  return cost;
}

GenericMheSolution solve_linear_mhe(const LinearGaussianWindow& w,
                                    const GenericWeights& weights,
                                    const MheSolverOptions& opts) {
  w.validate();
  check_weights(w, weights);
  const int n = w.n();
  const int L = w.length();

  // Initial guess: noise-free rollout from the prior.
  std::vector<Eigen::VectorXd> x(L);
  x[0] = w.xbar;
  for (int k = 0; k + 1 < L; ++k) x[k + 1] = w.A * x[k] + w.b[k];

  GenericMheSolution sol;
  double cost = mhe_cost(w, weights, x);
  const Eigen::MatrixXd hess = stack_hessian(w, weights);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("solve_linear_mhe: Hessian factorization failed");

  int iter = 0;
  bool converged = false;
  while (iter < opts.max_iterations) {
    const Eigen::VectorXd g = stack_gradient(w, weights, x);
    if (g.norm() < opts.grad_tol) {
      converged = true;
      break;
    }
    Eigen::VectorXd step = ldlt.solve(-g);
    double alpha = 1.0;
    std::vector<Eigen::VectorXd> trial(L);
    double trial_cost = cost;
    for (int halvings = 0; halvings < 30; ++halvings) {
      for (int k = 0; k < L; ++k) trial[k] = x[k] + alpha * step.segment(n * k, n);
      trial_cost = mhe_cost(w, weights, trial);
      if (trial_cost <= cost) break;
      alpha *= 0.5;
    }
    ++iter;
    if (trial_cost > cost) break;  // damping exhausted
    const double drop = cost - trial_cost;
    x = trial;
    cost = trial_cost;
    if (drop <= opts.rel_cost_tol * std::max(1.0, cost)) {
      converged = true;
      break;
    }
  }

  sol.states = x;
  sol.noises.resize(L - 1);
  for (int k = 0; k + 1 < L; ++k) sol.noises[k] = x[k + 1] - w.A * x[k] - w.b[k];
  sol.cost = cost;
  sol.iterations = iter;
  sol.grad_norm = stack_gradient(w, weights, x).norm();
  sol.converged = converged || sol.grad_norm < 1e-8;
  return sol;
}

// ---------------------------------------------------------------------------

Vec9 AugmentedState::to_vec() const {
  Vec9 x;
  x << p, v, f_dist;
  return x;
}

AugmentedState AugmentedState::from_vec(const Vec9& x) {
  AugmentedState s;
  s.p = x.segment<3>(0);
  s.v = x.segment<3>(3);
  s.f_dist = x.segment<3>(6);
  return s;
}

Eigen::Matrix<double, 9, 9> MheModel::a_matrix() const {
  Eigen::Matrix<double, 9, 9> a = Eigen::Matrix<double, 9, 9>::Identity();
  a.block<3, 3>(0, 3) = dt * Mat3::Identity();
  a.block<3, 3>(3, 6) = (dt / mass) * Mat3::Identity();
  return a;
}

Eigen::Matrix<double, 6, 9> MheModel::h_matrix() const {
  Eigen::Matrix<double, 6, 9> h = Eigen::Matrix<double, 6, 9>::Zero();
  h.block<6, 6>(0, 0) = Eigen::Matrix<double, 6, 6>::Identity();
  return h;
}

Vec9 MheModel::input_offset(const Vec3& u) const {
  Vec9 b = Vec9::Zero();
  b.segment<3>(3) = (u - Vec3(0, 0, gravity)) * dt;
  return b;
}

void HorizonWindow::validate() const {
  if (horizon < 1) throw std::invalid_argument("HorizonWindow: horizon must be >= 1");
  if (y.empty()) throw std::invalid_argument("HorizonWindow: no measurements");
  if (u.size() + 1 != y.size())
    throw std::invalid_argument("HorizonWindow: input count must be one less than measurements");
  if (length() > horizon + 1) throw std::invalid_argument("HorizonWindow: over capacity");
}

void HorizonWindow::push_initial(const Vec6& first_y) {
  if (!y.empty()) throw std::invalid_argument("HorizonWindow: already initialized");
  y.push_back(first_y);
}

LinearGaussianWindow HorizonWindow::to_linear() const {
  validate();
  LinearGaussianWindow w;
  w.A = model.a_matrix();
  w.H = model.h_matrix();
  w.xbar = prior.to_vec();
  w.y.reserve(y.size());
  for (const auto& yk : y) w.y.push_back(yk);
  w.b.reserve(u.size());
  for (const auto& uk : u) w.b.push_back(model.input_offset(uk));
  return w;
}

GenericMheSolution MheSolution::generic() const {
  GenericMheSolution g;
  g.states.reserve(states.size());
  for (const auto& s : states) g.states.push_back(s.to_vec());
  g.noises.reserve(noises.size());
  for (const auto& w : noises) g.noises.push_back(w);
  g.cost = cost;
  g.grad_norm = grad_norm;
  g.iterations = iterations;
  g.converged = converged;
  return g;
}

MheSolution solve_mhe(const HorizonWindow& window, const MheWeights& weights,
                      const MheSolverOptions& opts) {
  weights.validate();
  const GenericMheSolution g = solve_linear_mhe(window.to_linear(), weights.generic(), opts);
  MheSolution sol;
  sol.states.reserve(g.states.size());
  for (const auto& x : g.states) sol.states.push_back(AugmentedState::from_vec(x));
  sol.noises.reserve(g.noises.size());
  for (const auto& w : g.noises) sol.noises.push_back(w);
  sol.cost = g.cost;
  sol.grad_norm = g.grad_norm;
  sol.iterations = g.iterations;
  sol.converged = g.converged;
  return sol;
}

HorizonWindow slide_window(const HorizonWindow& window, const Measurement& new_y,
                           const Vec3& new_u, const MheSolution& solution) {
  window.validate();
  if (solution.states.size() != window.y.size())
    throw std::invalid_argument("slide_window: solution does not match window");
  HorizonWindow out = window;
  out.y.push_back(new_y.y);
  out.u.push_back(new_u);
  if (static_cast<int>(out.y.size()) > out.horizon + 1) {
    out.y.erase(out.y.begin());
    out.u.erase(out.u.begin());
    out.prior = solution.states[1];  // smoothed estimate of the new oldest state
    out.start_step += 1;
  }
  return out;
}

}  // namespace ctxmhe
