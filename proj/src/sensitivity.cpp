#include "ctxmhe/sensitivity.hpp"

#include <cmath>
#include <string>

namespace ctxmhe {

IllConditionedRecursion::IllConditionedRecursion(int step, double condition)
    : std::runtime_error("kf_sensitivity: ill-conditioned correction at step " +
                         std::to_string(step) + " (cond ~ " + std::to_string(condition) + ")"),
      step_(step),
      condition_(condition) {}

SensitivityBundle build_sensitivity_bundle(const LinearGaussianWindow& window,
                                           const GenericWeights& weights,
                                           const GenericMheSolution& sol) {
  window.validate();
  if (!sol.converged)
    throw std::invalid_argument("build_sensitivity_bundle: solution did not converge");
  const int n = window.n();
  const int m = window.m();
  const int L = window.length();
  const int p = 2 * n + m + 1;
  if (static_cast<int>(sol.states.size()) != L)
    throw std::invalid_argument("build_sensitivity_bundle: solution length mismatch");

  SensitivityBundle b;
  b.n = n;
  b.m = m;
  b.p = p;
  b.L = L;
  b.F = window.A;
  b.G = Eigen::MatrixXd::Identity(n, n);
  b.arrival_diag = weights.p_diag;
  b.S.resize(L);
  b.T.resize(L);
  b.Lww.resize(L - 1);
  b.Lwth.resize(L - 1);

  const int r_off = n;        // theta indices of diag R_base
  const int q_off = n + m;    // theta indices of diag Q_base
  const int gamma_idx = 2 * n + m;

  for (int k = 0; k < L; ++k) {
    const int e = L - 1 - k;  // discount exponent t - k
    const double scale = std::pow(weights.gamma, e);
    const Eigen::VectorXd r_k = scale * weights.r_diag;
    b.S[k] = window.H.transpose() * r_k.asDiagonal() * window.H;

    b.T[k] = Eigen::MatrixXd::Zero(n, p);
    const Eigen::VectorXd resid = window.y[k] - window.H * sol.states[k];
    for (int j = 0; j < m; ++j) {
      b.T[k].col(r_off + j) = scale * resid(j) * window.H.row(j).transpose();
    }
    if (e > 0) {
      const double dscale = e * std::pow(weights.gamma, e - 1);
      b.T[k].col(gamma_idx) +=
          window.H.transpose() * (dscale * weights.r_diag.asDiagonal() * resid);
    }
    if (k == 0) {
      const Eigen::VectorXd prior_resid = window.xbar - sol.states[0];
      for (int j = 0; j < n; ++j) b.T[0](j, j) += prior_resid(j);
    }

    if (k < L - 1) {
      b.Lww[k] = Eigen::MatrixXd((scale * weights.q_diag).asDiagonal());
      b.Lwth[k] = Eigen::MatrixXd::Zero(n, p);
      const Eigen::VectorXd& w_k = sol.noises[k];
      for (int j = 0; j < n; ++j) b.Lwth[k](j, q_off + j) = scale * w_k(j);
      if (e > 0) {
        const double dscale = e * std::pow(weights.gamma, e - 1);
        b.Lwth[k].col(gamma_idx) += dscale * weights.q_diag.asDiagonal() * w_k;
      }
    }
  }
  return b;
}

namespace {

// Solves (I + P S) Z = RHS with a condition estimate on the system matrix.
struct CorrectionSolver {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  double condition;

  CorrectionSolver(const Eigen::MatrixXd& p_mat, const Eigen::MatrixXd& s_mat) {
    const Eigen::MatrixXd sys =
        Eigen::MatrixXd::Identity(p_mat.rows(), p_mat.cols()) + p_mat * s_mat;
    lu.compute(sys);
    const Eigen::MatrixXd inv = lu.inverse();
    condition = sys.cwiseAbs().rowwise().sum().maxCoeff() *
                inv.cwiseAbs().rowwise().sum().maxCoeff();
  }
};

}  // namespace

SensitivitySolution kf_sensitivity(const SensitivityBundle& b, double cond_limit) {
  const int n = b.n;
  const int L = b.L;

  SensitivitySolution out;
  out.X.resize(L);
  out.Xkf.resize(L);
  out.C.resize(L);
  out.P.resize(L);
  out.Lambda.resize(L);

  // Arrival initialization: P_0 is the inverse of the arrival weight.
  out.P[0] = Eigen::MatrixXd(b.arrival_diag.cwiseInverse().asDiagonal());
  {
    CorrectionSolver corr(out.P[0], b.S[0]);
    if (corr.condition > cond_limit) throw IllConditionedRecursion(0, corr.condition);
    out.C[0] = corr.lu.solve(out.P[0]);
    // The prior itself does not depend on theta, so the filtered init reduces
    // to the correction of T_0 (which carries the arrival-weight derivative).
    out.Xkf[0] = out.C[0] * b.T[0];
  }

  // Forward pass.
  for (int k = 1; k < L; ++k) {
    const Eigen::MatrixXd lww_inv_lwth = b.Lww[k - 1].ldlt().solve(b.Lwth[k - 1]);
    const Eigen::MatrixXd x_pred = b.F * out.Xkf[k - 1] - b.G * lww_inv_lwth;
    const Eigen::MatrixXd lww_inv =
        b.Lww[k - 1].ldlt().solve(Eigen::MatrixXd::Identity(n, n));
    out.P[k] = b.F * out.C[k - 1] * b.F.transpose() + b.G * lww_inv * b.G.transpose();
    CorrectionSolver corr(out.P[k], b.S[k]);
    if (corr.condition > cond_limit) throw IllConditionedRecursion(k, corr.condition);
    out.C[k] = corr.lu.solve(out.P[k]);
    out.Xkf[k] = (Eigen::MatrixXd::Identity(n, n) - out.C[k] * b.S[k]) * x_pred +
                 out.C[k] * b.T[k];
  }

  // Backward dual pass with terminal dual fixed at zero.
  out.Lambda[L - 1] = Eigen::MatrixXd::Zero(n, b.p);
  for (int k = L - 1; k >= 1; --k) {
    out.Lambda[k - 1] =
        (Eigen::MatrixXd::Identity(n, n) - b.S[k] * out.C[k]) * b.F.transpose() *
            out.Lambda[k] -
        b.S[k] * out.Xkf[k] + b.T[k];
  }

  // Assembly of the smoothed sensitivities.
  for (int k = 0; k < L; ++k) {
    out.X[k] = out.Xkf[k] + out.C[k] * b.F.transpose() * out.Lambda[k];
  }
  return out;
}

std::vector<Eigen::MatrixXd> fd_sensitivity(const LinearGaussianWindow& window,
                                            const GenericWeights& weights, double h,
                                            const MheSolverOptions& opts) {
  const int n = window.n();
  const int m = window.m();
  const int L = window.length();
  const int p = 2 * n + m + 1;
  const Eigen::VectorXd theta0 = weights.theta();

  std::vector<Eigen::MatrixXd> out(L, Eigen::MatrixXd::Zero(n, p));
  for (int i = 0; i < p; ++i) {
    Eigen::VectorXd plus = theta0;
    Eigen::VectorXd minus = theta0;
    plus(i) += h;
    minus(i) -= h;
    const GenericMheSolution sp =
        solve_linear_mhe(window, GenericWeights::from_theta(plus, n, m), opts);
    const GenericMheSolution sm =
        solve_linear_mhe(window, GenericWeights::from_theta(minus, n, m), opts);
    for (int k = 0; k < L; ++k) {
      out[k].col(i) = (sp.states[k] - sm.states[k]) / (2.0 * h);
    }
  }
  return out;
}

SensitivitySolution mhe_sensitivity(const HorizonWindow& window, const MheWeights& weights,
                                    const MheSolution& sol, double cond_limit) {
  const SensitivityBundle bundle =
      build_sensitivity_bundle(window.to_linear(), weights.generic(), sol.generic());
  return kf_sensitivity(bundle, cond_limit);
}

}  // namespace ctxmhe
