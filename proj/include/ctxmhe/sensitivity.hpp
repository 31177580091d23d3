#pragma once

#include <stdexcept>
#include <vector>

#include "ctxmhe/mhe.hpp"

namespace ctxmhe {

/// Coefficient matrices of the linearized optimality system at an MHE
/// solution. Theta layout: [diag P (n), diag R_base (m), diag Q_base (n),
/// gamma], p = 2n + m + 1.
///
/// S_k = H' R_k H, T_k collects H' (dR_k/dtheta_i) (y_k - H x_k) plus, at the
/// oldest stage, (dP/dtheta_i) (xbar - x_0); L^ww_k = Q_k and L^wtheta_k
/// collects (dQ_k/dtheta_i) w_k.
struct SensitivityBundle {
  Eigen::MatrixXd F;                  // n x n dynamics Jacobian
  Eigen::MatrixXd G;                  // n x n noise-injection Jacobian
  std::vector<Eigen::MatrixXd> S;     // L entries, n x n
  std::vector<Eigen::MatrixXd> T;     // L entries, n x p
  std::vector<Eigen::MatrixXd> Lww;   // L - 1 entries, n x n
  std::vector<Eigen::MatrixXd> Lwth;  // L - 1 entries, n x p
  Eigen::VectorXd arrival_diag;       // diag of P (arrival weight)
  int n = 0;
  int m = 0;
  int p = 0;
  int L = 0;
};

/// Sensitivities of every solution state with respect to theta, plus the
/// intermediates of the forward/backward recursion.
struct SensitivitySolution {
  std::vector<Eigen::MatrixXd> X;        // L entries, n x p: dxhat_k / dtheta
  std::vector<Eigen::MatrixXd> Xkf;      // filtered pass
  std::vector<Eigen::MatrixXd> C;        // correction matrices
  std::vector<Eigen::MatrixXd> P;        // covariance-like recursion terms
  std::vector<Eigen::MatrixXd> Lambda;   // dual variables, Lambda[L-1] = 0
};

class IllConditionedRecursion : public std::runtime_error {
 public:
  IllConditionedRecursion(int step, double condition);
  int step() const { return step_; }
  double condition() const { return condition_; }

 private:
  int step_;
  double condition_;
};

SensitivityBundle build_sensitivity_bundle(const LinearGaussianWindow& window,
                                           const GenericWeights& weights,
                                           const GenericMheSolution& sol);

/// Forward Kalman-style pass, backward dual pass, and final assembly
/// X_k = Xkf_k + C_k F' Lambda_k. Throws IllConditionedRecursion when a
/// correction solve has condition number above cond_limit.
SensitivitySolution kf_sensitivity(const SensitivityBundle& bundle,
                                   double cond_limit = 1e12);

/// Central finite differences of the solved trajectory with respect to each
/// theta component, by re-solving the window. Independent check of the
/// recursion above.
std::vector<Eigen::MatrixXd> fd_sensitivity(const LinearGaussianWindow& window,
                                            const GenericWeights& weights, double h = 1e-5,
                                            const MheSolverOptions& opts = {});

/// Convenience wrapper for the quad window.
SensitivitySolution mhe_sensitivity(const HorizonWindow& window, const MheWeights& weights,
                                    const MheSolution& sol, double cond_limit = 1e12);

}  // namespace ctxmhe
