#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "ctxmhe/config.hpp"
#include "ctxmhe/sensitivity.hpp"
#include "ctxmhe/training.hpp"

using namespace ctxmhe;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MheModel default_model() { return MheModel{0.02, 0.033, 9.81}; }

struct Instance {
  LinearGaussianWindow window;
  GenericWeights weights;
};

Instance random_instance(int L, std::uint64_t seed, double gamma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const MheModel model = default_model();

  Instance inst;
  inst.window.A = model.a_matrix();
  inst.window.H = model.h_matrix();
  VectorXd x = VectorXd::Zero(9);
  for (int i = 0; i < 9; ++i) x(i) = 0.3 * gauss(rng);
  inst.window.xbar = x + 0.05 * VectorXd::NullaryExpr(9, [&]() { return gauss(rng); });
  for (int k = 0; k < L; ++k) {
    VectorXd y = inst.window.H * x;
    for (int i = 0; i < 6; ++i) y(i) += 0.02 * gauss(rng);
    inst.window.y.push_back(y);
    if (k + 1 < L) {
      const Vec3 u(2 * gauss(rng), 2 * gauss(rng), 9.81 + gauss(rng));
      inst.window.b.push_back(model.input_offset(u));
      VectorXd w = VectorXd::NullaryExpr(9, [&]() { return 0.01 * gauss(rng); });
      x = inst.window.A * x + inst.window.b.back() + w;
    }
  }
  std::uniform_real_distribution<double> wdist(0.5, 5.0);
  inst.weights.p_diag = VectorXd::NullaryExpr(9, [&]() { return wdist(rng); });
  inst.weights.r_diag = VectorXd::NullaryExpr(6, [&]() { return wdist(rng); });
  inst.weights.q_diag = VectorXd::NullaryExpr(9, [&]() { return wdist(rng); });
  inst.weights.gamma = gamma;
  return inst;
}

// Exact sensitivities from the stacked normal equations M(theta) X = c(theta):
// dX/dtheta_i = M^-1 (dc_i - dM_i x). Independent of the filter recursion.
std::vector<MatrixXd> kkt_oracle(const LinearGaussianWindow& w, const GenericWeights& weights,
                                 const std::vector<VectorXd>& states) {
  const int n = w.n();
  const int m = w.m();
  const int L = w.length();
  const int p = 2 * n + m + 1;
  const int dim = n * L;

  VectorXd xhat(dim);
  for (int k = 0; k < L; ++k) xhat.segment(n * k, n) = states[k];

  auto scale = [&](int k) { return std::pow(weights.gamma, L - 1 - k); };
  auto dscale = [&](int k) {
    const int e = L - 1 - k;
    return e > 0 ? e * std::pow(weights.gamma, e - 1) : 0.0;
  };

  // Assemble M and c for parameter vector `th`; also their directional
  // derivative for component i when requested.
  auto assemble = [&](int deriv,  // -1: values, otherwise theta component
                      MatrixXd& mat, VectorXd& rhs) {
    mat = MatrixXd::Zero(dim, dim);
    rhs = VectorXd::Zero(dim);
    // Arrival term.
    for (int i = 0; i < n; ++i) {
      const double v = deriv < 0 ? weights.p_diag(i) : (deriv == i ? 1.0 : 0.0);
      mat(i, i) += v;
      rhs(i) += v * w.xbar(i);
    }
    // Measurement terms.
    for (int k = 0; k < L; ++k) {
      VectorXd r_eff(m);
      for (int j = 0; j < m; ++j) {
        if (deriv < 0) {
          r_eff(j) = scale(k) * weights.r_diag(j);
        } else if (deriv == n + j) {
          r_eff(j) = scale(k);
        } else if (deriv == 2 * n + m) {
          r_eff(j) = dscale(k) * weights.r_diag(j);
        } else {
          r_eff(j) = 0.0;
        }
      }
      mat.block(n * k, n * k, n, n) += w.H.transpose() * r_eff.asDiagonal() * w.H;
      rhs.segment(n * k, n) += w.H.transpose() * (r_eff.asDiagonal() * w.y[k]);
    }
    // Process terms.
    for (int k = 0; k + 1 < L; ++k) {
      VectorXd q_eff(n);
      for (int j = 0; j < n; ++j) {
        if (deriv < 0) {
          q_eff(j) = scale(k) * weights.q_diag(j);
        } else if (deriv == n + m + j) {
          q_eff(j) = scale(k);
        } else if (deriv == 2 * n + m) {
          q_eff(j) = dscale(k) * weights.q_diag(j);
        } else {
          q_eff(j) = 0.0;
        }
      }
      const MatrixXd q = MatrixXd(q_eff.asDiagonal());
      mat.block(n * k, n * k, n, n) += w.A.transpose() * q * w.A;
      mat.block(n * k, n * (k + 1), n, n) -= w.A.transpose() * q;
      mat.block(n * (k + 1), n * k, n, n) -= q * w.A;
      mat.block(n * (k + 1), n * (k + 1), n, n) += q;
      rhs.segment(n * k, n) -= w.A.transpose() * (q * w.b[k]);
      rhs.segment(n * (k + 1), n) += q * w.b[k];
    }
  };

  MatrixXd mat;
  VectorXd rhs;
  assemble(-1, mat, rhs);
  const Eigen::LDLT<MatrixXd> ldlt(mat);

  std::vector<MatrixXd> out(L, MatrixXd::Zero(n, p));
  for (int i = 0; i < p; ++i) {
    MatrixXd dmat;
    VectorXd drhs;
    assemble(i, dmat, drhs);
    const VectorXd col = ldlt.solve(drhs - dmat * xhat);
    for (int k = 0; k < L; ++k) out[k].col(i) = col.segment(n * k, n);
  }
  return out;
}

}  // namespace

TEST_CASE("bundle: dynamics Jacobian is the constant transition matrix") {
  const Instance inst = random_instance(11, 1, 0.9);
  const GenericMheSolution sol = solve_linear_mhe(inst.window, inst.weights);
  const SensitivityBundle b = build_sensitivity_bundle(inst.window, inst.weights, sol);
  CHECK((b.F - inst.window.A).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b.G - MatrixXd::Identity(9, 9)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(b.L == 11);
  CHECK(b.p == 25);
}

TEST_CASE("bundle: R_base columns of T carry the weighted residual") {
  const Instance inst = random_instance(6, 2, 0.85);
  const GenericMheSolution sol = solve_linear_mhe(inst.window, inst.weights);
  const SensitivityBundle b = build_sensitivity_bundle(inst.window, inst.weights, sol);
  const int L = 6;
  for (int k = 0; k < L; ++k) {
    const VectorXd resid = inst.window.y[k] - inst.window.H * sol.states[k];
    const double s = std::pow(inst.weights.gamma, L - 1 - k);
    for (int j = 0; j < 6; ++j) {
      const VectorXd expect = s * resid(j) * inst.window.H.row(j).transpose();
      CHECK((b.T[k].col(9 + j) - expect).cwiseAbs().maxCoeff() < 1e-14);
      // Exactly one nonzero state entry per column for this H.
      int nonzero = 0;
      for (int i = 0; i < 9; ++i)
        if (b.T[k](i, 9 + j) != 0.0) ++nonzero;
      CHECK(nonzero <= 1);
    }
  }
}

TEST_CASE("bundle: gamma column of L^wtheta carries the (t-k) gamma^(t-k-1) factor") {
  const Instance inst = random_instance(8, 3, 0.8);
  const GenericMheSolution sol = solve_linear_mhe(inst.window, inst.weights);
  const SensitivityBundle b = build_sensitivity_bundle(inst.window, inst.weights, sol);
  const int L = 8;
  for (int k = 0; k + 1 < L; ++k) {
    const int e = L - 1 - k;
    const VectorXd expect =
        e * std::pow(inst.weights.gamma, e - 1) *
        (inst.weights.q_diag.asDiagonal() * sol.noises[k]);
    CHECK((b.Lwth[k].col(24) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("zero-residual window has identically zero sensitivities") {
  // Data generated exactly by the model, prior equal to the truth: every
  // residual vanishes, so every theta column must vanish.
  const MheModel model = default_model();
  LinearGaussianWindow w;
  w.A = model.a_matrix();
  w.H = model.h_matrix();
  VectorXd x = VectorXd::LinSpaced(9, -0.2, 0.3);
  w.xbar = x;
  for (int k = 0; k < 7; ++k) {
    w.y.push_back(w.H * x);
    if (k + 1 < 7) {
      w.b.push_back(model.input_offset(Vec3(0.5, -0.2, 9.0)));
      x = w.A * x + w.b.back();
    }
  }
  GenericWeights weights;
  weights.p_diag = VectorXd::Constant(9, 3.0);
  weights.r_diag = VectorXd::Constant(6, 7.0);
  weights.q_diag = VectorXd::Constant(9, 2.0);
  weights.gamma = 0.9;
  const GenericMheSolution sol = solve_linear_mhe(w, weights);
  REQUIRE(sol.cost < 1e-16);
  const SensitivitySolution sens =
      kf_sensitivity(build_sensitivity_bundle(w, weights, sol));
  for (const auto& xk : sens.X) CHECK(xk.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("prior fixed point zeroes the arrival-weight columns") {
  Instance inst = random_instance(6, 4, 1.0);
  GenericMheSolution sol = solve_linear_mhe(inst.window, inst.weights);
  for (int it = 0; it < 200; ++it) {
    inst.window.xbar = sol.states[0];
    sol = solve_linear_mhe(inst.window, inst.weights);
    if ((sol.states[0] - inst.window.xbar).cwiseAbs().maxCoeff() < 1e-14) break;
  }
  REQUIRE((sol.states[0] - inst.window.xbar).cwiseAbs().maxCoeff() < 1e-12);
  const SensitivitySolution sens =
      kf_sensitivity(build_sensitivity_bundle(inst.window, inst.weights, sol));
  for (const auto& xk : sens.X) {
    for (int i = 0; i < 9; ++i) CHECK(xk.col(i).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("scalar two-stage problem matches the hand-expanded oracle") {
  // n = m = 1, L = 2; theta = (P, R, Q, gamma). The normal equations are a
  // 2x2 system solved symbolically below.
  const double a = 0.8, h = 1.2, bb = 0.3;
  const double xbar = 0.4, y0 = 0.9, y1 = -0.2;
  const double p = 2.0, r = 3.0, q = 1.5, g = 0.7;

  LinearGaussianWindow w;
  w.A = MatrixXd::Constant(1, 1, a);
  w.H = MatrixXd::Constant(1, 1, h);
  w.xbar = VectorXd::Constant(1, xbar);
  w.y = {VectorXd::Constant(1, y0), VectorXd::Constant(1, y1)};
  w.b = {VectorXd::Constant(1, bb)};
  GenericWeights weights;
  weights.p_diag = VectorXd::Constant(1, p);
  weights.r_diag = VectorXd::Constant(1, r);
  weights.q_diag = VectorXd::Constant(1, q);
  weights.gamma = g;

  const GenericMheSolution sol = solve_linear_mhe(w, weights);
  const SensitivitySolution sens =
      kf_sensitivity(build_sensitivity_bundle(w, weights, sol));

  // M x = c with
  //   M = [P + g R h^2 + g Q a^2, -g Q a; -g Q a, R h^2 + g Q]
  //   c = [P xbar + g R h y0 - g Q a b, R h y1 + g Q b]
  auto solve_for = [&](double pp, double rr, double qq, double gg, double& x0, double& x1) {
    const double m00 = pp + gg * rr * h * h + gg * qq * a * a;
    const double m01 = -gg * qq * a;
    const double m11 = rr * h * h + gg * qq;
    const double c0 = pp * xbar + gg * rr * h * y0 - gg * qq * a * bb;
    const double c1 = rr * h * y1 + gg * qq * bb;
    const double det = m00 * m11 - m01 * m01;
    x0 = (m11 * c0 - m01 * c1) / det;
    x1 = (-m01 * c0 + m00 * c1) / det;
  };
  double x0, x1;
  solve_for(p, r, q, g, x0, x1);
  CHECK(sol.states[0](0) == doctest::Approx(x0).epsilon(1e-12));
  CHECK(sol.states[1](0) == doctest::Approx(x1).epsilon(1e-12));

  // dx/dtheta_i = M^-1 (dc_i - dM_i x), expanded by hand per component.
  const double m00 = p + g * r * h * h + g * q * a * a;
  const double m01 = -g * q * a;
  const double m11 = r * h * h + g * q;
  const double det = m00 * m11 - m01 * m01;
  auto apply_minv = [&](double v0, double v1, double& o0, double& o1) {
    o0 = (m11 * v0 - m01 * v1) / det;
    o1 = (-m01 * v0 + m00 * v1) / det;
  };

  struct Case {
    int idx;
    double dm00, dm01, dm11, dc0, dc1;
  };
  const std::vector<Case> cases = {
      {0, 1.0, 0.0, 0.0, xbar, 0.0},                                        // P
      {1, g * h * h, 0.0, h * h, g * h * y0, h * y1},                       // R
      {2, g * a * a, -g * a, g, -g * a * bb, g * bb},                       // Q
      {3, r * h * h + q * a * a, -q * a, q, r * h * y0 - q * a * bb, q * bb}  // gamma
  };
  for (const auto& c : cases) {
    const double v0 = c.dc0 - (c.dm00 * x0 + c.dm01 * x1);
    const double v1 = c.dc1 - (c.dm01 * x0 + c.dm11 * x1);
    double d0, d1;
    apply_minv(v0, v1, d0, d1);
    CHECK(sens.X[0](0, c.idx) == doctest::Approx(d0).epsilon(1e-10));
    CHECK(sens.X[1](0, c.idx) == doctest::Approx(d1).epsilon(1e-10));
  }
}

TEST_CASE("recursion matches the direct KKT derivative oracle") {
  for (int inst_id = 0; inst_id < 5; ++inst_id) {
    const Instance inst = random_instance(11, 50 + inst_id, 0.75 + 0.05 * inst_id);
    const GenericMheSolution sol = solve_linear_mhe(inst.window, inst.weights);
    const SensitivitySolution sens =
        kf_sensitivity(build_sensitivity_bundle(inst.window, inst.weights, sol));
    const std::vector<MatrixXd> oracle = kkt_oracle(inst.window, inst.weights, sol.states);
    for (int k = 0; k < 11; ++k) {
      const double scale = std::max(1.0, oracle[k].cwiseAbs().maxCoeff());
      CHECK((sens.X[k] - oracle[k]).cwiseAbs().maxCoeff() / scale < 1e-9);
    }
  }
}

TEST_CASE("finite-difference agreement across all 25 components") {
  const FullConfig cfg = FullConfig::defaults();
  const ThetaGradcheckReport report = run_theta_gradcheck(cfg, 20, 7, 1e-3);
  CHECK(report.pass);
  CHECK(report.overall_max_rel_err < 1e-3);
  CHECK(report.rows.size() == 25);
}

TEST_CASE("uniform scaling of raw weights is a null direction") {
  const Instance inst = random_instance(11, 99, 0.9);
  const GenericMheSolution sol = solve_linear_mhe(inst.window, inst.weights);
  const SensitivitySolution sens =
      kf_sensitivity(build_sensitivity_bundle(inst.window, inst.weights, sol));
  // Directional derivative along (P, R, Q) -> lambda (P, R, Q) at lambda = 1.
  for (const auto& xk : sens.X) {
    VectorXd dir = VectorXd::Zero(9);
    for (int i = 0; i < 9; ++i) dir += xk.col(i) * inst.weights.p_diag(i);
    for (int j = 0; j < 6; ++j) dir += xk.col(9 + j) * inst.weights.r_diag(j);
    for (int i = 0; i < 9; ++i) dir += xk.col(15 + i) * inst.weights.q_diag(i);
    CHECK(dir.cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("terminal dual variable is exactly zero") {
  const Instance inst = random_instance(9, 123, 0.95);
  const GenericMheSolution sol = solve_linear_mhe(inst.window, inst.weights);
  const SensitivitySolution sens =
      kf_sensitivity(build_sensitivity_bundle(inst.window, inst.weights, sol));
  CHECK(sens.Lambda.back().cwiseAbs().maxCoeff() == 0.0);
  for (const auto& lam : sens.Lambda) CHECK(lam.allFinite());
}

TEST_CASE("non-converged solutions are rejected") {
  const Instance inst = random_instance(5, 7, 1.0);
  GenericMheSolution sol = solve_linear_mhe(inst.window, inst.weights);
  sol.converged = false;
  CHECK_THROWS_AS(build_sensitivity_bundle(inst.window, inst.weights, sol),
                  std::invalid_argument);
}

TEST_CASE("ill-conditioned recursion reports the failing step") {
  const Instance inst = random_instance(5, 8, 1.0);
  const GenericMheSolution sol = solve_linear_mhe(inst.window, inst.weights);
  const SensitivityBundle bundle =
      build_sensitivity_bundle(inst.window, inst.weights, sol);
  try {
    kf_sensitivity(bundle, 1.0);  // absurd condition limit trips immediately
    CHECK(false);
  } catch (const IllConditionedRecursion& e) {
    CHECK(e.step() >= 0);
    CHECK(e.condition() > 1.0);
  }
}
