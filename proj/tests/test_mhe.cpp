#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "ctxmhe/kalman.hpp"
#include "ctxmhe/mhe.hpp"

using namespace ctxmhe;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MheModel default_model() { return MheModel{0.02, 0.033, 9.81}; }

MheWeights simple_weights() {
  MheWeights w;
  w.p_diag = Vec9::Constant(10.0);
  w.r_diag = Vec6::Constant(100.0);
  w.q_diag = Vec9::Constant(50.0);
  w.gamma = 1.0;
  return w;
}

struct SimData {
  HorizonWindow window;
  std::vector<Vec9> truth;
};

// Rollout of the augmented model itself; optional process/measurement noise.
SimData simulate_window(const MheModel& model, int n_meas, const Vec9& x0, double meas_noise,
                        double process_noise, std::uint64_t seed, const Vec3& f_walk = Vec3::Zero()) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SimData out;
  out.window.model = model;
  out.window.horizon = n_meas - 1;
  out.window.prior = AugmentedState::from_vec(x0);

  const auto a = model.a_matrix();
  const auto h = model.h_matrix();
  Vec9 x = x0;
  for (int k = 0; k < n_meas; ++k) {
    out.truth.push_back(x);
    Vec6 y = h * x;
    for (int i = 0; i < 6; ++i) y(i) += meas_noise * gauss(rng);
    out.window.y.push_back(y);
    if (k + 1 < n_meas) {
      const Vec3 u(gauss(rng), gauss(rng), 9.81 + gauss(rng));
      out.window.u.push_back(u);
      Vec9 w = Vec9::Zero();
      for (int i = 0; i < 9; ++i) w(i) = process_noise * gauss(rng);
      w.segment<3>(6) += f_walk;
      x = a * x + model.input_offset(u) + w;
    }
  }
  return out;
}

// Fixed-interval Rauch-Tung-Striebel smoother; the independent oracle for the
// MAP trajectory of the same linear-Gaussian window.
std::vector<VectorXd> rts_smooth(const LinearGaussianWindow& w, const MatrixXd& p0_cov,
                                 const std::vector<MatrixXd>& r_cov,
                                 const std::vector<MatrixXd>& q_cov) {
  const int L = w.length();
  const int n = w.n();
  std::vector<VectorXd> xf(L), xp(L);
  std::vector<MatrixXd> pf(L), pp(L);
  VectorXd x = w.xbar;
  MatrixXd p = p0_cov;
  for (int k = 0; k < L; ++k) {
    if (k > 0) {
      x = w.A * xf[k - 1] + w.b[k - 1];
      p = w.A * pf[k - 1] * w.A.transpose() + q_cov[k - 1];
    }
    xp[k] = x;
    pp[k] = p;
    const MatrixXd s = w.H * p * w.H.transpose() + r_cov[k];
    const MatrixXd gain = p * w.H.transpose() * s.inverse();
    xf[k] = x + gain * (w.y[k] - w.H * x);
    pf[k] = (MatrixXd::Identity(n, n) - gain * w.H) * p;
  }
  std::vector<VectorXd> xs(L);
  xs[L - 1] = xf[L - 1];
  for (int k = L - 2; k >= 0; --k) {
    const MatrixXd c = pf[k] * w.A.transpose() * pp[k + 1].inverse();
    xs[k] = xf[k] + c * (xs[k + 1] - xp[k + 1]);
  }
  return xs;
}

}  // namespace

TEST_CASE("noiseless window is recovered exactly with near-zero cost") {
  const MheModel model = default_model();
  const Vec9 x0 = (Vec9() << 0.1, -0.2, 0.5, 0.05, 0, -0.05, 0.08, 0, 0).finished();
  const SimData data = simulate_window(model, 11, x0, 0.0, 0.0, 3);
  const MheSolution sol = solve_mhe(data.window, simple_weights());
  REQUIRE(sol.converged);
  CHECK(sol.cost < 1e-12);
  for (int k = 0; k < 11; ++k) {
    CHECK((sol.states[k].to_vec() - data.truth[k]).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("MHE matches the RTS smoother oracle on random windows") {
  const MheModel model = default_model();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int inst = 0; inst < 20; ++inst) {
    Vec9 x0;
    for (int i = 0; i < 9; ++i) x0(i) = 0.3 * gauss(rng);
    const SimData data = simulate_window(model, 11, x0, 5e-3, 1e-3, 100 + inst);

    MheWeights weights;
    weights.p_diag = Vec9::Constant(4.0);
    weights.r_diag = Vec6::Constant(200.0);
    weights.q_diag = Vec9::Constant(80.0);
    weights.gamma = inst % 2 == 0 ? 1.0 : 0.95;

    const MheSolution sol = solve_mhe(data.window, weights);
    REQUIRE(sol.converged);

    // Weights are inverse covariances; gamma discounting means time-varying
    // stage covariances for the smoother.
    const LinearGaussianWindow lw = data.window.to_linear();
    const int L = lw.length();
    const MatrixXd p0_cov = Vec9::Constant(1.0 / 4.0).asDiagonal();
    std::vector<MatrixXd> r_cov, q_cov;
    for (int k = 0; k < L; ++k) {
      const double s = std::pow(weights.gamma, L - 1 - k);
      r_cov.push_back(MatrixXd((1.0 / (200.0 * s)) * Vec6::Ones().asDiagonal()));
      if (k + 1 < L)
        q_cov.push_back(MatrixXd((1.0 / (80.0 * s)) * Vec9::Ones().asDiagonal()));
    }
    const std::vector<VectorXd> oracle = rts_smooth(lw, p0_cov, r_cov, q_cov);
    for (int k = 0; k < L; ++k) {
      CHECK((sol.states[k].to_vec() - oracle[k]).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("constant disturbance is recovered within ten percent") {
  const MheModel model = default_model();
  std::vector<double> errors;
  for (int seed = 0; seed < 20; ++seed) {
    Vec9 x0 = Vec9::Zero();
    x0.segment<3>(6) = Vec3(0.08, 0, 0);
    SimData data = simulate_window(model, 11, x0, 1e-3, 0.0, 500 + seed);
    data.window.prior.f_dist = Vec3::Zero();  // prior does not know the disturbance

    MheWeights weights;
    weights.p_diag << 1e2, 1e2, 1e2, 1e2, 1e2, 1e2, 1.0, 1.0, 1.0;
    weights.r_diag = Vec6::Constant(1e6);
    weights.q_diag << 1e6, 1e6, 1e6, 1e6, 1e6, 1e6, 1e2, 1e2, 1e2;
    weights.gamma = 1.0;

    const MheSolution sol = solve_mhe(data.window, weights);
    REQUIRE(sol.converged);
    errors.push_back((sol.states.back().f_dist - Vec3(0.08, 0, 0)).norm() / 0.08);
  }
  std::sort(errors.begin(), errors.end());
  CHECK(errors[errors.size() / 2] < 0.10);
}

TEST_CASE("gradient-norm certificate at the solution") {
  const MheModel model = default_model();
  const SimData data =
      simulate_window(model, 11, Vec9::Constant(0.1), 5e-3, 1e-3, 77);
  const MheSolution sol = solve_mhe(data.window, simple_weights());
  CHECK(sol.grad_norm < 1e-8);
}

TEST_CASE("uniform weight scaling leaves the solution unchanged") {
  const MheModel model = default_model();
  const SimData data =
      simulate_window(model, 11, Vec9::Constant(-0.05), 5e-3, 1e-3, 78);
  MheWeights w1 = simple_weights();
  MheWeights w2 = w1;
  const double lambda = 37.5;
  w2.p_diag *= lambda;
  w2.r_diag *= lambda;
  w2.q_diag *= lambda;
  const MheSolution s1 = solve_mhe(data.window, w1);
  const MheSolution s2 = solve_mhe(data.window, w2);
  for (std::size_t k = 0; k < s1.states.size(); ++k) {
    CHECK((s1.states[k].to_vec() - s2.states[k].to_vec()).cwiseAbs().maxCoeff() < 1e-9);
  }
  CHECK(s2.cost == doctest::Approx(lambda * s1.cost).epsilon(1e-9));
}

TEST_CASE("raising R_base tightens the measurement fit") {
  const MheModel model = default_model();
  const SimData data =
      simulate_window(model, 11, Vec9::Constant(0.02), 1e-2, 2e-3, 79);
  const LinearGaussianWindow lw = data.window.to_linear();

  auto meas_residual = [&](const MheSolution& sol) {
    // Fixed-weight metric: the gamma-discounted unit-R residual sum.
    double total = 0.0;
    const int L = lw.length();
    for (int k = 0; k < L; ++k) {
      const Eigen::VectorXd r = lw.H * sol.states[k].to_vec() - lw.y[k];
      total += std::pow(1.0, L - 1 - k) * r.squaredNorm();
    }
    return total;
  };

  MheWeights weights = simple_weights();
  double prev = -1.0;
  for (double scale : {1.0, 4.0, 16.0, 64.0, 256.0}) {
    MheWeights w = weights;
    w.r_diag *= scale;
    const double resid = meas_residual(solve_mhe(data.window, w));
    if (prev >= 0.0) CHECK(resid <= prev + 1e-12);
    prev = resid;
  }
}

TEST_CASE("solver output is bit-identical across calls") {
  const MheModel model = default_model();
  const SimData data =
      simulate_window(model, 11, Vec9::Constant(0.3), 5e-3, 1e-3, 80);
  const MheSolution a = solve_mhe(data.window, simple_weights());
  const MheSolution b = solve_mhe(data.window, simple_weights());
  CHECK(a.cost == b.cost);
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    CHECK((a.states[k].to_vec() - b.states[k].to_vec()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("weights outside the SPD floor are rejected") {
  const MheModel model = default_model();
  const SimData data = simulate_window(model, 5, Vec9::Zero(), 1e-3, 0.0, 81);
  MheWeights w = simple_weights();
  w.q_diag(4) = 0.0;
  CHECK_THROWS(solve_mhe(data.window, w));
  MheWeights w2 = simple_weights();
  w2.gamma = 0.0;
  CHECK_THROWS(solve_mhe(data.window, w2));
}

TEST_CASE("slide_window grows to capacity, then slides with a smoothed prior") {
  const MheModel model = default_model();
  HorizonWindow window;
  window.model = model;
  window.horizon = 4;
  window.prior = AugmentedState{};
  window.push_initial(Vec6::Zero());

  const MheWeights weights = simple_weights();
  MheSolution sol = solve_mhe(window, weights);

  std::vector<int> lengths;
  for (int t = 1; t <= 8; ++t) {
    Measurement m;
    m.y = Vec6::Constant(0.01 * t);
    const HorizonWindow next = slide_window(window, m, Vec3(0, 0, 9.81), sol);
    lengths.push_back(next.length());
    if (window.full()) {
      // Prior advanced to the previous solution's second state.
      CHECK((next.prior.to_vec() - sol.states[1].to_vec()).cwiseAbs().maxCoeff() == 0.0);
      CHECK(next.start_step == window.start_step + 1);
      CHECK((next.y.front() - window.y[1]).cwiseAbs().maxCoeff() == 0.0);
    } else {
      CHECK((next.prior.to_vec() - window.prior.to_vec()).cwiseAbs().maxCoeff() == 0.0);
    }
    window = next;
    sol = solve_mhe(window, weights);
  }
  // Lengths grow one per step up to N + 1 measurements, then hold.
  CHECK(lengths == std::vector<int>{2, 3, 4, 5, 5, 5, 5, 5});
}

TEST_CASE("EKF tracks an exact model with zero noise configuration") {
  const MheModel model = default_model();
  EkfNoiseConfig noise;
  noise.q_cov_diag = Vec9::Constant(1e-12);
  noise.r_cov_diag = Vec6::Constant(1e-12);
  noise.p0_cov_diag = Vec9::Ones();

  Vec9 x = (Vec9() << 0.1, 0, 0.5, 0, 0.1, 0, 0.05, -0.02, 0).finished();
  AugmentedState est;  // start from zero knowledge
  Eigen::Matrix<double, 9, 9> cov = Eigen::Matrix<double, 9, 9>::Identity();

  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    const Vec3 u(gauss(rng), gauss(rng), 9.81);
    x = model.a_matrix() * x + model.input_offset(u);
    Measurement y;
    y.y = model.h_matrix() * x;
    const auto [next, next_cov] = ekf_estimate(est, cov, u, y, noise, model);
    est = next;
    cov = next_cov;
  }
  CHECK((est.to_vec() - x).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("scalar Kalman update matches the closed-form gain") {
  // 1-D system through the generic helpers.
  KalmanBelief belief;
  belief.x = VectorXd::Constant(1, 2.0);
  belief.cov = MatrixXd::Constant(1, 1, 0.5);
  const MatrixXd a = MatrixXd::Constant(1, 1, 0.9);
  const VectorXd b = VectorXd::Constant(1, 0.1);
  const MatrixXd q = MatrixXd::Constant(1, 1, 0.04);
  const MatrixXd h = MatrixXd::Constant(1, 1, 1.0);
  const MatrixXd r = MatrixXd::Constant(1, 1, 0.01);

  const KalmanBelief pred = kf_predict(belief, a, b, q);
  const double xp = 0.9 * 2.0 + 0.1;
  const double pp = 0.9 * 0.5 * 0.9 + 0.04;
  CHECK(pred.x(0) == doctest::Approx(xp).epsilon(1e-15));
  CHECK(pred.cov(0, 0) == doctest::Approx(pp).epsilon(1e-15));

  const VectorXd y = VectorXd::Constant(1, 2.3);
  const KalmanBelief upd = kf_update(pred, h, y, r);
  const double gain = pp / (pp + 0.01);
  const double xu = xp + gain * (2.3 - xp);
  const double pu = (1.0 - gain) * pp;
  CHECK(std::abs(upd.x(0) - xu) < 1e-12);
  CHECK(std::abs(upd.cov(0, 0) - pu) < 1e-12);
}

TEST_CASE("full-information MHE equals the terminal Kalman filter estimate") {
  const MheModel model = default_model();
  const Vec9 x0 = Vec9::Constant(0.05);
  const SimData data = simulate_window(model, 11, x0, 5e-3, 1e-3, 90);

  const double p0 = 0.25, r = 2.5e-5, q = 1e-6;
  // Kalman filter over the same data: update at k = 0, then predict-update.
  KalmanBelief belief;
  belief.x = data.window.prior.to_vec();
  belief.cov = p0 * MatrixXd::Identity(9, 9);
  belief = kf_update(belief, MatrixXd(model.h_matrix()), data.window.y[0],
                     r * MatrixXd::Identity(6, 6));
  EkfNoiseConfig noise;
  noise.q_cov_diag = Vec9::Constant(q);
  noise.r_cov_diag = Vec6::Constant(r);
  AugmentedState est = AugmentedState::from_vec(belief.x);
  Eigen::Matrix<double, 9, 9> cov = belief.cov;
  for (int k = 1; k < 11; ++k) {
    Measurement y;
    y.y = data.window.y[k];
    const auto [next, next_cov] =
        ekf_estimate(est, cov, data.window.u[k - 1], y, noise, model);
    est = next;
    cov = next_cov;
  }

  MheWeights weights;
  weights.p_diag = Vec9::Constant(1.0 / p0);
  weights.r_diag = Vec6::Constant(1.0 / r);
  weights.q_diag = Vec9::Constant(1.0 / q);
  weights.gamma = 1.0;
  const MheSolution sol = solve_mhe(data.window, weights);

  CHECK((sol.states.back().to_vec() - est.to_vec()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("EKF rejects a non-SPD prior covariance") {
  const MheModel model = default_model();
  Eigen::Matrix<double, 9, 9> bad = -Eigen::Matrix<double, 9, 9>::Identity();
  Measurement y;
  CHECK_THROWS(ekf_estimate(AugmentedState{}, bad, Vec3::Zero(), y, EkfNoiseConfig{}, model));
}
