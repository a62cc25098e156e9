#include <doctest.h>

#include "infokoop/dynamics.hpp"
#include "infokoop/errors.hpp"

using namespace infokoop;

namespace {

Eigen::Vector3d lorenz_rhs(const Eigen::Vector3d& x) {
  return {10.0 * (x(1) - x(0)), x(0) * (28.0 - x(2)) - x(1), x(0) * x(1) - 8.0 / 3.0 * x(2)};
}

}  // namespace

TEST_CASE("lorenz63 first step matches a hand-written RK4 step") {
  const Eigen::Vector3d x0(1.0, 2.0, 3.0);
  const double h = 0.01;
  const Eigen::Vector3d k1 = lorenz_rhs(x0);
  const Eigen::Vector3d k2 = lorenz_rhs(x0 + 0.5 * h * k1);
  const Eigen::Vector3d k3 = lorenz_rhs(x0 + 0.5 * h * k2);
  const Eigen::Vector3d k4 = lorenz_rhs(x0 + h * k3);
  const Eigen::Vector3d expected = x0 + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);

  const Trajectory t = simulate_lorenz63(x0, 10, h);
  CHECK(t.states.rows() == 11);
  CHECK(t.dt == h);
  CHECK((t.states.row(0).transpose() - x0).norm() == 0.0);
  CHECK((t.states.row(1).transpose() - expected).norm() < 1e-14);
}

TEST_CASE("lorenz63 stays on the attractor") {
  const Trajectory t = simulate_lorenz63(Eigen::Vector3d(1, 1, 1), 5000, 0.01);
  CHECK(t.states.allFinite());
  CHECK(t.states.cwiseAbs().maxCoeff() < 60.0);
}

TEST_CASE("vanderpol settles on a cycle of amplitude near 2") {
  const Trajectory t = simulate_vanderpol(Eigen::Vector2d(0.5, 0.0), 1.0, 4000, 0.01);
  const double amp = t.states.bottomRows(1000).col(0).cwiseAbs().maxCoeff();
  CHECK(amp == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("simulators reject bad inputs") {
  CHECK_THROWS_AS(simulate_lorenz63(Eigen::Vector3d::Zero(), 10, 0.0), InputError);
  CHECK_THROWS_AS(simulate_lorenz63(Eigen::Vector3d::Zero(), -1, 0.01), InputError);
  CHECK_THROWS_AS(simulate_vanderpol(Eigen::Vector2d::Zero(), 1.0, 10, -0.1), InputError);
}

TEST_CASE("noise-free linear-Gaussian simulation is K^t z0") {
  LinearGaussianKoopman<double> m;
  m.K = (Eigen::Matrix2d() << 0.9, 0.1, -0.2, 0.8).finished();
  m.Sigma = Eigen::Matrix2d::Zero();
  m.C = Eigen::Matrix2d::Identity();
  m.D = Eigen::Matrix2d::Identity();
  m.R = Eigen::Matrix2d::Zero();
  const Eigen::Vector2d z0(1.0, -1.0);
  const PairedLatentTrajectory p = simulate_linear_gaussian(m, z0, 5, 3);
  Eigen::Vector2d z = z0;
  for (int t = 0; t <= 5; ++t) {
    CHECK((p.latents.row(t).transpose() - z).norm() < 1e-14);
    CHECK((p.observations.row(t) - p.latents.row(t)).norm() < 1e-14);
    z = m.K * z;
  }
}

TEST_CASE("linear-Gaussian simulation reproduces the stationary covariance") {
  LinearGaussianKoopman<double> m;
  m.K = Eigen::MatrixXd::Constant(1, 1, 0.5);
  m.Sigma = Eigen::MatrixXd::Constant(1, 1, 0.75);
  m.C = Eigen::MatrixXd::Constant(1, 1, 1.0);
  m.D = Eigen::MatrixXd::Constant(1, 1, 1.0);
  m.R = Eigen::MatrixXd::Constant(1, 1, 0.0);
  const PairedLatentTrajectory p = simulate_linear_gaussian(m, Eigen::VectorXd::Zero(1), 200000, 9);
  const Eigen::VectorXd z = p.latents.col(0);
  const double var = (z.array() - z.mean()).square().mean();
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("normalize gives zero mean and unit population std") {
  const Trajectory t = simulate_lorenz63(Eigen::Vector3d(1, 1, 1), 2000, 0.01);
  const auto [n, rec] = normalize(t);
  CHECK(n.states.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
  CHECK((column_std(n.states).array() - 1.0).abs().maxCoeff() < 1e-12);
  const Trajectory back = denormalize(n, rec);
  CHECK((back.states - t.states).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("constant columns are flagged and left unscaled") {
  Trajectory t;
  t.states = Eigen::MatrixXd(4, 2);
  t.states << 1, 5, 2, 5, 3, 5, 4, 5;
  const auto [n, rec] = normalize(t);
  CHECK(rec.flagged == std::vector<bool>{false, true});
  CHECK(n.states.col(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("observation noise has the requested relative scale") {
  const Trajectory t = simulate_vanderpol(Eigen::Vector2d(2, 0), 1.0, 20000, 0.05);
  const Trajectory noisy = add_observation_noise(t, 0.1, 4);
  const Eigen::VectorXd ratio =
      column_std(noisy.states - t.states).array() / column_std(t.states).array();
  CHECK(ratio(0) == doctest::Approx(0.1).epsilon(0.03));
  CHECK(ratio(1) == doctest::Approx(0.1).epsilon(0.03));
  CHECK(add_observation_noise(t, 0.0, 4).states == t.states);
}

TEST_CASE("sampler handles semidefinite covariances") {
  Eigen::Matrix2d cov;
  cov << 1, 1, 1, 1;
  GaussianSampler s(cov);
  CounterRng rng(3);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd x = s(rng);
    CHECK(std::abs(x(0) - x(1)) < 1e-6);
  }
  CHECK_THROWS_AS(GaussianSampler((Eigen::Matrix2d() << 1, 0, 0, -1).finished()), InputError);
}
