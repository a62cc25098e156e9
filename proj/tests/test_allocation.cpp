#include <doctest.h>

#include "infokoop/allocation.hpp"
#include "infokoop/errors.hpp"
#include "infokoop/rng.hpp"

using namespace infokoop;
using Eigen::VectorXd;

namespace {

// Best objective on a simplex grid of step h for three coordinates.
double grid_best(const VectorXd& g, double budget, double gamma, double h) {
  double best = -1e300;
  const int n = static_cast<int>(std::round(budget / h));
  for (int i = 0; i <= n; ++i)
    for (int j = 0; i + j <= n; ++j) {
      const VectorXd p = (VectorXd(3) << i * h, j * h, budget - (i + j) * h).finished();
      if (p(2) < 0) continue;
      best = std::max(best, allocation_objective<double>(g, p, gamma));
    }
  return best;
}

}  // namespace

TEST_CASE("two-channel water-filling in closed form") {
  const auto a = water_fill<double>(VectorXd(Eigen::Vector2d(4, 1)), 1.0);
  CHECK(a.p(0) == doctest::Approx(0.875).epsilon(1e-12));
  CHECK(a.p(1) == doctest::Approx(0.125).epsilon(1e-12));
  // level = (1 + 1/4 + 1) / 2 = 1.125, mu = 1 / (2 level)
  CHECK(a.mu == doctest::Approx(1.0 / 2.25).epsilon(1e-12));
  CHECK(a.kkt_residual < 1e-12);
}

TEST_CASE("weak channels stay dry") {
  const auto a = water_fill<double>(VectorXd(Eigen::Vector3d(100, 1, 0.01)), 1.0);
  CHECK(a.p(2) == 0.0);
  CHECK(a.p.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(a.kkt_residual < 1e-10);
}

TEST_CASE("water-filling beats a grid search") {
  CounterRng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const VectorXd g = (rng.normal_vector(3).array().abs() * 5.0 + 0.05).matrix();
    const auto a = water_fill<double>(g, 1.0);
    CHECK(a.objective >= grid_best(g, 1.0, 0.0, 1e-2) - 1e-12);
    CHECK(a.kkt_residual < 1e-10);
  }
}

TEST_CASE("equal gains share equally") {
  const auto a = water_fill<double>(VectorXd(Eigen::Vector3d(2, 2, 2)), 3.0);
  CHECK(a.p(0) == a.p(1));
  CHECK(a.p(1) == a.p(2));
  CHECK(a.p(0) == doctest::Approx(1.0));
}

TEST_CASE("entropy regularization keeps every weight positive") {
  const VectorXd g = VectorXd(Eigen::Vector3d(100, 1, 0.01));
  const auto a = entropy_regularized_allocation<double>(g, 1.0, 0.1);
  CHECK(a.p.minCoeff() > 0.0);
  CHECK(a.p.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.stationarity_residual < 1e-10);
  CHECK(a.objective >= grid_best(g, 1.0, 0.1, 1e-2) - 1e-12);
}

TEST_CASE("entropy weight spreads the allocation") {
  const VectorXd g = VectorXd(Eigen::Vector3d(100, 1, 0.01));
  double previous = normalized_weight_entropy(water_fill<double>(g, 1.0).p);
  for (double gamma : {0.01, 0.1, 1.0, 10.0}) {
    const double h = normalized_weight_entropy(entropy_regularized_allocation<double>(g, 1.0, gamma).p);
    CHECK(h >= previous - 1e-12);
    previous = h;
  }
}

TEST_CASE("entropy allocation matches a grid search for other budgets") {
  const VectorXd g = VectorXd(Eigen::Vector3d(3, 0.5, 0.2));
  const auto a = entropy_regularized_allocation<double>(g, 2.0, 0.3);
  CHECK(a.p.sum() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(a.objective >= grid_best(g, 2.0, 0.3, 2e-2) - 1e-12);
}

TEST_CASE("bad allocation inputs") {
  CHECK_THROWS_AS(water_fill<double>(VectorXd(Eigen::Vector2d(1, -1)), 1.0), InputError);
  CHECK_THROWS_AS(water_fill<double>(VectorXd(Eigen::Vector2d(0, 0)), 1.0), InputError);
  CHECK_THROWS_AS(water_fill<double>(VectorXd(Eigen::Vector2d(1, 1)), 0.0), InputError);
  CHECK_THROWS_AS(entropy_regularized_allocation<double>(VectorXd(Eigen::Vector2d(1, 1)), 1.0, 0.0),
                  InputError);
}

TEST_CASE("gains from a model are the whitened squared singular values") {
  LinearGaussianKoopman<double> m;
  m.K = Eigen::Vector2d(0.9, 0.5).asDiagonal();
  m.Sigma = Eigen::MatrixXd::Identity(2, 2);
  m.C = Eigen::MatrixXd::Identity(2, 2);
  m.D = Eigen::MatrixXd::Identity(2, 2);
  m.R = Eigen::MatrixXd::Identity(2, 2);
  const VectorXd g = gains_from_model(m, 1);
  CHECK(g(0) == doctest::Approx(0.81));
  CHECK(g(1) == doctest::Approx(0.25));
}
