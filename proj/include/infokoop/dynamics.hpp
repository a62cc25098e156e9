#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "infokoop/gaussian_info.hpp"
#include "infokoop/rng.hpp"

namespace infokoop {

// Time-ordered states, one per row; row t sits at time t * dt.
struct Trajectory {
  Eigen::MatrixXd states;
  double dt = 1.0;
  std::string system_id;

  Eigen::Index steps() const { return states.rows() - 1; }
  Eigen::Index dim() const { return states.cols(); }
  void validate() const;
};

struct PairedLatentTrajectory {
  Eigen::MatrixXd latents;       // z_t per row
  Eigen::MatrixXd observations;  // x_t per row
  double dt = 1.0;
};

struct NormalizationRecord {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  // Coordinates with zero variance were scaled by 1.
  std::vector<bool> flagged;
};

Trajectory simulate_lorenz63(const Eigen::Vector3d& x0, int steps, double dt,
                             double sigma = 10.0, double rho = 28.0, double beta = 8.0 / 3.0);

Trajectory simulate_vanderpol(const Eigen::Vector2d& x0, double mu, int steps, double dt);

PairedLatentTrajectory simulate_linear_gaussian(const LinearGaussianKoopman<double>& model,
                                                const Eigen::VectorXd& z0, int steps,
                                                std::uint64_t seed);

Trajectory add_observation_noise(const Trajectory& traj, double fraction, std::uint64_t seed);

std::pair<Trajectory, NormalizationRecord> normalize(const Trajectory& traj);
Trajectory apply_normalization(const Trajectory& traj, const NormalizationRecord& record);
Trajectory denormalize(const Trajectory& traj, const NormalizationRecord& record);

// Population (1/T) per-column standard deviation.
Eigen::VectorXd column_std(const Eigen::MatrixXd& rows);

// Samples N(0, cov) through the Cholesky factor;
// a numerically semidefinite cov falls back to an eigendecomposition with
// eigenvalues below 1e-12 clipped to zero, reported through `clipped`.
class GaussianSampler {
 public:
  explicit GaussianSampler(const Eigen::MatrixXd& cov);
  Eigen::VectorXd operator()(CounterRng& rng) const;
  bool clipped() const { return clipped_; }
  const Eigen::MatrixXd& factor() const { return factor_; }

 private:
  Eigen::MatrixXd factor_;
  bool zero_ = false;
  bool clipped_ = false;
};

}  // namespace infokoop
