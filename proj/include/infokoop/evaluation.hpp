#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "infokoop/dynamics.hpp"
#include "infokoop/koopman_ae.hpp"

namespace infokoop {

// NRMSE over predicted steps 1..horizon (row 0 is the shared initial state),
// each coordinate divided by `scale` (the truth standard deviation).
double nrmse(const Trajectory& pred, const Trajectory& truth, int horizon,
             const Eigen::VectorXd& scale);
// Normalizes by the population standard deviation of `truth` itself.
double nrmse(const Trajectory& pred, const Trajectory& truth, int horizon);

// Histogram KL divergence D(p || q) per coordinate over a shared range taken
// from the pooled samples, additive smoothing 1/(N bins), averaged over
// coordinates. Samples are rows.
double state_kld(const Eigen::MatrixXd& samples_p, const Eigen::MatrixXd& samples_q,
                 int bins = 64);

inline constexpr int kSdeWindow = 1000;
inline constexpr int kSdeSegment = 50;
// Welch power spectrum of the mean-removed first 1000 steps (rectangular
// segments of 50 with 50% overlap), sum-normalized per coordinate; the L1
// distance between spectra is averaged over coordinates.
double spectral_distribution_error(const Trajectory& pred, const Trajectory& truth);
Eigen::VectorXd normalized_power_spectrum(const Eigen::VectorXd& signal);

struct NrmseStats {
  double mean = 0;
  double variance = 0;
};

struct EvalReport {
  std::vector<int> horizons;
  std::map<int, NrmseStats> nrmse;
  double kld = 0;
  double sde = 0;
  double runtime_seconds = 0;
  int initial_conditions = 0;
  std::string normalization = "per-coordinate population std of the pooled test truth";
  std::string sde_method = "welch-rect-50-overlap-25-l1-v1";
};

struct EvalConfig {
  std::vector<int> horizons = {5, 20, 50};
  // Initial conditions per test trajectory, evenly spaced.
  int initial_conditions = 20;
  int kld_bins = 64;
};

// Predicts `steps` states after x0; row 0 of the result is x0.
using Forecaster = std::function<Trajectory(const Eigen::VectorXd& x0, int steps)>;

EvalReport evaluate(const Forecaster& forecast, const std::vector<Trajectory>& tests,
                    const EvalConfig& config);
EvalReport evaluate(const KoopmanAutoencoder& model, const std::vector<Trajectory>& tests,
                    const EvalConfig& config);

}  // namespace infokoop
