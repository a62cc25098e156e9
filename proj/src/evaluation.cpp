#include "infokoop/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>

#include <unsupported/Eigen/FFT>

#include "infokoop/errors.hpp"
#include "infokoop/parallel.hpp"

namespace infokoop {

double nrmse(const Trajectory& pred, const Trajectory& truth, int horizon,
             const Eigen::VectorXd& scale) {
  if (horizon < 1) throw InputError("nrmse: horizon must be >= 1");
  if (pred.dim() != truth.dim()) throw InputError("nrmse: dimensions differ");
  if (pred.steps() < horizon || truth.steps() < horizon)
    throw InputError("nrmse: trajectories shorter than the horizon");
  if (scale.size() != truth.dim()) throw InputError("nrmse: scale has wrong dimension");
  if (!(scale.minCoeff() > 0.0)) throw InputError("nrmse: truth has zero variance");
  const Eigen::ArrayXXd err =
      (pred.states.middleRows(1, horizon) - truth.states.middleRows(1, horizon)).array();
  const Eigen::ArrayXXd scaled = err.rowwise() / scale.transpose().array();
  return std::sqrt(scaled.square().mean());
}

double nrmse(const Trajectory& pred, const Trajectory& truth, int horizon) {
  return nrmse(pred, truth, horizon, column_std(truth.states));
}

double state_kld(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, int bins) {
  if (bins < 2) throw InputError("state_kld: bins must be >= 2");
  if (p.rows() == 0 || q.rows() == 0) throw InputError("state_kld: empty sample set");
  if (p.cols() != q.cols()) throw InputError("state_kld: dimensions differ");
  if (!p.allFinite() || !q.allFinite()) throw InputError("state_kld: non-finite samples");
  double total = 0.0;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    const double lo = std::min(p.col(j).minCoeff(), q.col(j).minCoeff());
    const double hi = std::max(p.col(j).maxCoeff(), q.col(j).maxCoeff());
    if (!(hi > lo)) continue;  // both constant at the same value
    auto histogram = [&](const Eigen::MatrixXd& s) {
      Eigen::VectorXd h = Eigen::VectorXd::Zero(bins);
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const int b = std::min(bins - 1, int((s(i, j) - lo) / (hi - lo) * bins));
        h(b) += 1.0;
      }
      const double n = double(s.rows());
      const double smoothing = 1.0 / (n * bins);
      return Eigen::VectorXd((h.array() / n + smoothing) / (1.0 + bins * smoothing));
    };
    const Eigen::VectorXd hp = histogram(p);
    const Eigen::VectorXd hq = histogram(q);
    total += (hp.array() * (hp.array() / hq.array()).log()).sum();
  }
  return std::max(0.0, total / double(p.cols()));
}

Eigen::VectorXd normalized_power_spectrum(const Eigen::VectorXd& signal) {
  if (signal.size() < kSdeSegment) throw InputError("spectrum: signal shorter than one segment");
  const Eigen::VectorXd centered = signal.array() - signal.mean();
  Eigen::FFT<double> fft;
  const int hop = kSdeSegment / 2;
  Eigen::VectorXd power = Eigen::VectorXd::Zero(kSdeSegment / 2 + 1);
  std::vector<double> segment(kSdeSegment);
  std::vector<std::complex<double>> freq;
  for (Eigen::Index start = 0; start + kSdeSegment <= centered.size(); start += hop) {
    for (int i = 0; i < kSdeSegment; ++i) segment[i] = centered(start + i);
    fft.fwd(freq, segment);
    for (Eigen::Index k = 0; k < power.size(); ++k) power(k) += std::norm(freq[k]);
  }
  const double total = power.sum();
  if (!(total > 0.0)) return Eigen::VectorXd::Zero(power.size());
  return power / total;
}

double spectral_distribution_error(const Trajectory& pred, const Trajectory& truth) {
  if (pred.dim() != truth.dim()) throw InputError("sde: dimensions differ");
  if (pred.states.rows() < kSdeWindow || truth.states.rows() < kSdeWindow)
    throw InputError("sde: both sequences need at least 1000 steps");
  double total = 0.0;
  for (Eigen::Index j = 0; j < truth.dim(); ++j) {
    const Eigen::VectorXd a = normalized_power_spectrum(pred.states.col(j).head(kSdeWindow));
    const Eigen::VectorXd b = normalized_power_spectrum(truth.states.col(j).head(kSdeWindow));
    total += (a - b).cwiseAbs().sum();
  }
  return total / double(truth.dim());
}

EvalReport evaluate(const Forecaster& forecast, const std::vector<Trajectory>& tests,
                    const EvalConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  if (tests.empty()) throw InputError("evaluate: no test trajectories");
  if (config.horizons.empty()) throw InputError("evaluate: no horizons");
  if (config.initial_conditions < 1) throw InputError("evaluate: need >= 1 initial condition");
  const int max_h = *std::max_element(config.horizons.begin(), config.horizons.end());
  if (*std::min_element(config.horizons.begin(), config.horizons.end()) < 1)
    throw InputError("evaluate: horizons must be >= 1");
  const Eigen::Index n = tests.front().dim();
  Eigen::Index pooled_rows = 0;
  for (const Trajectory& t : tests) {
    t.validate();
    if (t.dim() != n) throw InputError("evaluate: test trajectories differ in dimension");
    if (t.steps() < std::max(max_h, kSdeWindow))
      throw InputError("evaluate: test trajectories need at least " +
                       std::to_string(std::max(max_h, kSdeWindow)) + " steps");
    pooled_rows += t.states.rows();
  }
  Eigen::MatrixXd pooled(pooled_rows, n);
  Eigen::Index row = 0;
  for (const Trajectory& t : tests) {
    pooled.middleRows(row, t.states.rows()) = t.states;
    row += t.states.rows();
  }
  const Eigen::VectorXd scale = column_std(pooled);
  if (!(scale.minCoeff() > 0.0)) throw InputError("evaluate: a test coordinate has zero variance");

  const int ic = config.initial_conditions;
  const std::size_t cases = tests.size() * std::size_t(ic);
  std::vector<std::vector<double>> errors(cases);
  parallel_for(cases, [&](std::size_t c) {
    const Trajectory& truth = tests[c / ic];
    const Eigen::Index j = Eigen::Index(c % ic);
    const Eigen::Index span = truth.steps() - max_h;
    const Eigen::Index start = span * j / ic;
    Trajectory segment = truth;
    segment.states = truth.states.middleRows(start, max_h + 1);
    const Trajectory pred = forecast(truth.states.row(start).transpose(), max_h);
    for (int h : config.horizons) errors[c].push_back(nrmse(pred, segment, h, scale));
  });

  std::vector<double> sde(tests.size()), kld(tests.size());
  parallel_for(tests.size(), [&](std::size_t i) {
    const Trajectory pred = forecast(tests[i].states.row(0).transpose(), kSdeWindow);
    Trajectory truth = tests[i];
    truth.states = tests[i].states.topRows(kSdeWindow + 1);
    sde[i] = spectral_distribution_error(pred, truth);
    kld[i] = state_kld(pred.states.bottomRows(kSdeWindow), truth.states.bottomRows(kSdeWindow),
                       config.kld_bins);
  });

  EvalReport report;
  report.horizons = config.horizons;
  report.initial_conditions = ic;
  for (std::size_t h = 0; h < config.horizons.size(); ++h) {
    double mean = 0.0;
    for (const auto& e : errors) mean += e[h];
    mean /= double(cases);
    double variance = 0.0;
    for (const auto& e : errors) variance += (e[h] - mean) * (e[h] - mean);
    report.nrmse[config.horizons[h]] = {mean, variance / double(cases)};
  }
  for (std::size_t i = 0; i < tests.size(); ++i) {
    report.sde += sde[i] / double(tests.size());
    report.kld += kld[i] / double(tests.size());
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

EvalReport evaluate(const KoopmanAutoencoder& model, const std::vector<Trajectory>& tests,
                    const EvalConfig& config) {
  model.validate();
  const double dt = tests.empty() ? 1.0 : tests.front().dt;
  return evaluate(
      [&model, dt](const Eigen::VectorXd& x0, int steps) { return rollout(model, x0, steps, dt); },
      tests, config);
}

}  // namespace infokoop
