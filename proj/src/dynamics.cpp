#include "infokoop/dynamics.hpp"

#include <cmath>
#include <functional>

#include "infokoop/errors.hpp"

namespace infokoop {

void Trajectory::validate() const {
  if (states.cols() < 1) throw InputError("trajectory state dimension must be >= 1");
  if (states.rows() < 2) throw InputError("trajectory needs at least two states");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InputError("trajectory dt must be positive");
  if (!states.allFinite()) throw InputError("trajectory contains non-finite states");
}

namespace {

template <typename Vec>
using Field = std::function<Vec(const Vec&)>;

template <typename Vec>
Vec rk4_step(const Field<Vec>& f, const Vec& x, double dt) {
  const Vec k1 = f(x);
  const Vec k2 = f(x + 0.5 * dt * k1);
  const Vec k3 = f(x + 0.5 * dt * k2);
  const Vec k4 = f(x + dt * k3);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

template <typename Vec>
Trajectory integrate(const Field<Vec>& f, const Vec& x0, int steps, double dt,
                     std::string system_id) {
  if (steps < 1) throw InputError("steps must be >= 1");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InputError("dt must be positive");
  if (!x0.allFinite()) throw InputError("initial state must be finite");
  Trajectory out;
  out.dt = dt;
  out.system_id = std::move(system_id);
  out.states.resize(steps + 1, x0.size());
  Vec x = x0;
  out.states.row(0) = x.transpose();
  for (int t = 1; t <= steps; ++t) {
    x = rk4_step<Vec>(f, x, dt);
    if (!x.allFinite()) throw NumericError("integration diverged at step " + std::to_string(t));
    out.states.row(t) = x.transpose();
  }
  return out;
}

}  // namespace

Trajectory simulate_lorenz63(const Eigen::Vector3d& x0, int steps, double dt, double sigma,
                             double rho, double beta) {
  const Field<Eigen::Vector3d> f = [=](const Eigen::Vector3d& x) {
    return Eigen::Vector3d(sigma * (x(1) - x(0)), x(0) * (rho - x(2)) - x(1),
                           x(0) * x(1) - beta * x(2));
  };
  return integrate(f, x0, steps, dt, "lorenz63");
}

Trajectory simulate_vanderpol(const Eigen::Vector2d& x0, double mu, int steps, double dt) {
  if (!(mu > 0.0)) throw InputError("vanderpol: mu must be positive");
  const Field<Eigen::Vector2d> f = [=](const Eigen::Vector2d& x) {
    return Eigen::Vector2d(x(1), mu * (1.0 - x(0) * x(0)) * x(1) - x(0));
  };
  return integrate(f, x0, steps, dt, "vanderpol");
}

GaussianSampler::GaussianSampler(const Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd sym = symmetrized(cov);
  const Eigen::LLT<Eigen::MatrixXd> llt(sym);
  if (llt.info() == Eigen::Success) {
    factor_ = llt.matrixL();
    return;
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  Eigen::VectorXd values = eig.eigenvalues();
  if (values.minCoeff() < -1e-9 * max_abs_or_one(sym))
    throw InputError("sampler covariance has a negative eigenvalue");
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (values(i) < 1e-12) values(i) = 0.0;
  clipped_ = true;
  factor_ = eig.eigenvectors() * values.cwiseSqrt().asDiagonal();
  zero_ = values.maxCoeff() == 0.0;
}

Eigen::VectorXd GaussianSampler::operator()(CounterRng& rng) const {
  const Eigen::VectorXd e = rng.normal_vector(factor_.cols());
  if (zero_) return Eigen::VectorXd::Zero(factor_.rows());
  return factor_ * e;
}

PairedLatentTrajectory simulate_linear_gaussian(const LinearGaussianKoopman<double>& model,
                                                const Eigen::VectorXd& z0, int steps,
                                                std::uint64_t seed) {
  model.validate();
  if (steps < 1) throw InputError("steps must be >= 1");
  if (z0.size() != model.latent_dim()) throw InputError("z0 has wrong dimension");
  if (!z0.allFinite()) throw InputError("z0 must be finite");
  const GaussianSampler process(model.Sigma);
  const GaussianSampler observation(model.R);
  // Separate streams keep the latent path independent of the observation noise.
  CounterRng process_rng(seed, 0);
  CounterRng observation_rng(seed, 1);

  PairedLatentTrajectory out;
  out.dt = 1.0;
  out.latents.resize(steps + 1, model.latent_dim());
  out.observations.resize(steps + 1, model.observation_dim());
  Eigen::VectorXd z = z0;
  for (int t = 0; t <= steps; ++t) {
    if (t > 0) z = model.K * z + process(process_rng);
    out.latents.row(t) = z.transpose();
    out.observations.row(t) = (model.D * z + observation(observation_rng)).transpose();
  }
  return out;
}

Eigen::VectorXd column_std(const Eigen::MatrixXd& rows) {
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  return ((rows.rowwise() - mean).array().square().colwise().sum() / double(rows.rows()))
      .sqrt()
      .transpose();
}

Trajectory add_observation_noise(const Trajectory& traj, double fraction, std::uint64_t seed) {
  traj.validate();
  if (!(fraction >= 0.0) || !std::isfinite(fraction))
    throw InputError("noise fraction must be >= 0");
  Trajectory out = traj;
  if (fraction == 0.0) return out;
  const Eigen::VectorXd scale = fraction * column_std(traj.states);
  CounterRng rng(seed, 2);
  for (Eigen::Index t = 0; t < out.states.rows(); ++t)
    for (Eigen::Index j = 0; j < out.states.cols(); ++j) {
      const double e = rng.normal();
      out.states(t, j) += scale(j) * e;
    }
  return out;
}

std::pair<Trajectory, NormalizationRecord> normalize(const Trajectory& traj) {
  traj.validate();
  NormalizationRecord record;
  record.mean = traj.states.colwise().mean().transpose();
  record.std = column_std(traj.states);
  record.flagged.assign(traj.dim(), false);
  for (Eigen::Index j = 0; j < traj.dim(); ++j) {
    if (!(record.std(j) > 0.0)) {
      record.std(j) = 1.0;
      record.flagged[j] = true;
    }
  }
  return {apply_normalization(traj, record), record};
}

Trajectory apply_normalization(const Trajectory& traj, const NormalizationRecord& record) {
  if (record.mean.size() != traj.dim() || record.std.size() != traj.dim())
    throw InputError("normalization record dimension mismatch");
  Trajectory out = traj;
  out.states = ((traj.states.rowwise() - record.mean.transpose()).array().rowwise() /
                record.std.transpose().array())
                   .matrix();
  return out;
}

Trajectory denormalize(const Trajectory& traj, const NormalizationRecord& record) {
  if (record.mean.size() != traj.dim() || record.std.size() != traj.dim())
    throw InputError("normalization record dimension mismatch");
  Trajectory out = traj;
  out.states = ((traj.states.array().rowwise() * record.std.transpose().array()).rowwise() +
                record.mean.transpose().array())
                   .matrix();
  return out;
}

}  // namespace infokoop
