#pragma once

// Closed-form information quantities for linear-Gaussian Koopman models.
//
// Latent dynamics z_t = K z_{t-1} + w, w ~ N(0, Sigma); observations
// x_t = D z_t + e, e ~ N(0, R); the reference latent z_{t-n} ~ N(0, C).
// Every quantity is in nats. Functions are templated on the scalar so the
// same code runs in double and long double.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "infokoop/errors.hpp"

namespace infokoop {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr double kSymmetryTolerance = 1e-10;

template <typename Derived>
MatrixX<typename Derived::Scalar> symmetrized(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  return (a + a.transpose()) * Scalar(0.5);
}

template <typename Derived>
typename Derived::Scalar max_abs_or_one(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  return a.size() == 0 ? Scalar(1) : std::max(Scalar(1), a.cwiseAbs().maxCoeff());
}

// log det of a symmetric positive-definite matrix via Cholesky of the
// symmetrized input. `name` is used in the error message.
template <typename Derived>
typename Derived::Scalar log_det_spd(const Eigen::MatrixBase<Derived>& a,
                                     const std::string& name = "matrix") {
  using Scalar = typename Derived::Scalar;
  if (a.rows() == 0) return Scalar(0);
  const Eigen::LLT<MatrixX<Scalar>> llt(symmetrized(a));
  if (llt.info() != Eigen::Success)
    throw NumericError(name + " is not positive definite (Cholesky failed)");
  const auto diag = llt.matrixLLT().diagonal();
  Scalar sum = 0;
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    if (!(diag(i) > Scalar(0)))
      throw NumericError(name + " is singular (zero Cholesky pivot)");
    sum += std::log(diag(i));
  }
  return Scalar(2) * sum;
}

// Rejects matrices that are asymmetric beyond tolerance or have an
// eigenvalue below -tol * max(1, |a|_max).
template <typename Derived>
void require_psd(const Eigen::MatrixBase<Derived>& a, const std::string& name) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() != a.cols()) throw InputError(name + " must be square");
  if (!a.allFinite()) throw InputError(name + " contains non-finite entries");
  if (a.rows() == 0) return;
  const Scalar scale = max_abs_or_one(a);
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > Scalar(kSymmetryTolerance) * scale)
    throw InputError(name + " is not symmetric");
  const Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(symmetrized(a),
                                                           Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -Scalar(kSymmetryTolerance) * scale)
    throw InputError(name + " is not positive semidefinite");
}

template <typename Derived>
MatrixX<typename Derived::Scalar> matrix_power(const Eigen::MatrixBase<Derived>& k,
                                               int n) {
  using Scalar = typename Derived::Scalar;
  if (n < 0) throw InputError("matrix_power: negative exponent");
  MatrixX<Scalar> result = MatrixX<Scalar>::Identity(k.rows(), k.cols());
  for (int i = 0; i < n; ++i) result = (k * result).eval();
  return result;
}

// Symmetric inverse square root; throws NumericError when the smallest
// eigenvalue is not positive.
template <typename Derived>
MatrixX<typename Derived::Scalar> inverse_sqrt_spd(const Eigen::MatrixBase<Derived>& a,
                                                   const std::string& message) {
  using Scalar = typename Derived::Scalar;
  const Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(symmetrized(a));
  const VectorX<Scalar>& values = eig.eigenvalues();
  const Scalar floor = std::numeric_limits<Scalar>::epsilon() * max_abs_or_one(a) *
                       Scalar(a.rows());
  if (values.size() > 0 && !(values.minCoeff() > floor)) throw NumericError(message);
  return eig.eigenvectors() * values.cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

template <typename Scalar>
MatrixX<Scalar> principal_submatrix(const MatrixX<Scalar>& joint,
                                    const std::vector<Eigen::Index>& idx) {
  MatrixX<Scalar> out(idx.size(), idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j) out(i, j) = joint(idx[i], idx[j]);
  return out;
}

inline std::vector<Eigen::Index> index_range(Eigen::Index start, Eigen::Index count) {
  std::vector<Eigen::Index> idx(count);
  std::iota(idx.begin(), idx.end(), start);
  return idx;
}

inline std::vector<Eigen::Index> concat(std::vector<Eigen::Index> a,
                                        const std::vector<Eigen::Index>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// I(a; b | c) of a jointly Gaussian vector given index sets into `joint`.
// An empty `c` gives the unconditional mutual information.
template <typename Scalar>
Scalar gaussian_conditional_mi(const MatrixX<Scalar>& joint,
                               const std::vector<Eigen::Index>& a,
                               const std::vector<Eigen::Index>& b,
                               const std::vector<Eigen::Index>& c = {}) {
  const Scalar ac = log_det_spd(principal_submatrix(joint, concat(a, c)), "Cov(a,c)");
  const Scalar bc = log_det_spd(principal_submatrix(joint, concat(b, c)), "Cov(b,c)");
  const Scalar abc =
      log_det_spd(principal_submatrix(joint, concat(concat(a, b), c)), "Cov(a,b,c)");
  const Scalar cc = c.empty() ? Scalar(0) : log_det_spd(principal_submatrix(joint, c), "Cov(c)");
  return Scalar(0.5) * (ac + bc - abc - cc);
}

// I(first `na` coordinates; remaining coordinates) of a Gaussian joint.
template <typename Scalar>
Scalar gaussian_mutual_information(const MatrixX<Scalar>& joint, Eigen::Index na) {
  return gaussian_conditional_mi<Scalar>(joint, index_range(0, na),
                                         index_range(na, joint.rows() - na));
}

template <typename Scalar>
struct LinearGaussianKoopman {
  MatrixX<Scalar> K;
  MatrixX<Scalar> Sigma;
  MatrixX<Scalar> C;
  MatrixX<Scalar> D;
  MatrixX<Scalar> R;

  Eigen::Index latent_dim() const { return K.rows(); }
  Eigen::Index observation_dim() const { return D.rows(); }

  void validate() const {
    const Eigen::Index d = K.rows();
    if (d < 1 || K.cols() != d) throw InputError("K must be square with d >= 1");
    if (Sigma.rows() != d || Sigma.cols() != d) throw InputError("Sigma must be d x d");
    if (C.rows() != d || C.cols() != d) throw InputError("C must be d x d");
    if (D.cols() != d || D.rows() < 1) throw InputError("D must be n x d");
    if (R.rows() != D.rows() || R.cols() != D.rows()) throw InputError("R must be n x n");
    if (!K.allFinite() || !D.allFinite()) throw InputError("K and D must be finite");
    require_psd(Sigma, "Sigma");
    require_psd(C, "C");
    require_psd(R, "R");
  }

  template <typename Other>
  LinearGaussianKoopman<Other> cast() const {
    return {K.template cast<Other>(), Sigma.template cast<Other>(),
            C.template cast<Other>(), D.template cast<Other>(), R.template cast<Other>()};
  }
};

namespace detail {

// M_n = sum_{i<n} K^i Sigma (K^i)^T, with M_0 = 0.
template <typename Scalar>
MatrixX<Scalar> forward_covariance_sum(const MatrixX<Scalar>& k, const MatrixX<Scalar>& sigma,
                                       int n) {
  MatrixX<Scalar> m = MatrixX<Scalar>::Zero(k.rows(), k.rows());
  MatrixX<Scalar> power = MatrixX<Scalar>::Identity(k.rows(), k.rows());
  for (int i = 0; i < n; ++i) {
    m += power * sigma * power.transpose();
    power = (k * power).eval();
  }
  return symmetrized(m);
}

// Covariance of z_{t-1} when z_{t-n} ~ N(0, C).
template <typename Scalar>
MatrixX<Scalar> previous_latent_covariance(const LinearGaussianKoopman<Scalar>& model, int n) {
  const MatrixX<Scalar> kp = matrix_power(model.K, n - 1);
  return symmetrized(kp * model.C * kp.transpose() +
                     forward_covariance_sum(model.K, model.Sigma, n - 1));
}

}  // namespace detail

// n-step forward covariance M_n. M_1 = Sigma exactly.
template <typename Scalar>
MatrixX<Scalar> forward_covariance(const LinearGaussianKoopman<Scalar>& model, int n) {
  if (n < 1) throw InputError("forward_covariance: n must be >= 1");
  if (n == 1) return model.Sigma;
  return detail::forward_covariance_sum(model.K, model.Sigma, n);
}

// I(z_{t-n}; z_t) = 1/2 log det(I + M_n^{-1/2} K^n C (K^n)^T M_n^{-1/2}).
// `ridge` adds ridge * I to M_n; 1e-10 is the documented fallback for
// singular process noise.
template <typename Scalar>
Scalar latent_mutual_information(const LinearGaussianKoopman<Scalar>& model, int n,
                                 Scalar ridge = Scalar(0)) {
  const Eigen::Index d = model.latent_dim();
  MatrixX<Scalar> m = forward_covariance(model, n);
  m.diagonal().array() += ridge;
  const MatrixX<Scalar> whiten = inverse_sqrt_spd(
      m, "latent_mutual_information: forward covariance M_n is singular; use a "
         "positive-definite Sigma or pass a ridge (e.g. 1e-10)");
  const MatrixX<Scalar> kn = matrix_power(model.K, n);
  const MatrixX<Scalar> inner = MatrixX<Scalar>::Identity(d, d) +
                                whiten * kn * model.C * kn.transpose() * whiten;
  return Scalar(0.5) * log_det_spd(inner, "I + M^-1/2 K^n C K^nT M^-1/2");
}

// I(z_t; x_{t-1} | z_{t-n}) from the conditional joint of (z_t, x_{t-1})
// given z_{t-n}; evaluated through the Schur complement of the block joint.
template <typename Scalar>
Scalar fast_dissipating_information(const LinearGaussianKoopman<Scalar>& model, int n) {
  if (n < 2) throw InputError("fast_dissipating_information: n must be >= 2");
  const MatrixX<Scalar> mn = forward_covariance(model, n);
  const MatrixX<Scalar> mn1 = detail::forward_covariance_sum(model.K, model.Sigma, n - 1);
  const MatrixX<Scalar> cross = model.D * mn1 * model.K.transpose();  // Cov(x_{t-1}, z_t | z_{t-n})
  const MatrixX<Scalar> obs = symmetrized(model.D * mn1 * model.D.transpose() + model.R);
  const Eigen::LLT<MatrixX<Scalar>> mn_llt(mn);
  if (mn_llt.info() != Eigen::Success)
    throw NumericError("fast_dissipating_information: M_n is not positive definite");
  const MatrixX<Scalar> schur = symmetrized(obs - cross * mn_llt.solve(cross.transpose()));
  return Scalar(0.5) * (log_det_spd(obs, "D M_{n-1} D^T + R") -
                        log_det_spd(schur, "block joint Schur complement"));
}

// I(z_t; x_t | x_{t-1}) = H(x_t | x_{t-1}) - H(x_t | z_t, x_{t-1}), with the
// observation noise entropy as the second term. The reference latent sits n
// steps back (n = 1 means C is Cov(z_{t-1})).
template <typename Scalar>
Scalar residual_information(const LinearGaussianKoopman<Scalar>& model, int n = 1) {
  if (n < 1) throw InputError("residual_information: n must be >= 1");
  const Eigen::LLT<MatrixX<Scalar>> r_llt(symmetrized(model.R));
  if (r_llt.info() != Eigen::Success)
    throw InputError("residual_information: R must be positive definite");
  const MatrixX<Scalar> p_prev = detail::previous_latent_covariance(model, n);
  const MatrixX<Scalar> p_now =
      symmetrized(model.K * p_prev * model.K.transpose() + model.Sigma);
  const MatrixX<Scalar>& d = model.D;
  const MatrixX<Scalar> s_prev = symmetrized(d * p_prev * d.transpose() + model.R);
  const MatrixX<Scalar> s_now = symmetrized(d * p_now * d.transpose() + model.R);
  const MatrixX<Scalar> s_cross = d * model.K * p_prev * d.transpose();  // Cov(x_t, x_{t-1})
  const Eigen::LLT<MatrixX<Scalar>> prev_llt(s_prev);
  if (prev_llt.info() != Eigen::Success)
    throw NumericError("residual_information: Cov(x_{t-1}) is not positive definite");
  const MatrixX<Scalar> conditional =
      symmetrized(s_now - s_cross * prev_llt.solve(s_cross.transpose()));
  return Scalar(0.5) *
         (log_det_spd(conditional, "Cov(x_t | x_{t-1})") - log_det_spd(model.R, "R"));
}

// Joint covariance of (z_{t-n}, x_{t-1}, z_t, x_t), in that block order.
template <typename Scalar>
MatrixX<Scalar> disentanglement_joint_covariance(const LinearGaussianKoopman<Scalar>& model,
                                                 int n) {
  if (n < 1) throw InputError("disentanglement_joint_covariance: n must be >= 1");
  const Eigen::Index d = model.latent_dim();
  const Eigen::Index m = model.observation_dim();
  const MatrixX<Scalar>& k = model.K;
  const MatrixX<Scalar>& dd = model.D;
  const MatrixX<Scalar> kn1 = matrix_power(k, n - 1);
  const MatrixX<Scalar> kn = k * kn1;
  const MatrixX<Scalar> p_prev = detail::previous_latent_covariance(model, n);
  const MatrixX<Scalar> p_now = symmetrized(k * p_prev * k.transpose() + model.Sigma);

  MatrixX<Scalar> j(2 * d + 2 * m, 2 * d + 2 * m);
  const Eigen::Index iz = 0, ix = d, ia = d + m, ib = 2 * d + m;
  j.block(iz, iz, d, d) = model.C;
  j.block(ix, ix, m, m) = dd * p_prev * dd.transpose() + model.R;
  j.block(ia, ia, d, d) = p_now;
  j.block(ib, ib, m, m) = dd * p_now * dd.transpose() + model.R;
  j.block(ix, iz, m, d) = dd * kn1 * model.C;
  j.block(ia, iz, d, d) = kn * model.C;
  j.block(ib, iz, m, d) = dd * kn * model.C;
  j.block(ia, ix, d, m) = k * p_prev * dd.transpose();
  j.block(ib, ix, m, m) = dd * k * p_prev * dd.transpose();
  j.block(ib, ia, m, d) = dd * p_now;
  for (Eigen::Index r = 0; r < j.rows(); ++r)
    for (Eigen::Index c = r + 1; c < j.cols(); ++c) j(r, c) = j(c, r);
  return j;
}

// I(z_t; x_t) from the (z_t, x_t) block of the joint covariance.
template <typename Scalar>
Scalar latent_observation_information(const LinearGaussianKoopman<Scalar>& model, int n) {
  const Eigen::Index d = model.latent_dim();
  const Eigen::Index m = model.observation_dim();
  const MatrixX<Scalar> joint = disentanglement_joint_covariance(model, n);
  return gaussian_conditional_mi<Scalar>(joint, index_range(d + m, d),
                                         index_range(2 * d + m, m));
}

template <typename Scalar>
struct Disentanglement {
  Scalar mi_total = 0;     // I(z_t; x_t), from the joint
  Scalar mi_latent = 0;    // I(z_{t-n}; z_t)
  Scalar mi_fast = 0;      // I(z_t; x_{t-1} | z_{t-n})
  Scalar mi_residual = 0;  // I(z_t; x_t | x_{t-1})
  // |mi_total - (mi_latent + mi_fast + mi_residual)|
  Scalar residual = 0;
  // Exact chain-rule remainder: mi_total = sum of the three terms + correction.
  // Zero when z_t is conditionally independent of the rest given x_t and of
  // z_{t-n} given x_{t-1}.
  Scalar correction = 0;
};

template <typename Scalar>
Disentanglement<Scalar> disentanglement_identity(const LinearGaussianKoopman<Scalar>& model,
                                                 int n) {
  if (n < 2) throw InputError("disentanglement_identity: n must be >= 2");
  Disentanglement<Scalar> out;
  out.mi_latent = latent_mutual_information(model, n);
  out.mi_fast = fast_dissipating_information(model, n);
  out.mi_residual = residual_information(model, n);
  out.mi_total = latent_observation_information(model, n);
  out.residual = std::abs(out.mi_total - (out.mi_latent + out.mi_fast + out.mi_residual));

  const Eigen::Index d = model.latent_dim();
  const Eigen::Index m = model.observation_dim();
  const MatrixX<Scalar> joint = disentanglement_joint_covariance(model, n);
  const auto z = index_range(0, d);
  const auto x = index_range(d, m);
  const auto a = index_range(d + m, d);
  const auto b = index_range(2 * d + m, m);
  out.correction = gaussian_conditional_mi<Scalar>(joint, a, z, concat(x, b)) -
                   gaussian_conditional_mi<Scalar>(joint, a, z, x) -
                   gaussian_conditional_mi<Scalar>(joint, a, x, concat(z, b)) -
                   gaussian_conditional_mi<Scalar>(joint, a, z, b);
  return out;
}

// Unit-trace symmetric PSD matrix.
template <typename Scalar>
class DensityMatrix {
 public:
  static DensityMatrix from_matrix(const MatrixX<Scalar>& rho) {
    if (rho.rows() < 1 || rho.rows() != rho.cols())
      throw InputError("density matrix must be square and non-empty");
    if (!rho.allFinite()) throw InputError("density matrix has non-finite entries");
    if ((rho - rho.transpose()).cwiseAbs().maxCoeff() > Scalar(kSymmetryTolerance))
      throw InputError("density matrix is not symmetric");
    if (std::abs(rho.trace() - Scalar(1)) > Scalar(kSymmetryTolerance))
      throw InputError("density matrix trace differs from 1");
    DensityMatrix out;
    out.rho_ = symmetrized(rho);
    const Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(out.rho_, Eigen::EigenvaluesOnly);
    out.eigenvalues_ = eig.eigenvalues();
    if (out.eigenvalues_.minCoeff() < Scalar(-1e-12))
      throw InputError("density matrix has a negative eigenvalue");
    return out;
  }

  // C / tr(C) for a PSD covariance with positive trace.
  static DensityMatrix from_covariance(const MatrixX<Scalar>& c) {
    require_psd(c, "covariance");
    const Scalar trace = c.trace();
    if (!(trace > Scalar(0))) throw InputError("covariance has zero trace");
    MatrixX<Scalar> rho = symmetrized(c) / trace;
    rho.diagonal().array() += (Scalar(1) - rho.trace()) / Scalar(rho.rows());
    return from_matrix(rho);
  }

  const MatrixX<Scalar>& matrix() const { return rho_; }
  const VectorX<Scalar>& eigenvalues() const { return eigenvalues_; }
  Eigen::Index dim() const { return rho_.rows(); }

 private:
  MatrixX<Scalar> rho_;
  VectorX<Scalar> eigenvalues_;
};

// S(rho) = -tr(rho log rho), with 0 log 0 = 0.
template <typename Scalar>
Scalar von_neumann_entropy(const DensityMatrix<Scalar>& rho) {
  Scalar s = 0;
  for (Eigen::Index i = 0; i < rho.eigenvalues().size(); ++i) {
    const Scalar lambda = rho.eigenvalues()(i);
    if (lambda > Scalar(0)) s -= lambda * std::log(lambda);
  }
  return std::clamp(s, Scalar(0), std::log(Scalar(rho.dim())));
}

template <typename Scalar>
Scalar effective_dimension(const DensityMatrix<Scalar>& rho) {
  return std::exp(von_neumann_entropy(rho));
}

// Shannon entropy of a nonnegative weight vector normalized to sum 1; the
// eigenvalue form of the von Neumann entropy for diagonal density matrices.
template <typename Derived>
typename Derived::Scalar normalized_weight_entropy(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  const Scalar total = p.sum();
  if (!(total > Scalar(0))) throw InputError("weights must have positive sum");
  Scalar s = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const Scalar q = p(i) / total;
    if (q > Scalar(0)) s -= q * std::log(q);
  }
  return s;
}

// Solves M = Sigma + K M K^T for spectral radius(K) < 1.
template <typename Scalar>
MatrixX<Scalar> discrete_lyapunov(const MatrixX<Scalar>& k, const MatrixX<Scalar>& sigma) {
  const Eigen::Index d = k.rows();
  const Eigen::EigenSolver<MatrixX<Scalar>> spectrum(k, false);
  if (spectrum.eigenvalues().cwiseAbs().maxCoeff() >= Scalar(1))
    throw InputError("discrete_lyapunov: spectral radius of K must be < 1");
  // (I - K (x) K) vec(M) = vec(Sigma), column-major vec.
  MatrixX<Scalar> system = MatrixX<Scalar>::Identity(d * d, d * d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index p = 0; p < d; ++p)
        for (Eigen::Index q = 0; q < d; ++q)
          system(i + j * d, p + q * d) -= k(i, p) * k(j, q);
  const VectorX<Scalar> rhs = Eigen::Map<const VectorX<Scalar>>(sigma.data(), d * d);
  const VectorX<Scalar> solution = system.fullPivLu().solve(rhs);
  return symmetrized(Eigen::Map<const MatrixX<Scalar>>(solution.data(), d, d));
}

// ---------------------------------------------------------------------------
// Data-processing chain x_{n-1} -> z_{n-1} -> z_n -> x_n.

template <typename Scalar>
struct ChainInformation {
  Scalar info_xx = 0;  // I(x_{n-1}; x_n)
  Scalar info_zx = 0;  // I(z_{n-1}; x_n)
  Scalar info_zz = 0;  // I(z_{n-1}; z_n)
  bool first_holds = true;
  bool second_holds = true;
  bool violated() const { return !(first_holds && second_holds); }
};

// Joint covariance over (x_{n-1}, z_{n-1}, z_n, x_n) for stationary dynamics
// x_n = A x_{n-1} + v, v ~ N(0, Q), and encoder z = E x + u, u ~ N(0, S).
template <typename Scalar>
MatrixX<Scalar> chain_joint_covariance(const MatrixX<Scalar>& a, const MatrixX<Scalar>& q,
                                       const MatrixX<Scalar>& e, const MatrixX<Scalar>& s) {
  const Eigen::Index nx = a.rows();
  const Eigen::Index nz = e.rows();
  if (a.cols() != nx || q.rows() != nx || e.cols() != nx || s.rows() != nz)
    throw InputError("chain_joint_covariance: inconsistent dimensions");
  const MatrixX<Scalar> p = discrete_lyapunov(a, q);
  const MatrixX<Scalar> cross = a * p;  // Cov(x_n, x_{n-1})
  MatrixX<Scalar> j(2 * nx + 2 * nz, 2 * nx + 2 * nz);
  const Eigen::Index ix = 0, iz = nx, iz2 = nx + nz, ix2 = nx + 2 * nz;
  j.block(ix, ix, nx, nx) = p;
  j.block(ix2, ix2, nx, nx) = p;
  j.block(iz, iz, nz, nz) = e * p * e.transpose() + s;
  j.block(iz2, iz2, nz, nz) = e * p * e.transpose() + s;
  j.block(iz, ix, nz, nx) = e * p;
  j.block(iz2, ix, nz, nx) = e * cross;
  j.block(ix2, ix, nx, nx) = cross;
  j.block(iz2, iz, nz, nz) = e * cross * e.transpose();
  j.block(ix2, iz, nx, nz) = cross * e.transpose();
  j.block(ix2, iz2, nx, nz) = p * e.transpose();
  for (Eigen::Index r = 0; r < j.rows(); ++r)
    for (Eigen::Index c = r + 1; c < j.cols(); ++c) j(r, c) = j(c, r);
  return j;
}

// Evaluates I(x;x') >= I(z;x') >= I(z;z') on a joint ordered as
// (x_{n-1}, z_{n-1}, z_n, x_n). The joint must encode z_{n-1} from x_{n-1}
// only and z_n from x_n only; other structures are rejected.
template <typename Scalar>
ChainInformation<Scalar> information_chain_check(const MatrixX<Scalar>& joint, Eigen::Index nx,
                                                 Eigen::Index nz, Scalar slack = Scalar(1e-9)) {
  if (joint.rows() != 2 * (nx + nz) || joint.cols() != joint.rows())
    throw InputError("information_chain_check: joint has wrong size");
  require_psd(joint, "chain joint covariance");
  const Eigen::Index ix = 0, iz = nx, iz2 = nx + nz, ix2 = nx + 2 * nz;
  const MatrixX<Scalar> cov_x = joint.block(ix, ix, nx, nx);
  const MatrixX<Scalar> cov_x2 = joint.block(ix2, ix2, nx, nx);
  const Eigen::LLT<MatrixX<Scalar>> llt_x(symmetrized(cov_x));
  const Eigen::LLT<MatrixX<Scalar>> llt_x2(symmetrized(cov_x2));
  if (llt_x.info() != Eigen::Success || llt_x2.info() != Eigen::Success)
    throw InputError("information_chain_check: state covariances must be positive definite");

  // z_{n-1} independent of x_n given x_{n-1}; z_n independent of z_{n-1} given x_n.
  const MatrixX<Scalar> zx2 = joint.block(ix2, iz, nx, nz).transpose();
  const MatrixX<Scalar> zx2_implied =
      joint.block(iz, ix, nz, nx) * llt_x.solve(joint.block(ix, ix2, nx, nx));
  const MatrixX<Scalar> zz2 = joint.block(iz2, iz, nz, nz).transpose();
  const MatrixX<Scalar> zz2_implied = zx2 * llt_x2.solve(joint.block(ix2, iz2, nx, nz));
  const Scalar tol = Scalar(1e-8) * max_abs_or_one(joint);
  if ((zx2 - zx2_implied).cwiseAbs().maxCoeff() > tol)
    throw InputError(
        "information_chain_check: Cov(z_{n-1}, x_n) is inconsistent with encoding "
        "z_{n-1} from x_{n-1} only");
  if ((zz2 - zz2_implied).cwiseAbs().maxCoeff() > tol)
    throw InputError(
        "information_chain_check: Cov(z_{n-1}, z_n) is inconsistent with encoding z_n "
        "from x_n only");

  ChainInformation<Scalar> out;
  out.info_xx = gaussian_conditional_mi<Scalar>(joint, index_range(ix, nx), index_range(ix2, nx));
  out.info_zx = gaussian_conditional_mi<Scalar>(joint, index_range(iz, nz), index_range(ix2, nx));
  out.info_zz = gaussian_conditional_mi<Scalar>(joint, index_range(iz, nz), index_range(iz2, nz));
  out.first_holds = out.info_xx >= out.info_zx - slack;
  out.second_holds = out.info_zx >= out.info_zz - slack;
  return out;
}

// ---------------------------------------------------------------------------
// Autoregressive error bound.

template <typename Scalar>
struct ErrorBound {
  Scalar gap_sum = 0;       // sum_n I(x_{n-1};x_n) - I(z_{n-1};z_n), clamped at 0
  Scalar tv_bound = 0;      // sqrt(gap_sum / 2 + epsilon)
  Scalar moment_bound = 0;  // cbar * sqrt(2 gap_sum + epsilon)
};

template <typename Scalar>
ErrorBound<Scalar> error_bound(std::span<const Scalar> true_mi, std::span<const Scalar> latent_mi,
                               Scalar epsilon, Scalar cbar = Scalar(1)) {
  if (true_mi.size() != latent_mi.size())
    throw InputError("error_bound: information sequences differ in length");
  if (true_mi.empty()) throw InputError("error_bound: need at least one step");
  if (epsilon < Scalar(0)) throw InputError("error_bound: epsilon must be >= 0");
  if (cbar < Scalar(0)) throw InputError("error_bound: cbar must be >= 0");
  Scalar sum = 0;
  for (std::size_t i = 0; i < true_mi.size(); ++i) {
    const Scalar gap = true_mi[i] - latent_mi[i];
    if (gap < Scalar(-1e-9))
      throw InputError("error_bound: latent information exceeds state information at step " +
                       std::to_string(i + 1));
    sum += gap;
  }
  ErrorBound<Scalar> out;
  out.gap_sum = std::max(sum, Scalar(0));
  out.tv_bound = std::sqrt(Scalar(0.5) * out.gap_sum + epsilon);
  out.moment_bound = cbar * std::sqrt(Scalar(2) * out.gap_sum + epsilon);
  return out;
}

// Rate-distortion lower bound on the accumulated squared error, with the
// marginal-entropy constant folded in: (n t / 2 pi e) exp(2/(n t) (sum I_x
// - sum I_z - epsilon)). Informational only.
template <typename Scalar>
Scalar lower_error_bound(std::span<const Scalar> true_mi, std::span<const Scalar> latent_mi,
                         Scalar epsilon, Eigen::Index state_dim) {
  if (true_mi.size() != latent_mi.size() || true_mi.empty())
    throw InputError("lower_error_bound: sequences must be non-empty and equal length");
  const Scalar nt = Scalar(state_dim) * Scalar(true_mi.size());
  const Scalar sx = std::accumulate(true_mi.begin(), true_mi.end(), Scalar(0));
  const Scalar sz = std::accumulate(latent_mi.begin(), latent_mi.end(), Scalar(0));
  const Scalar two_pi_e = Scalar(2) * Scalar(M_PI) * std::exp(Scalar(1));
  return nt / two_pi_e * std::exp(Scalar(2) / nt * (sx - sz - epsilon));
}

// ---------------------------------------------------------------------------
// Report over one model.

struct InfoReport {
  int n = 0;
  double mi_latent = 0;
  double mi_fast = 0;
  double mi_residual = 0;
  double mi_total = 0;
  double vn_entropy = 0;
  double effective_dim = 0;
  double gap_sum = 0;
  double bound_value = 0;
  std::optional<double> epsilon_enc;
  std::optional<double> epsilon_tra;
  std::optional<double> epsilon_rec;
  double identity_residual = 0;
  double identity_correction = 0;
  double cbar = 1;
};

struct EpsilonTerms {
  double enc = 0;
  double tra = 0;
  double rec = 0;
  double total() const { return enc + tra + rec; }
};

// Per-step information of the observed and latent chains when z_0 ~ N(0, C)
// is propagated forward: entry k-1 holds I(x_{k-1}; x_k) and I(z_{k-1}; z_k).
template <typename Scalar>
void stepwise_information(const LinearGaussianKoopman<Scalar>& model, int steps,
                          std::vector<Scalar>& observed, std::vector<Scalar>& latent) {
  observed.clear();
  latent.clear();
  MatrixX<Scalar> cov = model.C;
  for (int k = 1; k <= steps; ++k) {
    LinearGaussianKoopman<Scalar> step = model;
    step.C = cov;
    latent.push_back(latent_mutual_information(step, 1));
    const MatrixX<Scalar> next = symmetrized(model.K * cov * model.K.transpose() + model.Sigma);
    const Eigen::Index m = model.observation_dim();
    MatrixX<Scalar> j(2 * m, 2 * m);
    j.topLeftCorner(m, m) = model.D * cov * model.D.transpose() + model.R;
    j.bottomRightCorner(m, m) = model.D * next * model.D.transpose() + model.R;
    j.bottomLeftCorner(m, m) = model.D * model.K * cov * model.D.transpose();
    j.topRightCorner(m, m) = j.bottomLeftCorner(m, m).transpose();
    observed.push_back(gaussian_mutual_information<Scalar>(j, m));
    cov = next;
  }
}

// Builds the report for the generative model itself. Because x is generated
// from z, the observed information never exceeds the latent information, so
// per-step gaps are clamped at zero before entering the bound; `gap_sum`
// keeps the raw (non-positive) total.
inline InfoReport info_report(const LinearGaussianKoopman<double>& model, int n,
                              double cbar = 1.0,
                              std::optional<EpsilonTerms> epsilon = std::nullopt) {
  model.validate();
  const Disentanglement<double> parts = disentanglement_identity(model, n);
  InfoReport r;
  r.n = n;
  r.mi_latent = parts.mi_latent;
  r.mi_fast = parts.mi_fast;
  r.mi_residual = parts.mi_residual;
  r.mi_total = parts.mi_total;
  r.identity_residual = parts.residual;
  r.identity_correction = parts.correction;
  const auto rho = DensityMatrix<double>::from_covariance(model.C);
  r.vn_entropy = von_neumann_entropy(rho);
  r.effective_dim = effective_dimension(rho);

  std::vector<double> observed, latent;
  stepwise_information(model, n, observed, latent);
  std::vector<double> clamped = latent;
  r.gap_sum = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    r.gap_sum += observed[i] - latent[i];
    clamped[i] = std::min(latent[i], observed[i]);
  }
  const double eps = epsilon ? epsilon->total() : 0.0;
  r.cbar = cbar;
  r.bound_value = error_bound<double>(observed, clamped, eps, cbar).tv_bound;
  if (epsilon) {
    r.epsilon_enc = epsilon->enc;
    r.epsilon_tra = epsilon->tra;
    r.epsilon_rec = epsilon->rec;
  }
  return r;
}

}  // namespace infokoop
