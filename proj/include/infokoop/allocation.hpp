#pragma once

// Spectral allocation under a trace budget: maximize
//   1/2 sum_i log(1 + g_i p_i) + gamma * S(p / sum p)   s.t.  sum p = budget, p >= 0.
// gamma = 0 is classical water-filling.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include <Eigen/Dense>

#include "infokoop/errors.hpp"
#include "infokoop/gaussian_info.hpp"

namespace infokoop {

template <typename Scalar>
struct Allocation {
  VectorX<Scalar> p;
  Scalar budget = 0;
  // Lagrange multiplier of the budget constraint. In the entropy-regularized
  // problem the entropy gradient is taken with tr(C) held at the budget, which
  // shifts mu by a constant and can make it negative.
  Scalar mu = 0;
  Scalar gamma = 0;
  Scalar kkt_residual = 0;
  Scalar stationarity_residual = 0;
  Scalar objective = 0;
  int iterations = 0;

  Scalar water_level() const { return Scalar(1) / (Scalar(2) * mu); }
};

template <typename Scalar>
void validate_gains(const VectorX<Scalar>& g) {
  if (g.size() < 1) throw InputError("gains must be non-empty");
  if (!g.allFinite()) throw InputError("gains must be finite");
  if (g.minCoeff() < Scalar(0)) throw InputError("gains must be >= 0");
  if (!(g.maxCoeff() > Scalar(0))) throw InputError("all gains are zero; the objective is constant");
}

template <typename Scalar>
Scalar allocation_objective(const VectorX<Scalar>& g, const VectorX<Scalar>& p, Scalar gamma) {
  if (g.size() != p.size()) throw InputError("gains and weights differ in length");
  if (p.size() > 0 && p.minCoeff() < Scalar(0)) throw InputError("weights must be >= 0");
  Scalar value = 0;
  for (Eigen::Index i = 0; i < g.size(); ++i) value += std::log1p(g(i) * p(i));
  value *= Scalar(0.5);
  if (gamma != Scalar(0)) value += gamma * normalized_weight_entropy(p);
  return value;
}

namespace detail {

// Coordinates with identical gains get identical weights.
template <typename Scalar>
void average_ties(const VectorX<Scalar>& g, VectorX<Scalar>& p) {
  std::map<Scalar, std::pair<Scalar, int>> groups;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    auto& entry = groups[g(i)];
    entry.first += p(i);
    entry.second += 1;
  }
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const auto& entry = groups[g(i)];
    if (entry.second > 1) p(i) = entry.first / Scalar(entry.second);
  }
}

template <typename Scalar>
Scalar water_total(const VectorX<Scalar>& g, Scalar level) {
  Scalar total = 0;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (g(i) > Scalar(0)) total += std::max(Scalar(0), level - Scalar(1) / g(i));
  return total;
}

}  // namespace detail

template <typename Scalar>
Allocation<Scalar> water_fill(const VectorX<Scalar>& g, Scalar budget) {
  validate_gains(g);
  if (!(budget > Scalar(0)) || !std::isfinite(budget)) throw InputError("budget must be positive");

  Allocation<Scalar> out;
  out.budget = budget;
  out.gamma = 0;

  // Bisection on mu over [1e-12, g_max / 2]; the water level 1/(2 mu) is
  // monotone in mu and so is the allocated total.
  Scalar lo = Scalar(1e-12), hi = g.maxCoeff() / Scalar(2);
  for (int it = 0; it < 400 && hi - lo > std::numeric_limits<Scalar>::epsilon() * hi; ++it) {
    const Scalar mid = Scalar(0.5) * (lo + hi);
    if (detail::water_total(g, Scalar(1) / (Scalar(2) * mid)) > budget)
      lo = mid;
    else
      hi = mid;
    out.iterations = it + 1;
  }
  Scalar level = Scalar(1) / (lo + hi);

  // Polish: on the active set the level has a closed form.
  for (int pass = 0; pass < 8; ++pass) {
    Scalar inverse_sum = 0;
    int active = 0;
    for (Eigen::Index i = 0; i < g.size(); ++i)
      if (g(i) > Scalar(0) && Scalar(1) / g(i) < level) {
        inverse_sum += Scalar(1) / g(i);
        ++active;
      }
    if (active == 0) break;
    const Scalar next = (budget + inverse_sum) / Scalar(active);
    if (next == level) break;
    level = next;
  }

  out.p.resize(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i)
    out.p(i) = g(i) > Scalar(0) ? std::max(Scalar(0), level - Scalar(1) / g(i)) : Scalar(0);
  detail::average_ties(g, out.p);
  out.mu = Scalar(1) / (Scalar(2) * level);

  Scalar residual = std::abs(out.p.sum() - budget);
  Scalar stationarity = 0;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (out.p(i) > Scalar(0))
      stationarity = std::max(
          stationarity, std::abs(g(i) / (Scalar(2) * (Scalar(1) + g(i) * out.p(i))) - out.mu));
    else
      stationarity = std::max(stationarity, std::max(Scalar(0), g(i) / Scalar(2) - out.mu));
  }
  out.stationarity_residual = stationarity;
  out.kkt_residual = std::max(residual, stationarity);
  out.objective = allocation_objective(g, out.p, Scalar(0));
  return out;
}

namespace detail {

// Stationarity of one coordinate in u = log p, with tr(C) held at `budget`:
//   F(u) = g / (2 (1 + g e^u)) - mu - (gamma / budget) (u - log budget + 1).
// F is strictly decreasing.
template <typename Scalar>
struct EntropyStationarity {
  Scalar g, mu, gamma, budget;

  Scalar value(Scalar u) const {
    return g / (Scalar(2) * (Scalar(1) + g * std::exp(u))) - mu -
           gamma / budget * (u - std::log(budget) + Scalar(1));
  }
  Scalar derivative(Scalar u) const {
    const Scalar e = g * std::exp(u);
    return -g * e / (Scalar(2) * (Scalar(1) + e) * (Scalar(1) + e)) - gamma / budget;
  }
};

template <typename Scalar>
Scalar solve_log_weight(const EntropyStationarity<Scalar>& f) {
  const Scalar log_budget = std::log(f.budget);
  Scalar lo = log_budget - Scalar(2) - f.budget / f.gamma * f.mu;
  Scalar hi = log_budget + f.budget / f.gamma * (f.g / Scalar(2) - f.mu);
  if (!(f.value(lo) >= Scalar(0)) || !(f.value(hi) <= Scalar(0)) || !std::isfinite(lo) ||
      !std::isfinite(hi))
    throw NumericError("entropy allocation: could not bracket the stationarity root for (g=" +
                       std::to_string(double(f.g)) + ", gamma=" + std::to_string(double(f.gamma)) +
                       ", budget=" + std::to_string(double(f.budget)) + ")");
  Scalar u = Scalar(0.5) * (lo + hi);
  for (int it = 0; it < 300; ++it) {
    const Scalar fu = f.value(u);
    if (fu == Scalar(0)) return u;
    if (fu > Scalar(0))
      lo = u;
    else
      hi = u;
    // Newton step, falling back to bisection when it leaves the bracket.
    Scalar next = u - fu / f.derivative(u);
    if (!(next > lo && next < hi)) next = Scalar(0.5) * (lo + hi);
    if (next == u || hi - lo <= std::numeric_limits<Scalar>::epsilon() * (Scalar(1) + std::abs(u)))
      return next;
    u = next;
  }
  return u;
}

}  // namespace detail

template <typename Scalar>
Allocation<Scalar> entropy_regularized_allocation(const VectorX<Scalar>& g, Scalar budget,
                                                  Scalar gamma) {
  validate_gains(g);
  if (!(budget > Scalar(0)) || !std::isfinite(budget)) throw InputError("budget must be positive");
  if (!(gamma > Scalar(0)) || !std::isfinite(gamma)) throw InputError("gamma must be positive");
  const Eigen::Index d = g.size();

  VectorX<Scalar> u(d);
  auto solve_all = [&](Scalar mu) {
    for (Eigen::Index i = 0; i < d; ++i)
      u(i) = detail::solve_log_weight(detail::EntropyStationarity<Scalar>{g(i), mu, gamma, budget});
    return u.array().exp().sum();
  };

  // The allocated total is decreasing in mu; mu ranges over the whole line.
  Scalar lo = -Scalar(1), hi = g.maxCoeff() / Scalar(2) + Scalar(1);
  for (int it = 0; solve_all(lo) < budget; ++it) {
    if (it > 200) throw NumericError("entropy allocation: could not bracket the multiplier");
    lo = Scalar(2) * lo;
  }
  for (int it = 0; solve_all(hi) > budget; ++it) {
    if (it > 200) throw NumericError("entropy allocation: could not bracket the multiplier");
    hi = Scalar(2) * hi;
  }

  Allocation<Scalar> out;
  Scalar mu = Scalar(0.5) * (lo + hi);
  for (int it = 0; it < 400; ++it) {
    const Scalar total = solve_all(mu);
    out.iterations = it + 1;
    if (total == budget) break;
    if (total > budget)
      lo = mu;
    else
      hi = mu;
    // d total / d mu = sum p_i / F'_i(u_i).
    Scalar slope = 0;
    for (Eigen::Index i = 0; i < d; ++i)
      slope += std::exp(u(i)) /
               detail::EntropyStationarity<Scalar>{g(i), mu, gamma, budget}.derivative(u(i));
    Scalar next = slope < Scalar(0) ? mu - (total - budget) / slope : Scalar(0.5) * (lo + hi);
    if (!(next > lo && next < hi)) next = Scalar(0.5) * (lo + hi);
    if (next == mu || hi - lo <= std::numeric_limits<Scalar>::epsilon() * (Scalar(1) + std::abs(mu)))
      break;
    mu = next;
  }
  solve_all(mu);

  out.budget = budget;
  out.gamma = gamma;
  out.mu = mu;
  out.p = u.array().exp();
  detail::average_ties(g, out.p);
  Scalar stationarity = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const detail::EntropyStationarity<Scalar> f{g(i), mu, gamma, budget};
    stationarity = std::max(stationarity, std::abs(f.value(u(i))));
  }
  out.stationarity_residual = stationarity;
  out.kkt_residual = std::max(stationarity, std::abs(out.p.sum() - budget));
  out.objective = allocation_objective(g, out.p, gamma);
  return out;
}

// Squared singular values of M_n^{-1/2} K^n, descending.
template <typename Scalar>
VectorX<Scalar> gains_from_model(const LinearGaussianKoopman<Scalar>& model, int n) {
  const MatrixX<Scalar> whiten = inverse_sqrt_spd(
      forward_covariance(model, n), "gains_from_model: forward covariance M_n is singular");
  const Eigen::JacobiSVD<MatrixX<Scalar>> svd(whiten * matrix_power(model.K, n));
  return svd.singularValues().array().square();
}

}  // namespace infokoop
