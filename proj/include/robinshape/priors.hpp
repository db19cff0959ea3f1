#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Sparse>

#include "robinshape/error.hpp"
#include "robinshape/mesh.hpp"

namespace robinshape {

using SparseMatrix = Eigen::SparseMatrix<double>;

template <class Rng>
Eigen::VectorXd standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd xi(n);
  for (Eigen::Index i = 0; i < n; ++i) xi[i] = normal(rng);
  return xi;
}

/// Independent Gaussian prior on the Fourier coefficients with variance
/// sigma^2 (n+1)^s for both coefficients of frequency n.
struct AlphaPrior {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;

  [[nodiscard]] Eigen::Index size() const { return mean.size(); }
  [[nodiscard]] Eigen::VectorXd precision_diagonal() const { return variance.cwiseInverse(); }
  [[nodiscard]] Eigen::MatrixXd covariance() const { return variance.asDiagonal(); }
  [[nodiscard]] Eigen::MatrixXd precision() const { return precision_diagonal().asDiagonal(); }

  [[nodiscard]] double potential(const Eigen::VectorXd& alpha) const {
    if (alpha.size() != size()) throw InvalidArgument("alpha has the wrong length");
    return 0.5 * ((alpha - mean).array().square() / variance.array()).sum();
  }

  [[nodiscard]] Eigen::VectorXd gradient(const Eigen::VectorXd& alpha) const {
    return (alpha - mean).cwiseQuotient(variance);
  }

  [[nodiscard]] Eigen::VectorXd sample_from(const Eigen::VectorXd& xi) const {
    return mean + variance.cwiseSqrt().cwiseProduct(xi);
  }

  template <class Rng>
  Eigen::VectorXd sample(Rng& rng) const { return sample_from(standard_normal(size(), rng)); }
};

inline AlphaPrior build_alpha_prior(int p, double sigma_alpha2, double s_alpha) {
  if (p < 0) throw InvalidArgument("frequency cutoff must be non-negative");
  if (!(sigma_alpha2 > 0.0)) throw InvalidArgument("alpha prior variance must be positive");
  AlphaPrior prior;
  prior.mean = Eigen::VectorXd::Zero(2 * p + 1);
  prior.variance.resize(2 * p + 1);
  prior.variance[0] = sigma_alpha2;
  for (int n = 1; n <= p; ++n) {
    const double v = sigma_alpha2 * std::pow(n + 1.0, s_alpha);
    prior.variance[2 * n - 1] = v;
    prior.variance[2 * n] = v;
  }
  return prior;
}

/// Gaussian prior on the nodal Robin log-admittance defined through the
/// 1-D elliptic operator -d^2/ds^2 + l^2 with a Robin closure at both trace
/// endpoints: precision P = (K + M + R) / delta^2.
struct BetaPrior {
  Eigen::VectorXd mean;
  SparseMatrix stiffness;  // K
  SparseMatrix mass;       // M, includes l^2
  SparseMatrix endpoint;   // R
  Eigen::MatrixXd precision;
  Eigen::LLT<Eigen::MatrixXd> precision_factor;
  double delta2 = 1.0;
  double inverse_length = 1.0;

  [[nodiscard]] Eigen::Index size() const { return mean.size(); }

  [[nodiscard]] Eigen::MatrixXd covariance() const {
    return precision_factor.solve(Eigen::MatrixXd::Identity(size(), size()));
  }

  [[nodiscard]] double potential(const Eigen::VectorXd& beta) const {
    if (beta.size() != size()) throw InvalidArgument("beta has the wrong length");
    const Eigen::VectorXd d = beta - mean;
    return 0.5 * d.dot(precision * d);
  }

  [[nodiscard]] Eigen::VectorXd gradient(const Eigen::VectorXd& beta) const { return precision * (beta - mean); }

  /// mean + L^{-T} xi where P = L L^T, so the draw has covariance P^{-1}.
  [[nodiscard]] Eigen::VectorXd sample_from(const Eigen::VectorXd& xi) const {
    return mean + precision_factor.matrixU().solve(xi);
  }

  template <class Rng>
  Eigen::VectorXd sample(Rng& rng) const { return sample_from(standard_normal(size(), rng)); }
};

inline BetaPrior build_beta_prior(const TraceMesh& trace, double delta_beta2, double l) {
  if (!(delta_beta2 > 0.0) || !(l > 0.0)) throw InvalidArgument("beta prior constants must be positive");
  const auto q = static_cast<Eigen::Index>(trace.size());
  if (q < 2) throw InvalidArgument("trace needs at least two nodes");

  std::vector<Eigen::Triplet<double>> k_trips, m_trips, r_trips;
  for (std::size_t e = 0; e < trace.num_intervals(); ++e) {
    const auto [a, b] = trace.interval(e);
    const double h = trace.s[static_cast<std::size_t>(b)] - trace.s[static_cast<std::size_t>(a)];
    const double kk = 1.0 / h;
    const double md = l * l * h / 3.0;
    const double mo = l * l * h / 6.0;
    k_trips.insert(k_trips.end(), {{a, a, kk}, {b, b, kk}, {a, b, -kk}, {b, a, -kk}});
    m_trips.insert(m_trips.end(), {{a, a, md}, {b, b, md}, {a, b, mo}, {b, a, mo}});
  }
  r_trips.emplace_back(0, 0, l);
  r_trips.emplace_back(static_cast<int>(q - 1), static_cast<int>(q - 1), l);

  BetaPrior prior;
  prior.mean = Eigen::VectorXd::Zero(q);
  prior.delta2 = delta_beta2;
  prior.inverse_length = l;
  prior.stiffness.resize(q, q);
  prior.mass.resize(q, q);
  prior.endpoint.resize(q, q);
  prior.stiffness.setFromTriplets(k_trips.begin(), k_trips.end());
  prior.mass.setFromTriplets(m_trips.begin(), m_trips.end());
  prior.endpoint.setFromTriplets(r_trips.begin(), r_trips.end());
  prior.precision = Eigen::MatrixXd(prior.stiffness + prior.mass + prior.endpoint) / delta_beta2;
  prior.precision_factor.compute(prior.precision);
  if (prior.precision_factor.info() != Eigen::Success) throw SolverError("beta prior precision is not SPD");
  return prior;
}

inline double prior_potential(const AlphaPrior& alpha_prior, const BetaPrior& beta_prior,
                              const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta) {
  return alpha_prior.potential(alpha) + beta_prior.potential(beta);
}

}  // namespace robinshape
