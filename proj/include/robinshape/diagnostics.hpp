#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <Eigen/Core>

#include "robinshape/error.hpp"

namespace robinshape {

/// Rows are chain steps, columns are coordinates.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr Eigen::Index kMinBatchMeansSamples = 100;

/// Non-overlapping batch means estimate of the Monte Carlo standard error.
struct BatchMeans {
  Eigen::Index n_batches = 0;
  Eigen::Index batch_size = 0;
  Eigen::VectorXd mcse;
  Eigen::VectorXd halfwidth;  // t quantile * mcse
  double t_quantile = 0.0;
};

inline double student_t_quantile(double p, double dof) {
  const boost::math::students_t dist(dof);
  return boost::math::quantile(dist, p);
}

/// n_b = floor(sqrt(n)) batches of floor(n / n_b) samples; trailing samples
/// that do not fill a batch are dropped. Returns nullopt below 100 samples.
template <class Derived>
std::optional<BatchMeans> mcse_batch_means(const Eigen::MatrixBase<Derived>& samples, double confidence = 0.98) {
  const Eigen::Index n = samples.rows();
  if (n < kMinBatchMeansSamples) return std::nullopt;
  BatchMeans out;
  out.n_batches = static_cast<Eigen::Index>(std::floor(std::sqrt(static_cast<double>(n))));
  out.batch_size = n / out.n_batches;
  const Eigen::Index d = samples.cols();
  Eigen::MatrixXd means(out.n_batches, d);
  for (Eigen::Index b = 0; b < out.n_batches; ++b) {
    means.row(b) = samples.middleRows(b * out.batch_size, out.batch_size).colwise().mean();
  }
  const Eigen::RowVectorXd grand = means.colwise().mean();
  const Eigen::RowVectorXd var =
      (means.rowwise() - grand).array().square().colwise().sum() / static_cast<double>(out.n_batches - 1);
  out.mcse = (var.transpose() / static_cast<double>(out.n_batches)).cwiseSqrt();
  out.t_quantile = student_t_quantile(0.5 + 0.5 * confidence, static_cast<double>(out.n_batches - 1));
  out.halfwidth = out.t_quantile * out.mcse;
  return out;
}

template <class Derived>
Eigen::VectorXd sample_std(const Eigen::MatrixBase<Derived>& samples) {
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const double denom = std::max<double>(1.0, static_cast<double>(samples.rows() - 1));
  return ((samples.rowwise() - mean).array().square().colwise().sum() / denom).sqrt().transpose();
}

template <class Derived>
Eigen::VectorXd sample_skewness(const Eigen::MatrixBase<Derived>& samples) {
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const Eigen::ArrayXXd c = (samples.rowwise() - mean).array();
  const Eigen::ArrayXd m2 = c.square().colwise().mean().transpose();
  const Eigen::ArrayXd m3 = c.cube().colwise().mean().transpose();
  Eigen::VectorXd out(samples.cols());
  for (Eigen::Index j = 0; j < samples.cols(); ++j) out[j] = m2[j] > 0.0 ? m3[j] / std::pow(m2[j], 1.5) : 0.0;
  return out;
}

struct StoppingVerdict {
  bool ready = false;      // enough samples for batch means
  bool converged = false;
  Eigen::VectorXd ratio;   // halfwidth / posterior std per coordinate
  std::optional<BatchMeans> batch;
  Eigen::VectorXd posterior_std;
};

/// True iff every halfwidth is strictly below `threshold` times the
/// matching posterior standard deviation.
inline bool stopping_rule(const Eigen::VectorXd& halfwidth, const Eigen::VectorXd& posterior_std, double threshold = 0.1) {
  if (halfwidth.size() != posterior_std.size()) throw InvalidArgument("halfwidth/std size mismatch");
  for (Eigen::Index j = 0; j < halfwidth.size(); ++j) {
    if (!(halfwidth[j] < threshold * posterior_std[j])) return false;
  }
  return true;
}

template <class Derived>
StoppingVerdict stopping_rule(const Eigen::MatrixBase<Derived>& samples, double threshold = 0.1,
                              double confidence = 0.98) {
  StoppingVerdict v;
  v.batch = mcse_batch_means(samples, confidence);
  if (!v.batch) return v;
  v.ready = true;
  v.posterior_std = sample_std(samples);
  v.ratio = v.batch->halfwidth.cwiseQuotient(v.posterior_std);
  v.converged = stopping_rule(v.batch->halfwidth, v.posterior_std, threshold);
  return v;
}

/// Classical potential scale reduction factor per coordinate from chains
/// of equal length. Coordinates with zero within-chain variance get 1.
inline Eigen::VectorXd gelman_rubin(const std::vector<SampleMatrix>& chains) {
  if (chains.size() < 2) throw InvalidArgument("Gelman-Rubin needs at least two chains");
  const Eigen::Index n = chains.front().rows();
  const Eigen::Index d = chains.front().cols();
  if (n < 2) throw InvalidArgument("chains need at least two samples");
  for (const auto& c : chains) {
    if (c.rows() != n || c.cols() != d) throw InvalidArgument("chains must have equal shape");
  }
  const auto m = static_cast<double>(chains.size());
  const auto nn = static_cast<double>(n);
  Eigen::MatrixXd means(static_cast<Eigen::Index>(chains.size()), d);
  Eigen::VectorXd within = Eigen::VectorXd::Zero(d);
  for (std::size_t c = 0; c < chains.size(); ++c) {
    means.row(static_cast<Eigen::Index>(c)) = chains[c].colwise().mean();
    within += sample_std(chains[c]).array().square().matrix();
  }
  within /= m;
  const Eigen::RowVectorXd grand = means.colwise().mean();
  const Eigen::VectorXd between =
      (nn / (m - 1.0)) * (means.rowwise() - grand).array().square().colwise().sum().transpose().matrix();
  Eigen::VectorXd rhat(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!(within[j] > 0.0)) {
      rhat[j] = 1.0;
      continue;
    }
    const double pooled = (nn - 1.0) / nn * within[j] + between[j] / nn;
    rhat[j] = std::sqrt(pooled / within[j]);
  }
  return rhat;
}

/// Pointwise quantile of each column (linear interpolation between order
/// statistics).
template <class Derived>
Eigen::VectorXd column_quantile(const Eigen::MatrixBase<Derived>& samples, double p) {
  Eigen::VectorXd out(samples.cols());
  std::vector<double> col(static_cast<std::size_t>(samples.rows()));
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    for (Eigen::Index i = 0; i < samples.rows(); ++i) col[static_cast<std::size_t>(i)] = samples(i, j);
    std::sort(col.begin(), col.end());
    const double pos = p * static_cast<double>(col.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, col.size() - 1);
    const double w = pos - static_cast<double>(lo);
    out[j] = (1.0 - w) * col[lo] + w * col[hi];
  }
  return out;
}

}  // namespace robinshape
