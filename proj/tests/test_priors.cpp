#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "robinshape/priors.hpp"

using namespace robinshape;

namespace {

TraceMesh uniform_trace(int nx, double L = 1.0) { return trace_of_top(build_slab_mesh(L, 0.05, nx, 1)); }

}  // namespace

TEST(AlphaPrior, PaperConstants) {
  const AlphaPrior a = build_alpha_prior(7, 0.01, -1.0);
  ASSERT_EQ(a.size(), 15);
  EXPECT_DOUBLE_EQ(a.variance[0], 0.01);
  EXPECT_DOUBLE_EQ(a.variance[1], 0.005);
  EXPECT_DOUBLE_EQ(a.variance[2], 0.005);
  EXPECT_DOUBLE_EQ(a.variance[13], 0.01 / 8.0);
  EXPECT_DOUBLE_EQ(a.variance[14], 0.01 / 8.0);
  for (int n = 1; n <= 7; ++n) EXPECT_EQ(a.variance[2 * n - 1], a.variance[2 * n]);
  EXPECT_EQ(a.mean, Eigen::VectorXd::Zero(15));
}

TEST(AlphaPrior, FlatSpectrum) {
  const AlphaPrior a = build_alpha_prior(1, 1.0, 0.0);
  EXPECT_EQ(a.variance, Eigen::VectorXd::Ones(3));
  EXPECT_THROW(build_alpha_prior(3, 0.0, -1.0), InvalidArgument);
}

TEST(AlphaPrior, MonteCarloVariances) {
  const AlphaPrior a = build_alpha_prior(7, 0.01, -1.0);
  std::mt19937_64 rng(31);
  const int n = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(15), sq = Eigen::VectorXd::Zero(15);
  for (int k = 0; k < n; ++k) {
    const Eigen::VectorXd x = a.sample(rng);
    sum += x;
    sq += x.cwiseProduct(x);
  }
  const Eigen::VectorXd mean = sum / n;
  const Eigen::VectorXd var = sq / n - mean.cwiseProduct(mean);
  for (int i = 0; i < 15; ++i) EXPECT_NEAR(var[i] / a.variance[i], 1.0, 0.03) << i;
  EXPECT_EQ(a.sample_from(Eigen::VectorXd::Zero(15)), a.mean);
}

TEST(BetaPrior, PaperConstantsGiveSpdPrecision) {
  const BetaPrior b = build_beta_prior(uniform_trace(77), 50.0, 10.0);
  EXPECT_EQ(b.size(), 78);
  EXPECT_EQ(b.precision.rows(), 78);
  EXPECT_EQ((b.precision - b.precision.transpose()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(b.precision).info(), Eigen::Success);
}

TEST(BetaPrior, EndpointTermHasTwoEntries) {
  const BetaPrior b = build_beta_prior(uniform_trace(20), 50.0, 10.0);
  const Eigen::MatrixXd R(b.endpoint);
  int nonzero = 0;
  for (Eigen::Index i = 0; i < R.rows(); ++i)
    for (Eigen::Index j = 0; j < R.cols(); ++j)
      if (R(i, j) != 0.0) ++nonzero;
  EXPECT_EQ(nonzero, 2);
  EXPECT_EQ(R(0, 0), 10.0);
  EXPECT_EQ(R(20, 20), 10.0);
}

TEST(BetaPrior, MatricesMatchDefinitions) {
  const TraceMesh tr = uniform_trace(10);
  const BetaPrior b = build_beta_prior(tr, 2.0, 3.0);
  const double h = 0.1;
  const Eigen::MatrixXd K(b.stiffness), M(b.mass);
  EXPECT_NEAR(K(0, 0), 1.0 / h, 1e-12);
  EXPECT_NEAR(K(4, 4), 2.0 / h, 1e-12);
  EXPECT_NEAR(K(4, 5), -1.0 / h, 1e-12);
  EXPECT_NEAR(M(4, 4), 9.0 * 2.0 * h / 3.0, 1e-12);
  EXPECT_NEAR(M(4, 5), 9.0 * h / 6.0, 1e-12);
  EXPECT_NEAR(K.sum(), 0.0, 1e-12);
  EXPECT_NEAR(M.sum(), 9.0 * 1.0, 1e-12);
  EXPECT_THROW(build_beta_prior(tr, 0.0, 3.0), InvalidArgument);
  EXPECT_THROW(build_beta_prior(tr, 1.0, -3.0), InvalidArgument);
}

TEST(BetaPrior, MarginalVarianceIsHomogeneous) {
  const BetaPrior b = build_beta_prior(uniform_trace(77), 50.0, 10.0);
  const Eigen::VectorXd d = b.precision.inverse().diagonal();
  EXPECT_LE(d.maxCoeff() / d.minCoeff(), 1.1);
  EXPECT_LE((b.covariance().diagonal() - d).cwiseAbs().maxCoeff(), 1e-10 * d.maxCoeff());
}

TEST(BetaPrior, MonteCarloVariances) {
  const BetaPrior b = build_beta_prior(uniform_trace(77), 50.0, 10.0);
  const Eigen::VectorXd d = b.covariance().diagonal();
  std::mt19937_64 rng(32);
  const int n = 10000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(78), sq = Eigen::VectorXd::Zero(78);
  for (int k = 0; k < n; ++k) {
    const Eigen::VectorXd x = b.sample(rng);
    sum += x;
    sq += x.cwiseProduct(x);
  }
  const Eigen::VectorXd mean = sum / n;
  const Eigen::VectorXd var = sq / n - mean.cwiseProduct(mean);
  for (int i = 0; i < 78; ++i) EXPECT_NEAR(var[i] / d[i], 1.0, 0.1) << i;
  EXPECT_EQ(b.sample_from(Eigen::VectorXd::Zero(78)), b.mean);
}

// Increments normalized by the marginal variance shrink as the correlation
// length 1/l grows.
TEST(BetaPrior, DrawsSmootherAtLongerCorrelationLength) {
  const TraceMesh tr = uniform_trace(77);
  std::mt19937_64 rng(33);
  double previous = INFINITY;
  for (double l : {80.0, 40.0, 20.0, 10.0, 5.0}) {
    const BetaPrior b = build_beta_prior(tr, 50.0, l);
    const double var = b.covariance().diagonal().mean();
    double inc = 0.0;
    const int n = 4000;
    for (int k = 0; k < n; ++k) {
      const Eigen::VectorXd x = b.sample(rng);
      inc += (x.tail(77) - x.head(77)).squaredNorm() / 77.0;
    }
    inc /= n * var;
    EXPECT_LT(inc, previous) << "l = " << l;
    previous = inc;
  }
}

TEST(PriorPotential, ZeroAtMeanQuadraticAndMatchesDenseOracle) {
  const AlphaPrior a = build_alpha_prior(7, 0.01, -1.0);
  const BetaPrior b = build_beta_prior(uniform_trace(77), 50.0, 10.0);
  EXPECT_EQ(prior_potential(a, b, a.mean, b.mean), 0.0);

  std::mt19937_64 rng(34);
  const Eigen::VectorXd da = a.sample(rng) - a.mean;
  const Eigen::VectorXd db = b.sample(rng) - b.mean;
  const double single = a.potential(a.mean + da);
  EXPECT_NEAR(a.potential(a.mean + 2.0 * da), 4.0 * single, 1e-12 * single);

  const Eigen::MatrixXd Pa = a.covariance().inverse();
  const Eigen::MatrixXd Pb = (Eigen::MatrixXd(b.stiffness) + Eigen::MatrixXd(b.mass) + Eigen::MatrixXd(b.endpoint)) / 50.0;
  const double oracle = 0.5 * da.dot(Pa * da) + 0.5 * db.dot(Pb * db);
  const double value = prior_potential(a, b, a.mean + da, b.mean + db);
  EXPECT_NEAR(value, oracle, 1e-10 * oracle);

  EXPECT_THROW(prior_potential(a, b, Eigen::VectorXd::Zero(3), b.mean), InvalidArgument);
  EXPECT_THROW(prior_potential(a, b, a.mean, Eigen::VectorXd::Zero(3)), InvalidArgument);
}

TEST(PriorPotential, GradientIsPrecisionTimesOffset) {
  const AlphaPrior a = build_alpha_prior(3, 0.1, -1.0);
  const BetaPrior b = build_beta_prior(uniform_trace(9), 5.0, 4.0);
  std::mt19937_64 rng(35);
  const Eigen::VectorXd x = a.sample(rng), y = b.sample(rng);
  const double h = 1e-6;
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd p = x, m = x;
    p[i] += h;
    m[i] -= h;
    EXPECT_NEAR(a.gradient(x)[i], (a.potential(p) - a.potential(m)) / (2 * h), 1e-6 * (1 + std::abs(a.gradient(x)[i])));
  }
  for (int i = 0; i < y.size(); ++i) {
    Eigen::VectorXd p = y, m = y;
    p[i] += h;
    m[i] -= h;
    EXPECT_NEAR(b.gradient(y)[i], (b.potential(p) - b.potential(m)) / (2 * h), 1e-6 * (1 + std::abs(b.gradient(y)[i])));
  }
}
