#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/LU>

#include "robinshape/mala.hpp"

using namespace robinshape;

namespace {

GaussianTarget gaussian_2d() {
  Eigen::Matrix2d C;
  C << 2.0, 0.8, 0.8, 1.0;
  return {Eigen::Vector2d(1.0, -2.0), C.inverse()};
}

AdaptSettings frozen() {
  AdaptSettings s;
  s.enabled = false;
  return s;
}

// log N(x; mu, 2 tau A) up to the shared constant, by dense inverse.
double log_kernel(const Eigen::VectorXd& to, const Eigen::VectorXd& from, const Eigen::VectorXd& grad,
                  const Eigen::MatrixXd& A, double tau) {
  const Eigen::VectorXd d = to - (from - tau * A * grad);
  return -d.dot(A.inverse() * d) / (4.0 * tau);
}

// Standard normal restricted to m < 1; nullopt outside.
struct TruncatedNormal {
  [[nodiscard]] std::optional<TargetEvaluation> evaluate(const Eigen::VectorXd& m) const {
    if (m[0] >= 1.0) return std::nullopt;
    return TargetEvaluation{0.5 * m[0] * m[0], m};
  }
};

struct PoisonedNormal {
  [[nodiscard]] std::optional<TargetEvaluation> evaluate(const Eigen::VectorXd& m) const {
    if (m[0] > 1.5) return TargetEvaluation{NAN, m};
    return TargetEvaluation{0.5 * m.squaredNorm(), m};
  }
};

}  // namespace

TEST(Proposal, ZeroNoiseGivesPreconditionedDrift) {
  Eigen::Matrix3d A;
  A << 2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5;
  const AdaptState s = AdaptState::init(A, Eigen::VectorXd::Zero(3), 0.2, frozen());
  const Eigen::Vector3d m(0.5, -1.0, 2.0), g(1.0, 2.0, -3.0);
  const Eigen::VectorXd p = langevin_proposal(s, m, g, Eigen::VectorXd::Zero(3));
  EXPECT_LE((p - (m - 0.2 * s.A * g)).norm(), 1e-15);
  EXPECT_LE((s.chol * s.chol.transpose() - s.A).norm(), 1e-14);
  EXPECT_LE((s.A - A).norm(), 1e-9 * A.trace());
}

TEST(Proposal, RatioVanishesWithoutGradientAndIsAntisymmetric) {
  Eigen::Matrix2d A;
  A << 1.5, 0.4, 0.4, 0.7;
  const AdaptState s = AdaptState::init(A, Eigen::VectorXd::Zero(2), 0.3, frozen());
  const Eigen::Vector2d m(0.1, 0.2), ms(-0.7, 1.1), g(0.5, -0.4), gs(-1.2, 0.3);
  EXPECT_EQ(log_proposal_ratio(s, m, Eigen::Vector2d::Zero(), ms, Eigen::Vector2d::Zero()), 0.0);
  EXPECT_EQ(log_proposal_ratio(s, m, g, ms, gs), -log_proposal_ratio(s, ms, gs, m, g));
}

TEST(Proposal, RatioMatchesDenseGaussianKernels) {
  Eigen::Matrix3d A;
  A << 2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5;
  const double tau = 0.37;
  const AdaptState s = AdaptState::init(A, Eigen::VectorXd::Zero(3), tau, frozen());
  std::mt19937_64 rng(81);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd m = standard_normal(3, rng), ms = standard_normal(3, rng);
    const Eigen::VectorXd g = standard_normal(3, rng), gs = standard_normal(3, rng);
    const double oracle = log_kernel(m, ms, gs, s.A, tau) - log_kernel(ms, m, g, s.A, tau);
    EXPECT_NEAR(log_proposal_ratio(s, m, g, ms, gs), oracle, 1e-11 * (1.0 + std::abs(oracle)));
  }
}

// pi(m) q(m*|m) a(m, m*) = pi(m*) q(m|m*) a(m*, m) on pairs of points.
TEST(Kernel, DetailedBalanceOnPairs) {
  const GaussianTarget target = gaussian_2d();
  Eigen::Matrix2d A;
  A << 1.0, 0.2, 0.2, 0.6;
  const double tau = 0.4;
  const AdaptState s = AdaptState::init(A, Eigen::VectorXd::Zero(2), tau, frozen());
  std::mt19937_64 rng(82);
  for (int k = 0; k < 50; ++k) {
    const Eigen::VectorXd x = target.mean + standard_normal(2, rng), y = target.mean + standard_normal(2, rng);
    const auto ex = *target.evaluate(x), ey = *target.evaluate(y);
    const double a_xy = std::min(0.0, -ey.value + ex.value + log_proposal_ratio(s, x, ex.gradient, y, ey.gradient));
    const double a_yx = std::min(0.0, -ex.value + ey.value + log_proposal_ratio(s, y, ey.gradient, x, ex.gradient));
    const double lhs = -ex.value + log_kernel(y, x, ex.gradient, s.A, tau) + a_xy;
    const double rhs = -ey.value + log_kernel(x, y, ey.gradient, s.A, tau) + a_yx;
    EXPECT_NEAR(lhs, rhs, 1e-10 * (1.0 + std::abs(lhs)));
  }
}

TEST(Kernel, FrozenChainSamplesCorrelatedGaussian) {
  const GaussianTarget target = gaussian_2d();
  AdaptState s = AdaptState::init(Eigen::Matrix2d::Identity(), target.mean, 0.5, frozen());
  std::mt19937_64 rng(83);
  ChainState st = ChainState::start(target, target.mean);
  const int n = 200000;
  SampleMatrix xs(n, 5);
  for (int k = 0; k < n; ++k) {
    mala_step(st, s, target, rng);
    const Eigen::VectorXd d = st.m - target.mean;
    xs.row(k) << st.m[0], st.m[1], d[0] * d[0], d[0] * d[1], d[1] * d[1];
  }
  const Eigen::VectorXd mean = xs.colwise().mean().transpose();
  const Eigen::VectorXd mcse = mcse_batch_means(xs)->mcse;
  const Eigen::Matrix2d C = target.precision.inverse();
  const Eigen::VectorXd expect = (Eigen::VectorXd(5) << 1.0, -2.0, C(0, 0), C(0, 1), C(1, 1)).finished();
  for (int j = 0; j < 5; ++j) EXPECT_LE(std::abs(mean[j] - expect[j]), 4.0 * mcse[j]) << j;
  EXPECT_EQ(s.tau(), 0.5);
  EXPECT_EQ(s.t, 0);
}

TEST(Kernel, SmallStepOneDimensionalNormal) {
  const GaussianTarget target{Eigen::VectorXd::Constant(1, 3.0), Eigen::MatrixXd::Constant(1, 1, 4.0)};
  AdaptState s = AdaptState::init(Eigen::MatrixXd::Constant(1, 1, 0.25), target.mean, 0.25, frozen());
  std::mt19937_64 rng(84);
  ChainState st = ChainState::start(target, target.mean);
  const int n = 100000;
  SampleMatrix xs(n, 2);
  for (int k = 0; k < n; ++k) {
    mala_step(st, s, target, rng);
    xs(k, 0) = st.m[0];
    xs(k, 1) = (st.m[0] - 3.0) * (st.m[0] - 3.0);
  }
  EXPECT_GT(static_cast<double>(st.accepted) / n, 0.9);
  const Eigen::VectorXd mean = xs.colwise().mean().transpose();
  const Eigen::VectorXd mcse = mcse_batch_means(xs)->mcse;
  EXPECT_LE(std::abs(mean[0] - 3.0), 3.0 * mcse[0]);
  EXPECT_LE(std::abs(mean[1] - 0.25), 3.0 * mcse[1]);
}

TEST(Adaptation, RecoversCovarianceFromSamples) {
  std::mt19937_64 rng(85);
  Eigen::MatrixXd B = Eigen::MatrixXd::Random(5, 5);
  const Eigen::MatrixXd C = B * B.transpose() + 0.5 * Eigen::MatrixXd::Identity(5, 5);
  const Eigen::LLT<Eigen::MatrixXd> llt(C);
  const Eigen::VectorXd mu = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
  AdaptState s = AdaptState::init(Eigen::MatrixXd::Identity(5, 5), Eigen::VectorXd::Zero(5), 0.3);
  for (int k = 0; k < 100000; ++k) adapt(s, mu + llt.matrixL() * standard_normal(5, rng), 0.574);
  EXPECT_LE((s.cov - C).norm(), 0.05 * C.norm());
  EXPECT_LE((s.mean - mu).norm(), 0.05);
  EXPECT_LE((s.A - s.cov).norm(), 0.05 * C.norm());
  EXPECT_NEAR(s.tau(), 0.3, 1e-12);
}

TEST(Adaptation, StepSizeFollowsAcceptance) {
  AdaptState up = AdaptState::init(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), 0.3);
  AdaptState down = up;
  for (int k = 0; k < 50; ++k) {
    adapt(up, Eigen::VectorXd::Zero(2), 1.0);
    adapt(down, Eigen::VectorXd::Zero(2), 0.0);
  }
  EXPECT_GT(up.tau(), 0.3);
  EXPECT_LT(down.tau(), 0.3);
  AdaptState off = AdaptState::init(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), 0.3, frozen());
  adapt(off, Eigen::VectorXd::Ones(2), 1.0);
  EXPECT_EQ(off.tau(), 0.3);
  EXPECT_EQ(off.cov, Eigen::MatrixXd::Identity(2, 2));
}

TEST(Adaptation, RegularizesSingularCovariance) {
  AdaptState s = AdaptState::init(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), 0.3);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(3, 3);
  C(0, 0) = 1.0;
  s.set_proposal(C);
  EXPECT_TRUE(s.chol.allFinite());
  EXPECT_GT(s.chol.diagonal().minCoeff(), 0.0);
  EXPECT_LE((s.A - C).norm(), 1e-6);
  EXPECT_THROW(AdaptState::init(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(3), 0.3), InvalidArgument);
  EXPECT_THROW(AdaptState::init(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), 0.0), InvalidArgument);
}

TEST(Adaptation, AdaptiveChainTunesAcceptanceAndAgreesWithFrozen) {
  const GaussianTarget target = gaussian_2d();
  MalaSchedule sched;
  sched.burn_in = 5000;
  sched.check_interval = 5000;
  sched.stopping_threshold = 0.03;
  std::mt19937_64 r1(86), r2(87);
  const ChainOutput adaptive =
      run_chain(target.mean, AdaptState::init(Eigen::Matrix2d::Identity(), target.mean, 2.0), target, sched, r1);
  const ChainOutput fixed = run_chain(target.mean, AdaptState::init(Eigen::Matrix2d::Identity(), target.mean, 0.5, frozen()),
                                      target, sched, r2);
  ASSERT_TRUE(adaptive.converged);
  ASSERT_TRUE(fixed.converged);
  EXPECT_NEAR(adaptive.post_burn_in_acceptance, 0.574, 0.05);
  for (int j = 0; j < 2; ++j) {
    EXPECT_LE(std::abs(adaptive.mean()[j] - fixed.mean()[j]), 4.0 * std::hypot(adaptive.mcse[j], fixed.mcse[j]));
    EXPECT_NEAR(adaptive.posterior_std[j], std::sqrt(target.precision.inverse()(j, j)), 0.05);
  }
  const Eigen::Matrix2d C = target.precision.inverse();
  EXPECT_LE((adaptive.final_adapt.cov - C).norm(), 0.1 * C.norm());
}

TEST(Chain, InvalidProposalsKeepTheState) {
  const TruncatedNormal target;
  AdaptState s = AdaptState::init(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), 0.5, frozen());
  ChainState st = ChainState::start(target, Eigen::VectorXd::Constant(1, 0.5));
  const ChainState before = st;
  const StepResult r = mala_step_with(st, s, target, Eigen::VectorXd::Constant(1, 5.0), std::log(0.5));
  EXPECT_EQ(r.outcome, StepOutcome::invalid);
  EXPECT_EQ(r.accept_prob, 0.0);
  EXPECT_EQ(st.m, before.m);
  EXPECT_EQ(st.value, before.value);
  EXPECT_EQ(st.rejected_invalid, 1);
  EXPECT_EQ(st.steps, 1);
  EXPECT_THROW(ChainState::start(target, Eigen::VectorXd::Constant(1, 2.0)), InvalidArgument);
}

TEST(Chain, SamplesTruncatedNormal) {
  const TruncatedNormal target;
  MalaSchedule sched;
  sched.burn_in = 2000;
  sched.max_samples = 200000;
  sched.check_interval = 200000;
  std::mt19937_64 rng(88);
  const ChainOutput out =
      run_chain(Eigen::VectorXd::Zero(1), AdaptState::init(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), 1.0),
                target, sched, rng);
  const double phi1 = std::exp(-0.5) / std::sqrt(2.0 * std::numbers::pi);
  const double Phi1 = 0.5 * std::erfc(-1.0 / std::sqrt(2.0));
  const double expect = -phi1 / Phi1;
  EXPECT_GT(out.rejected_invalid, 0);
  EXPECT_LT(out.samples.col(0).maxCoeff(), 1.0);
  EXPECT_LE(std::abs(out.mean()[0] - expect), 4.0 * out.mcse[0]);
}

TEST(Chain, NonFiniteProposalsAreRejected) {
  const PoisonedNormal target;
  AdaptState s = AdaptState::init(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), 0.5, frozen());
  ChainState st = ChainState::start(target, Eigen::VectorXd::Zero(1));
  const StepResult r = mala_step_with(st, s, target, Eigen::VectorXd::Constant(1, 3.0), std::log(0.5));
  EXPECT_EQ(r.outcome, StepOutcome::nonfinite);
  EXPECT_EQ(st.rejected_nonfinite, 1);
  EXPECT_EQ(st.m[0], 0.0);
}

TEST(Chain, StopsAtCheckWhenRuleHolds) {
  const GaussianTarget target = gaussian_2d();
  MalaSchedule sched;
  sched.burn_in = 1000;
  sched.check_interval = 1000;
  std::mt19937_64 rng(89);
  std::int64_t callbacks = 0;
  const ChainOutput out = run_chain(target.mean, AdaptState::init(target.precision.inverse(), target.mean, 0.8), target,
                                    sched, rng, [&](const Eigen::VectorXd&, double, bool) { ++callbacks; });
  ASSERT_TRUE(out.converged);
  EXPECT_TRUE(out.mcse_ready);
  EXPECT_EQ(out.samples.rows() % 1000, 0);
  EXPECT_EQ(callbacks, out.samples.rows());
  EXPECT_EQ(out.total_steps, out.samples.rows() + 1000);
  EXPECT_LT(out.halfwidth_ratio.maxCoeff(), 0.1);
  EXPECT_EQ(out.stopping_checks, out.samples.rows() / 1000);
  EXPECT_EQ(out.values.size(), static_cast<std::size_t>(out.samples.rows()));

  MalaSchedule capped = sched;
  capped.max_samples = 150;
  capped.check_interval = 100;
  const ChainOutput short_run =
      run_chain(target.mean, AdaptState::init(target.precision.inverse(), target.mean, 0.8), target, capped, rng);
  EXPECT_FALSE(short_run.converged);
  EXPECT_EQ(short_run.samples.rows(), 150);
  capped.check_interval = 0;
  EXPECT_THROW(run_chain(target.mean, AdaptState::init(target.precision.inverse(), target.mean, 0.8), target, capped, rng),
               InvalidArgument);
}

TEST(Chain, DefaultInitialStep) {
  EXPECT_NEAR(default_initial_tau(93), 0.5 * 1.65 * 1.65 / std::cbrt(93.0), 1e-15);
  EXPECT_GT(default_initial_tau(1), default_initial_tau(100));
}
