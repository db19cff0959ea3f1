#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "robinshape/diagnostics.hpp"
#include "robinshape/error.hpp"
#include "robinshape/inverse_problem.hpp"
#include "robinshape/priors.hpp"

namespace robinshape {

/// Something the sampler can evaluate: potential J and its gradient, or
/// nullopt where the parameter is outside the admissible set.
template <class T>
concept LangevinTarget = requires(const T& target, const Eigen::VectorXd& m) {
  { target.evaluate(m) } -> std::same_as<std::optional<TargetEvaluation>>;
};

/// J(m) = 1/2 (m - mean)^T P (m - mean).
struct GaussianTarget {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;

  [[nodiscard]] std::optional<TargetEvaluation> evaluate(const Eigen::VectorXd& m) const {
    const Eigen::VectorXd d = m - mean;
    Eigen::VectorXd g = precision * d;
    return TargetEvaluation{0.5 * d.dot(g), std::move(g)};
  }
};

struct ChainState {
  Eigen::VectorXd m;
  double value = 0.0;
  Eigen::VectorXd gradient;
  std::int64_t steps = 0;
  std::int64_t accepted = 0;
  std::int64_t rejected_invalid = 0;
  std::int64_t rejected_nonfinite = 0;

  template <LangevinTarget Target>
  static ChainState start(const Target& target, Eigen::VectorXd m0) {
    auto ev = target.evaluate(m0);
    if (!ev) throw InvalidArgument("chain start point is not admissible");
    if (!std::isfinite(ev->value) || !ev->gradient.allFinite()) throw SolverError("non-finite potential at chain start");
    ChainState s;
    s.m = std::move(m0);
    s.value = ev->value;
    s.gradient = std::move(ev->gradient);
    return s;
  }
};

struct AdaptSettings {
  bool enabled = true;
  double target_accept = 0.574;
  double step_exponent = 0.6;        // log tau weight t^-step_exponent
  double covariance_exponent = 1.0;  // covariance weight (t + offset)^-covariance_exponent
  double covariance_offset = 100.0;  // pseudo-sample count carried by A_init
  int refresh_interval = 100;        // refactor A every this many updates
  double regularization = 1e-10;     // eps = regularization * trace / n
};

struct AdaptState {
  AdaptSettings settings;
  Eigen::MatrixXd A;      // proposal covariance
  Eigen::MatrixXd chol;   // lower factor, chol chol^T = A; L = chol^-1
  double log_tau = 0.0;
  Eigen::VectorXd mean;   // running mean
  Eigen::MatrixXd cov;    // running covariance
  std::int64_t t = 0;     // adaptation updates so far
  std::int64_t regularization_events = 0;

  [[nodiscard]] double tau() const { return std::exp(log_tau); }
  [[nodiscard]] Eigen::Index size() const { return A.rows(); }

  static AdaptState init(const Eigen::MatrixXd& A_init, const Eigen::VectorXd& m_init, double tau,
                         AdaptSettings settings = {}) {
    if (A_init.rows() != A_init.cols() || A_init.rows() != m_init.size()) {
      throw InvalidArgument("proposal covariance does not match the parameter size");
    }
    if (!(tau > 0.0)) throw InvalidArgument("step size must be positive");
    AdaptState s;
    s.settings = settings;
    s.mean = m_init;
    s.cov = 0.5 * (A_init + A_init.transpose());
    s.log_tau = std::log(tau);
    s.set_proposal(s.cov);
    return s;
  }

  /// Installs C + eps I as the proposal covariance, raising eps until the
  /// Cholesky factorization succeeds.
  void set_proposal(const Eigen::MatrixXd& C) {
    const auto n = C.rows();
    double eps = settings.regularization * std::max(C.trace(), std::numeric_limits<double>::min()) /
                 static_cast<double>(n);
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::MatrixXd candidate = C;
      candidate.diagonal().array() += eps;
      Eigen::LLT<Eigen::MatrixXd> llt(candidate);
      if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0) {
        A = std::move(candidate);
        chol = llt.matrixL();
        return;
      }
      ++regularization_events;
      eps = eps > 0.0 ? eps * 10.0 : 1e-300;
    }
    throw SolverError("proposal covariance could not be regularized to SPD");
  }

  /// A grad, used by the drift.
  [[nodiscard]] Eigen::VectorXd precondition(const Eigen::VectorXd& g) const { return A * g; }

  /// |L x|^2 = x^T A^-1 x.
  [[nodiscard]] double inverse_norm2(const Eigen::VectorXd& x) const {
    return chol.triangularView<Eigen::Lower>().solve(x).squaredNorm();
  }
};

/// log q(m | m*) - log q(m* | m) for the Langevin proposal.
inline double log_proposal_ratio(const AdaptState& adapt, const Eigen::VectorXd& m, const Eigen::VectorXd& grad,
                                 const Eigen::VectorXd& m_star, const Eigen::VectorXd& grad_star) {
  const double tau = adapt.tau();
  const Eigen::VectorXd dm = m_star - m;
  const double backward = adapt.inverse_norm2(-dm + tau * adapt.precondition(grad_star));
  const double forward = adapt.inverse_norm2(dm + tau * adapt.precondition(grad));
  return -(backward - forward) / (4.0 * tau);
}

/// m - tau A grad + sqrt(2 tau) chol xi.
inline Eigen::VectorXd langevin_proposal(const AdaptState& adapt, const Eigen::VectorXd& m, const Eigen::VectorXd& grad,
                                         const Eigen::VectorXd& xi) {
  const double tau = adapt.tau();
  return m - tau * adapt.precondition(grad) + std::sqrt(2.0 * tau) * (adapt.chol * xi);
}

enum class StepOutcome { accepted, rejected, invalid, nonfinite };

struct StepResult {
  StepOutcome outcome = StepOutcome::rejected;
  double accept_prob = 0.0;
  double log_q_ratio = 0.0;
  Eigen::VectorXd proposal;
  [[nodiscard]] bool accepted() const { return outcome == StepOutcome::accepted; }
};

/// One step with externally supplied noise xi and uniform log u.
template <LangevinTarget Target>
StepResult mala_step_with(ChainState& state, const AdaptState& adapt, const Target& target, const Eigen::VectorXd& xi,
                          double log_u) {
  StepResult res;
  res.proposal = langevin_proposal(adapt, state.m, state.gradient, xi);
  ++state.steps;
  if (!res.proposal.allFinite()) {
    res.outcome = StepOutcome::nonfinite;
    ++state.rejected_nonfinite;
    return res;
  }
  std::optional<TargetEvaluation> ev = target.evaluate(res.proposal);
  if (!ev) {
    res.outcome = StepOutcome::invalid;
    ++state.rejected_invalid;
    return res;
  }
  if (!std::isfinite(ev->value) || !ev->gradient.allFinite()) {
    res.outcome = StepOutcome::nonfinite;
    ++state.rejected_nonfinite;
    return res;
  }
  res.log_q_ratio = log_proposal_ratio(adapt, state.m, state.gradient, res.proposal, ev->gradient);
  const double log_alpha = -ev->value + state.value + res.log_q_ratio;
  res.accept_prob = std::isnan(log_alpha) ? 0.0 : std::min(1.0, std::exp(log_alpha));
  if (log_u < log_alpha) {
    res.outcome = StepOutcome::accepted;
    state.m = res.proposal;
    state.value = ev->value;
    state.gradient = std::move(ev->gradient);
    ++state.accepted;
  } else {
    res.outcome = StepOutcome::rejected;
  }
  return res;
}

template <LangevinTarget Target, class Rng>
StepResult mala_step(ChainState& state, const AdaptState& adapt, const Target& target, Rng& rng) {
  const Eigen::VectorXd xi = standard_normal(state.m.size(), rng);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  return mala_step_with(state, adapt, target, xi, u > 0.0 ? std::log(u) : -std::numeric_limits<double>::infinity());
}

/// Recursive mean/covariance update and Robbins-Monro step on log tau.
inline void adapt(AdaptState& s, const Eigen::VectorXd& sample, double accept_prob) {
  if (!s.settings.enabled) return;
  ++s.t;
  const auto t = static_cast<double>(s.t);
  const double g_cov = std::pow(t + s.settings.covariance_offset, -s.settings.covariance_exponent);
  const double g_step = std::pow(t, -s.settings.step_exponent);
  const Eigen::VectorXd d = sample - s.mean;
  s.mean += g_cov * d;
  s.cov += g_cov * (d * d.transpose() - s.cov);
  s.log_tau += g_step * (accept_prob - s.settings.target_accept);
  if (s.settings.refresh_interval > 0 && s.t % s.settings.refresh_interval == 0) s.set_proposal(s.cov);
}

struct MalaSchedule {
  std::int64_t burn_in = 10000;
  std::int64_t check_interval = 5000;
  std::int64_t max_samples = 400000;   // recorded post-burn-in steps
  std::int64_t acceptance_window = 1000;
  bool adapt_after_burn_in = true;
  double stopping_threshold = 0.1;
  double confidence = 0.98;
};

struct ChainOutput {
  SampleMatrix samples;            // recorded steps x n
  std::vector<double> values;      // J per recorded step
  std::vector<std::uint8_t> accepted;
  std::vector<double> acceptance_trace;  // windowed rates over all steps
  std::vector<double> tau_trace;         // tau at the end of each window
  Eigen::VectorXd mcse;
  Eigen::VectorXd halfwidth;
  Eigen::VectorXd posterior_std;
  Eigen::VectorXd halfwidth_ratio;
  bool converged = false;
  bool mcse_ready = false;
  std::int64_t total_steps = 0;
  std::int64_t burn_in = 0;
  std::int64_t stopping_checks = 0;
  double post_burn_in_acceptance = 0.0;
  std::int64_t rejected_invalid = 0;
  std::int64_t rejected_nonfinite = 0;
  ChainState final_state;
  AdaptState final_adapt;

  [[nodiscard]] Eigen::VectorXd mean() const { return samples.colwise().mean().transpose(); }
};

using RecordCallback = std::function<void(const Eigen::VectorXd& m, double value, bool accepted)>;

/// Burn-in with adaptation, then recorded sampling until the MCSE rule
/// holds at a check or the sample cap is hit.
template <LangevinTarget Target, class Rng>
ChainOutput run_chain(const Eigen::VectorXd& m_init, AdaptState adapt_state, const Target& target,
                      const MalaSchedule& schedule, Rng& rng, const RecordCallback& on_record = {}) {
  if (schedule.check_interval < 1 || schedule.max_samples < 1 || schedule.burn_in < 0) {
    throw InvalidArgument("invalid MALA schedule");
  }
  ChainState state = ChainState::start(target, m_init);
  const Eigen::Index n = m_init.size();
  ChainOutput out;
  out.burn_in = schedule.burn_in;
  std::vector<double> buffer;
  buffer.reserve(static_cast<std::size_t>(std::min<std::int64_t>(schedule.max_samples, 200000) * n));

  std::int64_t window_accepts = 0, window_steps = 0, recorded_accepts = 0, recorded = 0;
  auto close_window = [&] {
    out.acceptance_trace.push_back(static_cast<double>(window_accepts) / static_cast<double>(window_steps));
    out.tau_trace.push_back(adapt_state.tau());
    window_accepts = 0;
    window_steps = 0;
  };

  const std::int64_t max_steps = schedule.burn_in + schedule.max_samples;
  for (std::int64_t step = 0; step < max_steps; ++step) {
    const bool burning = step < schedule.burn_in;
    const StepResult res = mala_step(state, adapt_state, target, rng);
    if (burning || schedule.adapt_after_burn_in) adapt(adapt_state, state.m, res.accept_prob);
    ++window_steps;
    if (res.accepted()) ++window_accepts;
    if (window_steps == schedule.acceptance_window) close_window();
    if (burning) continue;

    buffer.insert(buffer.end(), state.m.data(), state.m.data() + n);
    out.values.push_back(state.value);
    out.accepted.push_back(res.accepted() ? 1 : 0);
    if (res.accepted()) ++recorded_accepts;
    ++recorded;
    if (on_record) on_record(state.m, state.value, res.accepted());

    if (recorded % schedule.check_interval == 0 || recorded == schedule.max_samples) {
      ++out.stopping_checks;
      const Eigen::Map<const SampleMatrix> view(buffer.data(), recorded, n);
      const StoppingVerdict v = stopping_rule(view, schedule.stopping_threshold, schedule.confidence);
      if (v.converged) {
        out.converged = true;
        break;
      }
    }
  }
  if (window_steps > 0) close_window();

  out.samples = Eigen::Map<const SampleMatrix>(buffer.data(), recorded, n);
  out.total_steps = state.steps;
  out.post_burn_in_acceptance =
      recorded > 0 ? static_cast<double>(recorded_accepts) / static_cast<double>(recorded) : 0.0;
  out.rejected_invalid = state.rejected_invalid;
  out.rejected_nonfinite = state.rejected_nonfinite;
  if (const auto v = stopping_rule(out.samples, schedule.stopping_threshold, schedule.confidence); v.ready) {
    out.mcse_ready = true;
    out.mcse = v.batch->mcse;
    out.halfwidth = v.batch->halfwidth;
    out.posterior_std = v.posterior_std;
    out.halfwidth_ratio = v.ratio;
  } else if (recorded > 0) {
    out.posterior_std = sample_std(out.samples);
  }
  out.final_state = std::move(state);
  out.final_adapt = std::move(adapt_state);
  return out;
}

/// Default initial step: well-scaled preconditioned MALA in dimension d.
inline double default_initial_tau(Eigen::Index d) {
  return 0.5 * 1.65 * 1.65 * std::pow(static_cast<double>(d), -1.0 / 3.0);
}

}  // namespace robinshape
