#pragma once

#include <cmath>
#include <concepts>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "robinshape/error.hpp"
#include "robinshape/inverse_problem.hpp"

namespace robinshape {

/// A posterior potential that can be linearized for Gauss-Newton.
/// `try_potential` returns nullopt at rejected points (invalid shapes).
template <class P>
concept GaussNewtonModel = requires(const P& model, const Eigen::VectorXd& m) {
  { model.try_potential(m) } -> std::same_as<std::optional<double>>;
  { model.gauss_newton_system(m) } -> std::same_as<GaussNewtonSystem>;
};

/// Linear forward map with Gaussian noise and prior,
///   J(m) = 1/2 |y - G m|^2_{W_e} + 1/2 |m - m*|^2_{P}.
/// Used as a frozen-Jacobian surrogate.
struct LinearGaussianModel {
  Eigen::MatrixXd G;
  Eigen::VectorXd y;
  Eigen::MatrixXd noise_precision;
  Eigen::VectorXd prior_mean;
  Eigen::MatrixXd prior_precision;

  [[nodiscard]] double value(const Eigen::VectorXd& m) const {
    const Eigen::VectorXd r = y - G * m;
    const Eigen::VectorXd d = m - prior_mean;
    return 0.5 * r.dot(noise_precision * r) + 0.5 * d.dot(prior_precision * d);
  }

  [[nodiscard]] std::optional<double> try_potential(const Eigen::VectorXd& m) const { return value(m); }

  [[nodiscard]] GaussNewtonSystem gauss_newton_system(const Eigen::VectorXd& m) const {
    GaussNewtonSystem out;
    out.value = value(m);
    out.gradient = -G.transpose() * (noise_precision * (y - G * m)) + prior_precision * (m - prior_mean);
    out.hessian = G.transpose() * noise_precision * G + prior_precision;
    return out;
  }
};

struct GaussNewtonOptions {
  int max_iterations = 100;
  double gradient_reduction = 1e5;   // stop when |g| <= |g0| / gradient_reduction
  double absolute_gradient = 1e-10;  // or when |g| <= this
  double c1 = 1e-4;                  // Armijo sufficient decrease
  double c2 = 0.9;                   // curvature constant, used only if curvature_check
  bool curvature_check = false;
  double backtrack = 0.5;
  int max_backtracks = 40;
};

struct GaussNewtonReport {
  std::vector<Eigen::VectorXd> iterates;
  std::vector<double> values;
  std::vector<double> gradient_norms;
  std::vector<double> step_sizes;  // accepted step lengths, one per iteration
  int iterations = 0;
  int rejected_trials = 0;         // trial points with invalid shape
  bool converged = false;
  std::string termination;
};

/// Gauss-Newton with backtracking Armijo line search. Steps solve
/// (G^T W G + P) d = -grad J.
template <GaussNewtonModel Model>
std::pair<Eigen::VectorXd, GaussNewtonReport> gauss_newton(const Model& model, Eigen::VectorXd m,
                                                           const GaussNewtonOptions& opts = {}) {
  GaussNewtonReport report;
  GaussNewtonSystem sys = model.gauss_newton_system(m);
  const double g0 = sys.gradient.norm();
  const double target = std::max(g0 / opts.gradient_reduction, opts.absolute_gradient);
  report.iterates.push_back(m);
  report.values.push_back(sys.value);
  report.gradient_norms.push_back(g0);

  while (true) {
    if (sys.gradient.norm() <= target) {
      report.converged = true;
      report.termination = "gradient reduction reached";
      break;
    }
    if (report.iterations >= opts.max_iterations) {
      report.termination = "iteration cap";
      break;
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(sys.hessian);
    if (llt.info() != Eigen::Success) throw SolverError("Gauss-Newton Hessian is not SPD");
    const Eigen::VectorXd step = llt.solve(-sys.gradient);
    const double slope = sys.gradient.dot(step);

    double t = 1.0;
    bool accepted = false;
    std::optional<GaussNewtonSystem> next;
    for (int b = 0; b <= opts.max_backtracks; ++b, t *= opts.backtrack) {
      const Eigen::VectorXd trial = m + t * step;
      const std::optional<double> value = model.try_potential(trial);
      if (!value) {
        ++report.rejected_trials;
        continue;
      }
      if (*value > sys.value + opts.c1 * t * slope) continue;
      if (opts.curvature_check) {
        GaussNewtonSystem s = model.gauss_newton_system(trial);
        if (s.gradient.dot(step) < opts.c2 * slope) continue;
        next = std::move(s);
      }
      m = trial;
      accepted = true;
      break;
    }
    if (!accepted) {
      report.termination = "line-search failure";
      break;
    }
    sys = next ? std::move(*next) : model.gauss_newton_system(m);
    ++report.iterations;
    report.iterates.push_back(m);
    report.values.push_back(sys.value);
    report.gradient_norms.push_back(sys.gradient.norm());
    report.step_sizes.push_back(t);
  }
  return {m, report};
}

/// Gaussian approximation N(map, H^-1) with H the Gauss-Newton Hessian.
struct LaplaceApproximation {
  Eigen::VectorXd mean;
  Eigen::MatrixXd hessian;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd covariance_factor;  // lower L with L L^T = covariance

  [[nodiscard]] Eigen::VectorXd marginal_std() const { return covariance.diagonal().cwiseSqrt(); }
};

inline LaplaceApproximation laplace_from_hessian(Eigen::VectorXd map, Eigen::MatrixXd hessian) {
  LaplaceApproximation out;
  out.mean = std::move(map);
  out.hessian = std::move(hessian);
  const Eigen::LLT<Eigen::MatrixXd> llt(out.hessian);
  if (llt.info() != Eigen::Success) throw SolverError("Gauss-Newton Hessian at the MAP is not SPD");
  const auto n = out.hessian.rows();
  out.covariance = llt.solve(Eigen::MatrixXd::Identity(n, n));
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  const Eigen::LLT<Eigen::MatrixXd> cov_llt(out.covariance);
  if (cov_llt.info() != Eigen::Success) throw SolverError("Laplace covariance is not SPD");
  out.covariance_factor = cov_llt.matrixL();
  return out;
}

template <GaussNewtonModel Model>
LaplaceApproximation laplace(const Model& model, const Eigen::VectorXd& map) {
  return laplace_from_hessian(map, model.gauss_newton_system(map).hessian);
}

}  // namespace robinshape
