#pragma once

// Shared helpers for the unit tests and the acceptance binary.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "robinshape/robinshape.hpp"

namespace robinshape::testing {

/// Random Fourier shape with 1/n coefficient decay and min f > `min_f`.
inline FourierShape random_shape(std::mt19937_64& rng, int p, double L, double H, double scale = 0.15,
                                 double min_f = 0.1) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    Eigen::VectorXd a(2 * p + 1);
    a[0] = scale * u(rng);
    for (int n = 1; n <= p; ++n) {
      a[2 * n - 1] = scale * u(rng) / n;
      a[2 * n] = scale * u(rng) / n;
    }
    FourierShape s(a, L, H);
    if (s.sampled_min() > min_f) return s;
  }
}

/// Bottom-edge observations of the untransformed problem solved on the
/// deformed mesh whose row j sits at x2 = H f(x1) j / ny. Unit isotropic
/// conductivity, Robin weight exp(beta_h) on the physical top edges.
template <HeightProfile P>
Eigen::VectorXd direct_deformed_observations(const SlabMesh& reference, const P& shape, const Eigen::VectorXd& beta,
                                             int n_loads, const std::vector<double>& sensors) {
  const SlabMesh phys = map_nodes(reference, [&](const Point& x) { return Point(x.x(), x.y() * shape.eval(x.x()).f); });
  const MeshQuadrature q = MeshQuadrature::build(phys);
  const auto trips = form_triplets(
      q, [](std::size_t, int, const Point&) -> Matrix2 { return Matrix2::Identity(); },
      [&](std::size_t e, int k, const Point&) {
        const EdgeQuad& eq = q.top[e];
        const double la = eq.lambda_a[k];
        return std::exp(la * beta[eq.trace_a] + (1.0 - la) * beta[eq.trace_b]);
      });
  const AssembledSystem sys(phys, trips);
  return observe(solve_all(sys, neumann_loads(phys, q, n_loads)), sensors).y;
}

/// Bottom-edge observations of the transformed problem on the reference mesh.
template <HeightProfile P>
Eigen::VectorXd transformed_observations(const SlabMesh& reference, const P& shape, const Eigen::VectorXd& beta,
                                         int n_loads, const std::vector<double>& sensors) {
  return observe(solve_all(assemble(reference, shape, beta), n_loads), sensors).y;
}

struct InvarianceStudy {
  std::vector<int> nx;
  std::vector<double> discrepancy;
  std::vector<double> order;
};

/// Relative L2 discrepancy between the two solves for ny = nx / 8.
template <HeightProfile P>
InvarianceStudy invariance_study(const P& shape, const std::vector<int>& nxs, int n_loads = 8) {
  InvarianceStudy out;
  const auto sensors = default_sensors(32, shape.length());
  for (int nx : nxs) {
    const SlabMesh mesh = build_slab_mesh(shape.length(), shape.height(), nx, std::max(1, nx / 8));
    const TraceMesh tr = trace_of_top(mesh);
    Eigen::VectorXd beta(static_cast<Eigen::Index>(tr.size()));
    for (std::size_t k = 0; k < tr.size(); ++k) {
      beta[static_cast<Eigen::Index>(k)] = 1.0 + std::sin(2.0 * std::numbers::pi * tr.s[k] / shape.length());
    }
    const Eigen::VectorXd y1 = transformed_observations(mesh, shape, beta, n_loads, sensors);
    const Eigen::VectorXd y2 = direct_deformed_observations(mesh, shape, beta, n_loads, sensors);
    out.nx.push_back(nx);
    out.discrepancy.push_back((y1 - y2).norm() / y2.norm());
  }
  for (std::size_t i = 1; i < out.discrepancy.size(); ++i) {
    out.order.push_back(std::log(out.discrepancy[i - 1] / out.discrepancy[i]) /
                        std::log(static_cast<double>(out.nx[i]) / out.nx[i - 1]));
  }
  return out;
}

/// Inversion-mesh problem with the default priors and 1% noisy data from
/// the parameter vector `truth` (prior mean when empty).
inline InverseProblem desk_problem(std::mt19937_64& rng, Eigen::VectorXd truth = {}, double noise_percent = 1.0) {
  InverseProblem::Setup s;
  s.mesh = build_slab_mesh(1.0, 0.05, 77, 7);
  const TraceMesh tr = trace_of_top(s.mesh);
  s.p = 7;
  s.alpha_prior = build_alpha_prior(7, 0.01, -1.0);
  s.beta_prior = build_beta_prior(tr, 50.0, 10.0);
  s.sensors = default_sensors(32, 1.0);
  s.n_loads = 8;
  s.data = Eigen::VectorXd::Zero(256);
  const InverseProblem clean(s);
  if (truth.size() == 0) truth = clean.prior_mean();
  const Eigen::VectorXd y = clean.predict(truth);
  s.noise_std = std::max(noise_percent / 100.0 * (y.maxCoeff() - y.minCoeff()), 1e-12);
  s.data = y + (noise_percent > 0.0 ? s.noise_std : 0.0) * standard_normal(y.size(), rng);
  return InverseProblem(std::move(s));
}

/// Valid parameter point with alpha drawn from the prior and beta around `beta0`.
inline Eigen::VectorXd random_parameters(const InverseProblem& ip, std::mt19937_64& rng, double beta0 = 1.0,
                                         double beta_spread = 0.5) {
  for (;;) {
    Eigen::VectorXd m(ip.size());
    m.head(ip.n_alpha()) = ip.alpha_prior().sample(rng);
    m.tail(ip.n_beta()) = (beta0 + beta_spread * standard_normal(ip.n_beta(), rng).array()).matrix();
    if (ip.shape_of(m).sampled_min() > 0.2) return m;
  }
}

struct FiniteDifferenceSweep {
  std::vector<double> steps;
  std::vector<double> error;  // |fd - g| / |g| per step
  double best = INFINITY;
};

/// Central differences of the potential in coordinate i over `steps`.
inline FiniteDifferenceSweep fd_sweep(const InverseProblem& ip, const Eigen::VectorXd& m, double g, Eigen::Index i,
                                      const std::vector<double>& steps) {
  FiniteDifferenceSweep out;
  out.steps = steps;
  for (double h : steps) {
    Eigen::VectorXd mp = m, mm = m;
    mp[i] += h;
    mm[i] -= h;
    const double fd = (ip.potential(mp).value - ip.potential(mm).value) / (2.0 * h);
    out.error.push_back(std::abs(fd - g) / std::abs(g));
    out.best = std::min(out.best, out.error.back());
  }
  return out;
}

}  // namespace robinshape::testing
