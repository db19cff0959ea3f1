#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "robinshape/error.hpp"
#include "robinshape/fem.hpp"
#include "robinshape/geometry.hpp"
#include "robinshape/mesh.hpp"
#include "robinshape/priors.hpp"

namespace robinshape {

/// Value and GN quantities of the posterior potential at one point.
struct GaussNewtonSystem {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;  // G^T Gamma_e^-1 G + Gamma_m^-1
};

/// Potential and gradient, as consumed by the Langevin sampler.
struct TargetEvaluation {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

struct PotentialEvaluation {
  double value = 0.0;   // misfit + prior
  double misfit = 0.0;
  double prior = 0.0;
  ForwardState state;
  Eigen::VectorXd predicted;  // B u, load-major
  Eigen::VectorXd residual;   // y - B u
  std::vector<Eigen::VectorXd> adjoints;
  std::optional<Eigen::VectorXd> gradient;
};

/// Joint boundary-shape / Robin-coefficient inverse problem on a fixed
/// reference slab. Parameters are m = [alpha (2p+1) | beta (trace nodes)].
///
/// All evaluation methods are const and keep no mutable state, so one
/// instance may be shared by concurrent evaluations.
class InverseProblem {
 public:
  struct Setup {
    SlabMesh mesh;
    int p = 7;
    AlphaPrior alpha_prior;
    BetaPrior beta_prior;
    std::vector<double> sensors;
    int n_loads = 8;
    Eigen::VectorXd data;  // load-major
    double noise_std = 1.0;
    std::vector<double> noise_std_per_load;  // overrides noise_std when non-empty
    double sigma = 1.0;
  };

  explicit InverseProblem(Setup setup)
      : mesh_(std::make_shared<const SlabMesh>(std::move(setup.mesh))),
        p_(setup.p),
        alpha_prior_(std::move(setup.alpha_prior)),
        beta_prior_(std::move(setup.beta_prior)),
        n_loads_(setup.n_loads),
        data_(std::move(setup.data)),
        noise_std_(setup.noise_std),
        sigma_(setup.sigma) {
    if (!(noise_std_ > 0.0)) throw InvalidArgument("noise standard deviation must be positive");
    quad_ = std::make_shared<const MeshQuadrature>(MeshQuadrature::build(*mesh_));
    trace_ = trace_of_top(*mesh_);
    observation_ = ObservationOperator(*mesh_, std::move(setup.sensors));
    if (alpha_prior_.size() != 2 * p_ + 1) throw InvalidArgument("alpha prior size does not match p");
    if (beta_prior_.size() != static_cast<Eigen::Index>(trace_.size())) {
      throw InvalidArgument("beta prior size does not match the top trace");
    }
    if (data_.size() != static_cast<Eigen::Index>(n_loads_ * observation_.size())) {
      throw InvalidArgument("data length does not match loads x sensors");
    }
    const auto q = static_cast<Eigen::Index>(observation_.size());
    noise_weight_.resize(data_.size());
    if (setup.noise_std_per_load.empty()) {
      noise_weight_.setConstant(1.0 / (noise_std_ * noise_std_));
    } else {
      if (setup.noise_std_per_load.size() != static_cast<std::size_t>(n_loads_)) {
        throw InvalidArgument("need one noise level per load");
      }
      for (int k = 0; k < n_loads_; ++k) {
        const double sd = setup.noise_std_per_load[static_cast<std::size_t>(k)];
        if (!(sd > 0.0)) throw InvalidArgument("noise standard deviation must be positive");
        noise_weight_.segment(k * q, q).setConstant(1.0 / (sd * sd));
      }
    }
    loads_ = neumann_loads(*mesh_, *quad_, n_loads_);
    edges_of_trace_.resize(trace_.size());
    for (std::size_t e = 0; e < quad_->top.size(); ++e) {
      edges_of_trace_[static_cast<std::size_t>(quad_->top[e].trace_a)].push_back(e);
      edges_of_trace_[static_cast<std::size_t>(quad_->top[e].trace_b)].push_back(e);
    }
    precompute_basis();
  }

  [[nodiscard]] Eigen::Index n_alpha() const { return 2 * p_ + 1; }
  [[nodiscard]] Eigen::Index n_beta() const { return static_cast<Eigen::Index>(trace_.size()); }
  [[nodiscard]] Eigen::Index size() const { return n_alpha() + n_beta(); }
  [[nodiscard]] int p() const { return p_; }
  [[nodiscard]] int n_loads() const { return n_loads_; }
  [[nodiscard]] const SlabMesh& mesh() const { return *mesh_; }
  [[nodiscard]] const TraceMesh& trace() const { return trace_; }
  [[nodiscard]] const ObservationOperator& observation() const { return observation_; }
  [[nodiscard]] const AlphaPrior& alpha_prior() const { return alpha_prior_; }
  [[nodiscard]] const BetaPrior& beta_prior() const { return beta_prior_; }
  [[nodiscard]] const Eigen::VectorXd& data() const { return data_; }
  [[nodiscard]] double noise_std() const { return noise_std_; }
  /// Diagonal of Gamma_e^-1, load-major.
  [[nodiscard]] const Eigen::VectorXd& noise_weight() const { return noise_weight_; }

  [[nodiscard]] Eigen::VectorXd alpha_of(const Eigen::VectorXd& m) const { return m.head(n_alpha()); }
  [[nodiscard]] Eigen::VectorXd beta_of(const Eigen::VectorXd& m) const { return m.tail(n_beta()); }
  [[nodiscard]] FourierShape shape_of(const Eigen::VectorXd& m) const {
    return FourierShape(alpha_of(m), mesh_->L, mesh_->H);
  }

  [[nodiscard]] Eigen::VectorXd prior_mean() const {
    Eigen::VectorXd out(size());
    out << alpha_prior_.mean, beta_prior_.mean;
    return out;
  }

  [[nodiscard]] Eigen::MatrixXd prior_precision() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(size(), size());
    out.topLeftCorner(n_alpha(), n_alpha()) = alpha_prior_.precision();
    out.bottomRightCorner(n_beta(), n_beta()) = beta_prior_.precision;
    return out;
  }

  [[nodiscard]] Eigen::MatrixXd prior_covariance() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(size(), size());
    out.topLeftCorner(n_alpha(), n_alpha()) = alpha_prior_.covariance();
    out.bottomRightCorner(n_beta(), n_beta()) = beta_prior_.covariance();
    return out;
  }

  [[nodiscard]] double prior_value(const Eigen::VectorXd& m) const {
    return prior_potential(alpha_prior_, beta_prior_, alpha_of(m), beta_of(m));
  }

  [[nodiscard]] Eigen::VectorXd prior_gradient(const Eigen::VectorXd& m) const {
    Eigen::VectorXd g(size());
    g << alpha_prior_.gradient(alpha_of(m)), beta_prior_.gradient(beta_of(m));
    return g;
  }

  /// Assembles and factorizes the transformed system at m. Throws
  /// InvalidShape when f is not strictly positive.
  [[nodiscard]] AssembledSystem system(const Eigen::VectorXd& m) const {
    check_size(m);
    const Coefficients c = coefficients(m);
    const Eigen::VectorXd beta = beta_of(m);
    auto trips = form_triplets(
        *quad_,
        [&](std::size_t t, int k, const Point& x) -> Matrix2 {
          const std::size_t i = 3 * t + static_cast<std::size_t>(k);
          return sigma_ * detail::pushforward_from(c.f_vol[i], c.df_vol[i], x.y());
        },
        [&](std::size_t e, int k, const Point&) { return robin_weight(c, beta, e, k); });
    return AssembledSystem(*mesh_, trips);
  }

  [[nodiscard]] ForwardState forward(const Eigen::VectorXd& m) const { return solve_all(system(m), loads_); }

  /// Parameter-to-observable map B u(m).
  [[nodiscard]] Eigen::VectorXd predict(const Eigen::VectorXd& m) const { return stacked_observation(forward(m)); }

  [[nodiscard]] PotentialEvaluation potential(const Eigen::VectorXd& m, bool with_gradient = false) const {
    PotentialEvaluation ev;
    ev.state = forward(m);
    ev.predicted = stacked_observation(ev.state);
    ev.residual = data_ - ev.predicted;
    ev.misfit = 0.5 * ev.residual.dot(noise_weight_.cwiseProduct(ev.residual));
    ev.prior = prior_value(m);
    ev.value = ev.misfit + ev.prior;
    if (with_gradient) {
      ev.adjoints = adjoint_solutions(ev.state, ev.residual);
      ev.gradient = prior_gradient(m) + misfit_gradient(m, ev.state, ev.adjoints);
    }
    return ev;
  }

  [[nodiscard]] Eigen::VectorXd gradient_adjoint(const Eigen::VectorXd& m) const { return *potential(m, true).gradient; }

  /// Adjoint fields v_k solving A v_k = B^T Gamma_e^-1 (y_k - B u_k); the
  /// forward factorization is reused since the form is symmetric.
  [[nodiscard]] std::vector<Eigen::VectorXd> adjoint_solutions(const ForwardState& state,
                                                              const Eigen::VectorXd& residual) const {
    std::vector<Eigen::VectorXd> out;
    const auto q = static_cast<Eigen::Index>(observation_.size());
    for (int k = 0; k < n_loads_; ++k) {
      const Eigen::VectorXd wr = noise_weight_.segment(k * q, q).cwiseProduct(residual.segment(k * q, q));
      out.push_back(state.system.solve(observation_.apply_transpose(wr)));
    }
    return out;
  }

  /// Misfit part of the gradient by contracting forward and adjoint fields
  /// against the parameter derivatives of the transformed coefficients.
  [[nodiscard]] Eigen::VectorXd misfit_gradient(const Eigen::VectorXd& m, const ForwardState& state,
                                                const std::vector<Eigen::VectorXd>& adjoints) const {
    const Coefficients c = coefficients(m);
    const Eigen::VectorXd beta = beta_of(m);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(size());
    const Eigen::Index na = n_alpha();

    for (std::size_t t = 0; t < quad_->triangles.size(); ++t) {
      const TriangleQuad& tq = quad_->triangles[t];
      Matrix2 s = Matrix2::Zero();  // sum_k sym(grad u_k grad v_k^T)
      for (int k = 0; k < n_loads_; ++k) {
        const Eigen::Vector3d ue(state.solutions[k][tq.nodes[0]], state.solutions[k][tq.nodes[1]],
                                 state.solutions[k][tq.nodes[2]]);
        const Eigen::Vector3d ve(adjoints[k][tq.nodes[0]], adjoints[k][tq.nodes[1]], adjoints[k][tq.nodes[2]]);
        const Eigen::Vector2d gu = tq.grad * ue;
        const Eigen::Vector2d gv = tq.grad * ve;
        s += 0.5 * (gu * gv.transpose() + gv * gu.transpose());
      }
      const double w = sigma_ * tq.area * TriangleQuad::weight_fraction;
      for (int q = 0; q < 3; ++q) {
        const auto row = static_cast<Eigen::Index>(3 * t + static_cast<std::size_t>(q));
        const double f = c.f_vol[row];
        const double df = c.df_vol[row];
        const double x2 = tq.points[q].y();
        for (Eigen::Index i = 0; i < na; ++i) {
          const Matrix2 kappa =
              detail::pushforward_derivative_from(f, df, vol_basis_(row, i), vol_slope_(row, i), x2);
          g[i] += w * (kappa.array() * s.array()).sum();
        }
      }
    }

    for (std::size_t e = 0; e < quad_->top.size(); ++e) {
      const EdgeQuad& eq = quad_->top[e];
      for (int q = 0; q < 2; ++q) {
        const double la = eq.lambda_a[q];
        const double lb = 1.0 - la;
        double uv = 0.0;
        for (int k = 0; k < n_loads_; ++k) {
          const double uq = la * state.solutions[k][eq.a] + lb * state.solutions[k][eq.b];
          const double vq = la * adjoints[k][eq.a] + lb * adjoints[k][eq.b];
          uv += uq * vq;
        }
        const auto row = static_cast<Eigen::Index>(2 * e + static_cast<std::size_t>(q));
        const double w = eq.length * EdgeQuad::weight_fraction * uv;
        const double eb = std::exp(la * beta[eq.trace_a] + lb * beta[eq.trace_b]);
        const double df = c.df_top[row];
        for (Eigen::Index i = 0; i < na; ++i) {
          g[i] += w * eb * detail::admittance_derivative_from(df, top_slope_(row, i), mesh_->H);
        }
        const double robin = w * eb * detail::admittance_from(df, mesh_->H);
        g[na + eq.trace_a] += robin * la;
        g[na + eq.trace_b] += robin * lb;
      }
    }
    return g;
  }

  /// Sensitivity-method Jacobian d(B u)/dm, rows load-major, columns
  /// [alpha | beta]. One factorization, n * loads triangular solves.
  [[nodiscard]] Eigen::MatrixXd jacobian_sensitivity(const Eigen::VectorXd& m) const {
    return jacobian_from(m, forward(m));
  }

  [[nodiscard]] Eigen::MatrixXd jacobian_from(const Eigen::VectorXd& m, const ForwardState& state) const {
    const Coefficients c = coefficients(m);
    const Eigen::VectorXd beta = beta_of(m);
    const auto q = static_cast<Eigen::Index>(observation_.size());
    Eigen::MatrixXd G(n_loads_ * q, size());
    for (Eigen::Index i = 0; i < n_alpha(); ++i) {
      for (int k = 0; k < n_loads_; ++k) {
        const Eigen::VectorXd du = apply_form(
            *quad_, state.solutions[k],
            [&](std::size_t t, int kq, const Point& x) -> Matrix2 {
              const auto row = static_cast<Eigen::Index>(3 * t + static_cast<std::size_t>(kq));
              return sigma_ * detail::pushforward_derivative_from(c.f_vol[row], c.df_vol[row], vol_basis_(row, i),
                                                                  vol_slope_(row, i), x.y());
            },
            [&](std::size_t e, int kq, const Point&) {
              const EdgeQuad& eq = quad_->top[e];
              const auto row = static_cast<Eigen::Index>(2 * e + static_cast<std::size_t>(kq));
              const double la = eq.lambda_a[kq];
              const double eb = std::exp(la * beta[eq.trace_a] + (1.0 - la) * beta[eq.trace_b]);
              return eb * detail::admittance_derivative_from(c.df_top[row], top_slope_(row, i), mesh_->H);
            });
        G.block(k * q, i, q, 1) = -observation_.apply(state.system.solve(du));
      }
    }
    for (Eigen::Index j = 0; j < n_beta(); ++j) {
      for (int k = 0; k < n_loads_; ++k) {
        const Eigen::VectorXd du = robin_direction_action(c, beta, static_cast<int>(j), state.solutions[k]);
        G.block(k * q, n_alpha() + j, q, 1) = -observation_.apply(state.system.solve(du));
      }
    }
    return G;
  }

  // -- interfaces used by the optimizer and the sampler ---------------------

  [[nodiscard]] std::optional<double> try_potential(const Eigen::VectorXd& m) const {
    if (!shape_of(m).is_valid()) return std::nullopt;
    try {
      return potential(m).value;
    } catch (const InvalidShape&) {
      return std::nullopt;
    }
  }

  [[nodiscard]] GaussNewtonSystem gauss_newton_system(const Eigen::VectorXd& m) const {
    const PotentialEvaluation ev = potential(m);
    const Eigen::MatrixXd G = jacobian_from(m, ev.state);
    GaussNewtonSystem out;
    out.value = ev.value;
    out.gradient = prior_gradient(m) - G.transpose() * noise_weight_.cwiseProduct(ev.residual);
    out.hessian = G.transpose() * noise_weight_.asDiagonal() * G + prior_precision();
    return out;
  }

  [[nodiscard]] std::optional<TargetEvaluation> evaluate(const Eigen::VectorXd& m) const {
    if (!shape_of(m).is_valid()) return std::nullopt;
    try {
      PotentialEvaluation ev = potential(m, true);
      return TargetEvaluation{ev.value, std::move(*ev.gradient)};
    } catch (const InvalidShape&) {
      return std::nullopt;
    }
  }

 private:
  struct Coefficients {
    Eigen::VectorXd f_vol, df_vol, df_top;
  };

  void check_size(const Eigen::VectorXd& m) const {
    if (m.size() != size()) throw InvalidArgument("parameter vector has the wrong length");
  }

  void precompute_basis() {
    const FourierShape probe = FourierShape::flat(p_, mesh_->L, mesh_->H);
    const auto nv = static_cast<Eigen::Index>(3 * quad_->triangles.size());
    const auto nt = static_cast<Eigen::Index>(2 * quad_->top.size());
    vol_basis_.resize(nv, n_alpha());
    vol_slope_.resize(nv, n_alpha());
    top_basis_.resize(nt, n_alpha());
    top_slope_.resize(nt, n_alpha());
    Eigen::VectorXd b(n_alpha()), s(n_alpha());
    for (std::size_t t = 0; t < quad_->triangles.size(); ++t) {
      for (int k = 0; k < 3; ++k) {
        probe.basis_all(quad_->triangles[t].points[k].x(), b, s);
        const auto row = static_cast<Eigen::Index>(3 * t + static_cast<std::size_t>(k));
        vol_basis_.row(row) = b.transpose();
        vol_slope_.row(row) = s.transpose();
      }
    }
    for (std::size_t e = 0; e < quad_->top.size(); ++e) {
      for (int k = 0; k < 2; ++k) {
        probe.basis_all(quad_->top[e].points[k].x(), b, s);
        const auto row = static_cast<Eigen::Index>(2 * e + static_cast<std::size_t>(k));
        top_basis_.row(row) = b.transpose();
        top_slope_.row(row) = s.transpose();
      }
    }
  }

  [[nodiscard]] Coefficients coefficients(const Eigen::VectorXd& m) const {
    const FourierShape shape = shape_of(m);
    shape.require_valid();
    const Eigen::VectorXd alpha = alpha_of(m);
    Coefficients c;
    c.f_vol = (vol_basis_ * alpha).array() + 1.0;
    c.df_vol = vol_slope_ * alpha;
    c.df_top = top_slope_ * alpha;
    if (c.f_vol.minCoeff() <= 0.0) throw InvalidShape("boundary height profile is not strictly positive");
    return c;
  }

  [[nodiscard]] double robin_weight(const Coefficients& c, const Eigen::VectorXd& beta, std::size_t e, int k) const {
    const EdgeQuad& eq = quad_->top[e];
    const double la = eq.lambda_a[k];
    const double b = la * beta[eq.trace_a] + (1.0 - la) * beta[eq.trace_b];
    return std::exp(b) * detail::admittance_from(c.df_top[static_cast<Eigen::Index>(2 * e) + k], mesh_->H);
  }

  /// (dA/dbeta_j) u: top-edge mass weighted by exp(beta_h) phi_j times the
  /// arc-length factor.
  [[nodiscard]] Eigen::VectorXd robin_direction_action(const Coefficients& c, const Eigen::VectorXd& beta, int j,
                                                       const Eigen::VectorXd& u) const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(u.size());
    const auto touch = [&](std::size_t e) {
      const EdgeQuad& eq = quad_->top[e];
      for (int k = 0; k < 2; ++k) {
        const double la = eq.lambda_a[k];
        const double lb = 1.0 - la;
        const double phi_j = (eq.trace_a == j ? la : 0.0) + (eq.trace_b == j ? lb : 0.0);
        const double uq = la * u[eq.a] + lb * u[eq.b];
        const double w = eq.length * EdgeQuad::weight_fraction * robin_weight(c, beta, e, k) * phi_j * uq;
        y[eq.a] += w * la;
        y[eq.b] += w * lb;
      }
    };
    for (std::size_t e : edges_of_trace_[static_cast<std::size_t>(j)]) touch(e);
    return y;
  }

  [[nodiscard]] Eigen::VectorXd stacked_observation(const ForwardState& state) const {
    const auto q = static_cast<Eigen::Index>(observation_.size());
    Eigen::VectorXd out(n_loads_ * q);
    for (int k = 0; k < n_loads_; ++k) out.segment(k * q, q) = observation_.apply(state.solutions[k]);
    return out;
  }

  std::shared_ptr<const SlabMesh> mesh_;
  std::shared_ptr<const MeshQuadrature> quad_;
  TraceMesh trace_;
  ObservationOperator observation_;
  int p_;
  AlphaPrior alpha_prior_;
  BetaPrior beta_prior_;
  int n_loads_;
  Eigen::VectorXd data_;
  double noise_std_;
  Eigen::VectorXd noise_weight_;
  double sigma_;
  std::vector<Eigen::VectorXd> loads_;
  std::vector<std::vector<std::size_t>> edges_of_trace_;
  Eigen::MatrixXd vol_basis_, vol_slope_, top_basis_, top_slope_;
};

}  // namespace robinshape
