#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "robinshape/error.hpp"
#include "robinshape/geometry.hpp"
#include "robinshape/mesh.hpp"

namespace robinshape {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// ---------------------------------------------------------------------------
// Quadrature data
//
// Volume terms use the 3-point rule with barycentric points (2/3, 1/6, 1/6)
// (exact for quadratics), edge terms the 2-point Gauss rule.

struct TriangleQuad {
  std::array<int, 3> nodes{};
  double area = 0.0;
  Eigen::Matrix<double, 2, 3> grad;  // columns: gradients of the three hat functions
  std::array<Point, 3> points;
  static constexpr double weight_fraction = 1.0 / 3.0;
};

struct EdgeQuad {
  int a = 0;
  int b = 0;
  double length = 0.0;
  std::array<Point, 2> points;
  std::array<double, 2> lambda_a{};  // hat function of node a at the points
  int trace_a = -1;                  // top edges only
  int trace_b = -1;
  static constexpr double weight_fraction = 0.5;
};

struct MeshQuadrature {
  std::vector<TriangleQuad> triangles;
  std::vector<EdgeQuad> top;
  std::vector<EdgeQuad> bottom;

  static MeshQuadrature build(const SlabMesh& mesh) {
    MeshQuadrature q;
    q.triangles.reserve(mesh.num_triangles());
    constexpr double big = 2.0 / 3.0;
    constexpr double small = 1.0 / 6.0;
    const std::array<std::array<double, 3>, 3> bary{{{big, small, small}, {small, big, small}, {small, small, big}}};
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
      TriangleQuad tq;
      tq.nodes = mesh.triangles[t];
      const Point& p0 = mesh.nodes[tq.nodes[0]];
      const Point& p1 = mesh.nodes[tq.nodes[1]];
      const Point& p2 = mesh.nodes[tq.nodes[2]];
      tq.area = mesh.signed_area(t);
      if (!(tq.area > 0.0)) throw InvalidMesh("degenerate or inverted triangle " + std::to_string(t));
      const double inv2a = 1.0 / (2.0 * tq.area);
      tq.grad << (p1.y() - p2.y()), (p2.y() - p0.y()), (p0.y() - p1.y()),
                 (p2.x() - p1.x()), (p0.x() - p2.x()), (p1.x() - p0.x());
      tq.grad *= inv2a;
      for (int k = 0; k < 3; ++k) tq.points[k] = bary[k][0] * p0 + bary[k][1] * p1 + bary[k][2] * p2;
      q.triangles.push_back(tq);
    }

    const double g = 0.5 / std::sqrt(3.0);
    const auto edge = [&](const Edge& e) {
      EdgeQuad eq;
      eq.a = e.a;
      eq.b = e.b;
      const Point& pa = mesh.nodes[e.a];
      const Point& pb = mesh.nodes[e.b];
      eq.length = (pb - pa).norm();
      const std::array<double, 2> t{0.5 - g, 0.5 + g};
      for (int k = 0; k < 2; ++k) {
        eq.points[k] = (1.0 - t[k]) * pa + t[k] * pb;
        eq.lambda_a[k] = 1.0 - t[k];
      }
      return eq;
    };
    for (const Edge& e : mesh.bottom) q.bottom.push_back(edge(e));

    const TraceMesh trace = trace_of_top(mesh);
    std::vector<int> trace_index(mesh.num_nodes(), -1);
    for (std::size_t k = 0; k < trace.size(); ++k) trace_index[trace.parent_node[k]] = static_cast<int>(k);
    for (const Edge& e : mesh.top) {
      EdgeQuad eq = edge(e);
      eq.trace_a = trace_index[e.a];
      eq.trace_b = trace_index[e.b];
      q.top.push_back(eq);
    }
    return q;
  }
};

// ---------------------------------------------------------------------------
// Generic bilinear form
//
//   a(u, v) = int_T  grad v . C(x) grad u  +  int_top r(x) u v
//
// `volume(t, k, x)` returns the 2x2 tensor C at quadrature point k of
// triangle t, `robin(e, k, x)` the scalar weight r at point k of top edge e.

template <class Volume, class Robin>
std::vector<Triplet> form_triplets(const MeshQuadrature& quad, Volume&& volume, Robin&& robin) {
  std::vector<Triplet> trips;
  trips.reserve(quad.triangles.size() * 9 + quad.top.size() * 4);
  for (std::size_t t = 0; t < quad.triangles.size(); ++t) {
    const TriangleQuad& tq = quad.triangles[t];
    Matrix2 c = Matrix2::Zero();
    for (int k = 0; k < 3; ++k) c += volume(t, k, tq.points[k]);
    c *= tq.area * TriangleQuad::weight_fraction;
    const Eigen::Matrix3d local = tq.grad.transpose() * c * tq.grad;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trips.emplace_back(tq.nodes[i], tq.nodes[j], local(std::min(i, j), std::max(i, j)));
  }
  for (std::size_t e = 0; e < quad.top.size(); ++e) {
    const EdgeQuad& eq = quad.top[e];
    double maa = 0.0, mab = 0.0, mbb = 0.0;
    for (int k = 0; k < 2; ++k) {
      const double w = eq.length * EdgeQuad::weight_fraction * robin(e, k, eq.points[k]);
      const double la = eq.lambda_a[k];
      const double lb = 1.0 - la;
      maa += w * la * la;
      mab += w * la * lb;
      mbb += w * lb * lb;
    }
    trips.emplace_back(eq.a, eq.a, maa);
    trips.emplace_back(eq.a, eq.b, mab);
    trips.emplace_back(eq.b, eq.a, mab);
    trips.emplace_back(eq.b, eq.b, mbb);
  }
  return trips;
}

/// Matrix-free action y = A u of the same form (full nodal indexing).
template <class Volume, class Robin>
Eigen::VectorXd apply_form(const MeshQuadrature& quad, const Eigen::VectorXd& u, Volume&& volume, Robin&& robin) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(u.size());
  for (std::size_t t = 0; t < quad.triangles.size(); ++t) {
    const TriangleQuad& tq = quad.triangles[t];
    const Eigen::Vector3d ue(u[tq.nodes[0]], u[tq.nodes[1]], u[tq.nodes[2]]);
    const Eigen::Vector2d gu = tq.grad * ue;
    Matrix2 c = Matrix2::Zero();
    for (int k = 0; k < 3; ++k) c += volume(t, k, tq.points[k]);
    const Eigen::Vector3d local = tq.grad.transpose() * (c * gu) * (tq.area * TriangleQuad::weight_fraction);
    for (int i = 0; i < 3; ++i) y[tq.nodes[i]] += local[i];
  }
  for (std::size_t e = 0; e < quad.top.size(); ++e) {
    const EdgeQuad& eq = quad.top[e];
    for (int k = 0; k < 2; ++k) {
      const double la = eq.lambda_a[k];
      const double lb = 1.0 - la;
      const double uq = la * u[eq.a] + lb * u[eq.b];
      const double w = eq.length * EdgeQuad::weight_fraction * robin(e, k, eq.points[k]) * uq;
      y[eq.a] += w * la;
      y[eq.b] += w * lb;
    }
  }
  return y;
}

inline SparseMatrix to_sparse(std::size_t n, const std::vector<Triplet>& trips) {
  SparseMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

// ---------------------------------------------------------------------------
// Assembled and factorized system

/// Scalar conductivity independent of position.
struct ConstantConductivity {
  double value = 1.0;
  double operator()(const Point&) const { return value; }
};

/// SPD system on the free (non-grounded) nodes with its Cholesky factor.
/// Cheap to copy; the factor is shared and only read after construction,
/// so concurrent solves are safe.
class AssembledSystem {
 public:
  using Solver = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

  AssembledSystem() = default;

  /// Eliminates the Dirichlet rows/columns of `full` and factorizes.
  AssembledSystem(const SlabMesh& mesh, const std::vector<Triplet>& full) : mesh_(&mesh) {
    const std::size_t n = mesh.num_nodes();
    free_of_node_.assign(n, 0);
    for (int id : mesh.dirichlet_nodes()) free_of_node_[static_cast<std::size_t>(id)] = -1;
    for (std::size_t i = 0; i < n; ++i) {
      if (free_of_node_[i] >= 0) {
        free_of_node_[i] = static_cast<int>(node_of_free_.size());
        node_of_free_.push_back(static_cast<int>(i));
      }
    }
    std::vector<Triplet> reduced;
    reduced.reserve(full.size());
    for (const Triplet& t : full) {
      const int r = free_of_node_[static_cast<std::size_t>(t.row())];
      const int c = free_of_node_[static_cast<std::size_t>(t.col())];
      if (r >= 0 && c >= 0) reduced.emplace_back(r, c, t.value());
    }
    matrix_ = to_sparse(node_of_free_.size(), reduced);
    auto solver = std::make_shared<Solver>();
    solver->compute(matrix_);
    if (solver->info() != Eigen::Success) {
      throw SolverError("Cholesky factorization of the system matrix failed (" +
                        std::to_string(node_of_free_.size()) + " free nodes)");
    }
    solver_ = std::move(solver);
  }

  [[nodiscard]] const SparseMatrix& matrix() const { return matrix_; }
  [[nodiscard]] std::size_t num_free() const { return node_of_free_.size(); }
  [[nodiscard]] std::size_t num_nodes() const { return free_of_node_.size(); }
  [[nodiscard]] const std::vector<int>& free_of_node() const { return free_of_node_; }
  [[nodiscard]] const SlabMesh& mesh() const { return *mesh_; }

  [[nodiscard]] Eigen::VectorXd restrict(const Eigen::VectorXd& full) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(num_free()));
    for (std::size_t k = 0; k < node_of_free_.size(); ++k) out[static_cast<Eigen::Index>(k)] = full[node_of_free_[k]];
    return out;
  }

  [[nodiscard]] Eigen::VectorXd extend(const Eigen::VectorXd& reduced) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_nodes()));
    for (std::size_t k = 0; k < node_of_free_.size(); ++k) out[node_of_free_[k]] = reduced[static_cast<Eigen::Index>(k)];
    return out;
  }

  /// Solves A u = rhs for a full-length right-hand side; Dirichlet entries
  /// of rhs are ignored and the result is zero there.
  [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd x = solver_->solve(restrict(rhs));
    if (solver_->info() != Eigen::Success) throw SolverError("triangular solve failed");
    return extend(x);
  }

  /// Reduced matrix-vector product on full-length vectors.
  [[nodiscard]] Eigen::VectorXd multiply(const Eigen::VectorXd& u) const { return extend(matrix_ * restrict(u)); }

 private:
  const SlabMesh* mesh_ = nullptr;
  std::vector<int> free_of_node_;
  std::vector<int> node_of_free_;
  SparseMatrix matrix_;
  std::shared_ptr<const Solver> solver_;
};

/// Transformed-problem coefficients on a reference mesh: volume tensor
/// sigma(x) * pushforward(x~), Robin weight exp(beta_h(s)) * sqrt(1 + (H f')^2)
/// with beta_h the P1 interpolant of top-edge nodal values.
template <HeightProfile P, class Sigma = ConstantConductivity>
std::vector<Triplet> transformed_triplets(const MeshQuadrature& quad, const P& profile,
                                          const Eigen::VectorXd& beta, const Sigma& sigma = {}) {
  return form_triplets(
      quad,
      [&](std::size_t, int, const Point& x) -> Matrix2 {
        return sigma(to_physical(profile, x)) * pushforward_tensor(profile, x);
      },
      [&](std::size_t e, int k, const Point& x) {
        const EdgeQuad& eq = quad.top[e];
        const double la = eq.lambda_a[k];
        const double b = la * beta[eq.trace_a] + (1.0 - la) * beta[eq.trace_b];
        return std::exp(b) * admittance_factor(profile, x.x());
      });
}

/// Assembles the transformed Poisson problem for `profile` and Robin
/// log-admittance `beta` (nodal on the mesh's top trace) and factorizes it.
template <HeightProfile P, class Sigma = ConstantConductivity>
AssembledSystem assemble(const SlabMesh& mesh, const P& profile, const Eigen::VectorXd& beta,
                         const Sigma& sigma = {}) {
  if constexpr (requires { profile.require_valid(); }) profile.require_valid();
  const MeshQuadrature quad = MeshQuadrature::build(mesh);
  if (static_cast<std::size_t>(beta.size()) != quad.top.size() + 1) {
    throw InvalidArgument("Robin field size does not match the top trace");
  }
  return AssembledSystem(mesh, transformed_triplets(quad, profile, beta, sigma));
}

// ---------------------------------------------------------------------------
// Loads, solves, observations

/// Bottom-edge current sin(2 pi k s / L) tested against the hat functions.
inline Eigen::VectorXd neumann_load(const SlabMesh& mesh, const MeshQuadrature& quad, int k) {
  if (k < 1) throw InvalidArgument("load index starts at 1");
  Eigen::VectorXd F = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_nodes()));
  const double w = 2.0 * std::numbers::pi * k / mesh.L;
  for (const EdgeQuad& eq : quad.bottom) {
    for (int q = 0; q < 2; ++q) {
      const double g = std::sin(w * eq.points[q].x()) * eq.length * EdgeQuad::weight_fraction;
      F[eq.a] += g * eq.lambda_a[q];
      F[eq.b] += g * (1.0 - eq.lambda_a[q]);
    }
  }
  for (int id : mesh.dirichlet_nodes()) F[id] = 0.0;
  return F;
}

inline Eigen::VectorXd neumann_load(const SlabMesh& mesh, int k) {
  return neumann_load(mesh, MeshQuadrature::build(mesh), k);
}

inline std::vector<Eigen::VectorXd> neumann_loads(const SlabMesh& mesh, const MeshQuadrature& quad, int n_loads) {
  std::vector<Eigen::VectorXd> out;
  for (int k = 1; k <= n_loads; ++k) out.push_back(neumann_load(mesh, quad, k));
  return out;
}

struct ForwardState {
  AssembledSystem system;
  std::vector<Eigen::VectorXd> loads;
  std::vector<Eigen::VectorXd> solutions;
};

inline ForwardState solve_all(const AssembledSystem& system, std::vector<Eigen::VectorXd> loads) {
  ForwardState state{system, std::move(loads), {}};
  for (const Eigen::VectorXd& F : state.loads) state.solutions.push_back(system.solve(F));
  return state;
}

inline ForwardState solve_all(const AssembledSystem& system, int n_loads) {
  if (n_loads < 1) throw InvalidArgument("need at least one load");
  const SlabMesh& mesh = system.mesh();
  return solve_all(system, neumann_loads(mesh, MeshQuadrature::build(mesh), n_loads));
}

/// Evenly spaced sensors offset by half a spacing from the corners.
inline std::vector<double> default_sensors(int count, double L) {
  std::vector<double> out;
  for (int i = 0; i < count; ++i) out.push_back(L * (i + 0.5) / count);
  return out;
}

/// Linear interpolation of nodal fields along the bottom edge.
class ObservationOperator {
 public:
  ObservationOperator() = default;

  ObservationOperator(const SlabMesh& mesh, std::vector<double> sensors)
      : sensors_(std::move(sensors)), num_nodes_(mesh.num_nodes()) {
    for (double x : sensors_) {
      if (!(x >= 0.0 && x <= mesh.L)) throw InvalidArgument("sensor outside [0, L]");
      std::size_t lo = 0, hi = mesh.bottom.size();
      while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        if (mesh.nodes[mesh.bottom[mid].a].x() <= x) lo = mid; else hi = mid;
      }
      const Edge& e = mesh.bottom[lo];
      const double xa = mesh.nodes[e.a].x();
      const double xb = mesh.nodes[e.b].x();
      const double t = (x - xa) / (xb - xa);
      stencil_.push_back({e.a, e.b, 1.0 - t, t});
    }
  }

  [[nodiscard]] const std::vector<double>& sensors() const { return sensors_; }
  [[nodiscard]] std::size_t size() const { return sensors_.size(); }

  [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& u) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < stencil_.size(); ++i) {
      const Stencil& s = stencil_[i];
      out[static_cast<Eigen::Index>(i)] = s.wa * u[s.a] + s.wb * u[s.b];
    }
    return out;
  }

  [[nodiscard]] Eigen::VectorXd apply_transpose(const Eigen::VectorXd& r) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_nodes_));
    for (std::size_t i = 0; i < stencil_.size(); ++i) {
      const Stencil& s = stencil_[i];
      out[s.a] += s.wa * r[static_cast<Eigen::Index>(i)];
      out[s.b] += s.wb * r[static_cast<Eigen::Index>(i)];
    }
    return out;
  }

 private:
  struct Stencil {
    int a, b;
    double wa, wb;
  };
  std::vector<double> sensors_;
  std::vector<Stencil> stencil_;
  std::size_t num_nodes_ = 0;
};

/// Stacked bottom-edge measurements, load-major.
struct Observation {
  Eigen::VectorXd y;
  std::vector<double> sensor_x1;
  int n_loads = 0;

  [[nodiscard]] Eigen::Index per_load() const { return static_cast<Eigen::Index>(sensor_x1.size()); }
  [[nodiscard]] auto load(int k) const { return y.segment(k * per_load(), per_load()); }
};

inline Observation observe(const ForwardState& state, const ObservationOperator& B) {
  Observation obs;
  obs.sensor_x1 = B.sensors();
  obs.n_loads = static_cast<int>(state.solutions.size());
  obs.y.resize(obs.n_loads * static_cast<Eigen::Index>(B.size()));
  for (int k = 0; k < obs.n_loads; ++k) obs.y.segment(k * obs.per_load(), obs.per_load()) = B.apply(state.solutions[k]);
  return obs;
}

inline Observation observe(const ForwardState& state, const std::vector<double>& sensor_x1) {
  return observe(state, ObservationOperator(state.system.mesh(), sensor_x1));
}

}  // namespace robinshape
