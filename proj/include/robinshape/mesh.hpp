#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "robinshape/error.hpp"

namespace robinshape {

using Point = Eigen::Vector2d;

/// Boundary edge as an ordered node pair.
struct Edge {
  int a = 0;
  int b = 0;
};

enum class BoundaryTag { bottom, top, sides };

inline const char* to_string(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::bottom: return "bottom";
    case BoundaryTag::top: return "top";
    case BoundaryTag::sides: return "sides";
  }
  return "?";
}

/// Triangulation of the reference slab (0,L) x (0,H).
///
/// Bottom carries applied currents and sensors, top is the inaccessible
/// Robin boundary, the two sides are grounded. Bottom and top edges are
/// stored in ascending x1 order. Triangles are counter-clockwise.
///
/// The same container also holds the node-mapped image of a slab (see
/// `map_nodes`), in which case only the topology and the tags keep their
/// meaning.
struct SlabMesh {
  std::vector<Point> nodes;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Edge> bottom;
  std::vector<Edge> top;
  std::vector<Edge> sides;
  double L = 0.0;
  double H = 0.0;
  int nx = 0;
  int ny = 0;

  [[nodiscard]] std::size_t num_nodes() const { return nodes.size(); }
  [[nodiscard]] std::size_t num_triangles() const { return triangles.size(); }

  [[nodiscard]] const std::vector<Edge>& edges(BoundaryTag tag) const {
    switch (tag) {
      case BoundaryTag::bottom: return bottom;
      case BoundaryTag::top: return top;
      case BoundaryTag::sides: return sides;
    }
    return sides;
  }

  [[nodiscard]] double signed_area(std::size_t t) const {
    const auto& tri = triangles[t];
    const Point& p0 = nodes[tri[0]];
    const Point& p1 = nodes[tri[1]];
    const Point& p2 = nodes[tri[2]];
    return 0.5 * ((p1.x() - p0.x()) * (p2.y() - p0.y()) -
                  (p2.x() - p0.x()) * (p1.y() - p0.y()));
  }

  /// Nodes touching the side edges (grounded).
  [[nodiscard]] std::vector<int> dirichlet_nodes() const {
    std::vector<int> out;
    for (const Edge& e : sides) {
      out.push_back(e.a);
      out.push_back(e.b);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
};

/// Structured (nx+1) x (ny+1) grid, each cell split along its
/// lower-left to upper-right diagonal.
inline SlabMesh build_slab_mesh(double L, double H, int nx, int ny) {
  if (!(L > 0.0) || !(H > 0.0)) throw InvalidArgument("slab dimensions must be positive");
  if (nx < 1 || ny < 1) throw InvalidArgument("slab mesh needs nx >= 1 and ny >= 1");

  SlabMesh mesh;
  mesh.L = L;
  mesh.H = H;
  mesh.nx = nx;
  mesh.ny = ny;

  const auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  mesh.nodes.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1)));
  for (int j = 0; j <= ny; ++j) {
    // Pin boundary rows and columns to exact values.
    const double y = (j == ny) ? H : H * static_cast<double>(j) / ny;
    for (int i = 0; i <= nx; ++i) {
      const double x = (i == nx) ? L : L * static_cast<double>(i) / nx;
      mesh.nodes.emplace_back(x, y);
    }
  }

  mesh.triangles.reserve(static_cast<std::size_t>(2 * nx * ny));
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int n00 = id(i, j);
      const int n10 = id(i + 1, j);
      const int n01 = id(i, j + 1);
      const int n11 = id(i + 1, j + 1);
      mesh.triangles.push_back({n00, n10, n11});
      mesh.triangles.push_back({n00, n11, n01});
    }
  }

  for (int i = 0; i < nx; ++i) {
    mesh.bottom.push_back({id(i, 0), id(i + 1, 0)});
    mesh.top.push_back({id(i, ny), id(i + 1, ny)});
  }
  for (int j = 0; j < ny; ++j) {
    mesh.sides.push_back({id(0, j), id(0, j + 1)});
    mesh.sides.push_back({id(nx, j), id(nx, j + 1)});
  }
  return mesh;
}

/// Returns a copy of `mesh` with every node moved by `map`. Topology and
/// tags are kept; triangles must stay positively oriented under the map.
template <class Map>
SlabMesh map_nodes(const SlabMesh& mesh, Map&& map) {
  SlabMesh out = mesh;
  for (Point& p : out.nodes) p = map(Point(p));
  return out;
}

/// 1-D P1 mesh of the top edge, parameterised by x1.
struct TraceMesh {
  std::vector<double> s;          // ascending node coordinates in [0, L]
  std::vector<int> parent_node;   // trace node -> slab node
  double L = 0.0;

  [[nodiscard]] std::size_t size() const { return s.size(); }
  [[nodiscard]] std::size_t num_intervals() const { return s.empty() ? 0 : s.size() - 1; }
  [[nodiscard]] std::pair<int, int> interval(std::size_t k) const {
    return {static_cast<int>(k), static_cast<int>(k + 1)};
  }

  /// Index of the interval containing x (clamped to the mesh).
  [[nodiscard]] std::size_t locate(double x) const {
    const auto it = std::upper_bound(s.begin(), s.end(), x);
    std::size_t k = (it == s.begin()) ? 0 : static_cast<std::size_t>(it - s.begin()) - 1;
    return std::min(k, num_intervals() - 1);
  }

  /// P1 interpolation of nodal values at x.
  [[nodiscard]] double interpolate(const Eigen::VectorXd& values, double x) const {
    const std::size_t k = locate(x);
    const double t = (x - s[k]) / (s[k + 1] - s[k]);
    return (1.0 - t) * values[static_cast<Eigen::Index>(k)] +
           t * values[static_cast<Eigen::Index>(k + 1)];
  }
};

inline TraceMesh trace_of_top(const SlabMesh& mesh) {
  if (mesh.top.empty()) throw InvalidMesh("mesh has no top edges");
  std::vector<int> ids;
  for (const Edge& e : mesh.top) {
    ids.push_back(e.a);
    ids.push_back(e.b);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::sort(ids.begin(), ids.end(), [&](int lhs, int rhs) {
    return mesh.nodes[lhs].x() < mesh.nodes[rhs].x();
  });

  TraceMesh trace;
  trace.L = mesh.L;
  for (int id : ids) {
    trace.parent_node.push_back(id);
    trace.s.push_back(mesh.nodes[id].x());
  }
  for (std::size_t k = 1; k < trace.s.size(); ++k) {
    if (!(trace.s[k] > trace.s[k - 1])) throw InvalidMesh("top-edge nodes share an x1 coordinate");
  }
  return trace;
}

/// Checks the structural invariants of a reference slab mesh. Returns an
/// empty string when all hold, otherwise a description of the first
/// violation.
inline std::string validate_slab(const SlabMesh& mesh) {
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    if (!(mesh.signed_area(t) > 0.0)) return "triangle " + std::to_string(t) + " is not CCW";
  }
  // Every boundary edge (edge used by exactly one triangle) must carry
  // exactly one tag.
  std::vector<std::pair<int, int>> all;
  for (const auto& tri : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      int a = tri[k];
      int b = tri[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      all.emplace_back(a, b);
    }
  }
  std::sort(all.begin(), all.end());
  std::vector<std::pair<int, int>> boundary;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j] == all[i]) ++j;
    if (j - i == 1) boundary.push_back(all[i]);
    i = j;
  }
  std::vector<std::pair<int, int>> tagged;
  for (BoundaryTag tag : {BoundaryTag::bottom, BoundaryTag::top, BoundaryTag::sides}) {
    for (const Edge& e : mesh.edges(tag)) tagged.emplace_back(std::min(e.a, e.b), std::max(e.a, e.b));
  }
  std::sort(tagged.begin(), tagged.end());
  if (std::adjacent_find(tagged.begin(), tagged.end()) != tagged.end()) return "edge carries two tags";
  if (tagged != boundary) return "tagged edges do not match the mesh boundary";

  for (const Edge& e : mesh.bottom) {
    if (mesh.nodes[e.a].y() != 0.0 || mesh.nodes[e.b].y() != 0.0) return "bottom node off x2 = 0";
  }
  for (const Edge& e : mesh.top) {
    if (mesh.nodes[e.a].y() != mesh.H || mesh.nodes[e.b].y() != mesh.H) return "top node off x2 = H";
  }
  for (const Edge& e : mesh.sides) {
    for (int id : {e.a, e.b}) {
      const double x = mesh.nodes[id].x();
      if (x != 0.0 && x != mesh.L) return "side node off x1 in {0, L}";
    }
  }
  return {};
}

}  // namespace robinshape
