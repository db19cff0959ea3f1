#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "robinshape/mesh.hpp"

using namespace robinshape;

namespace {

double cross_area(const SlabMesh& m) {
  double sum = 0.0;
  for (const auto& t : m.triangles) {
    const Point a = m.nodes[t[0]], b = m.nodes[t[1]], c = m.nodes[t[2]];
    sum += 0.5 * std::abs((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
  }
  return sum;
}

}  // namespace

TEST(SlabMesh, SmallestGrid) {
  const SlabMesh m = build_slab_mesh(1.0, 0.05, 1, 1);
  EXPECT_EQ(m.num_nodes(), 4u);
  EXPECT_EQ(m.num_triangles(), 2u);
  EXPECT_EQ(m.bottom.size(), 1u);
  EXPECT_EQ(m.top.size(), 1u);
  EXPECT_EQ(m.sides.size(), 2u);
  EXPECT_EQ(validate_slab(m), "");
}

TEST(SlabMesh, TwoCells) {
  const SlabMesh m = build_slab_mesh(1.0, 0.05, 2, 1);
  EXPECT_EQ(m.num_nodes(), 6u);
  EXPECT_EQ(m.num_triangles(), 4u);
  double area = 0.0;
  for (std::size_t t = 0; t < m.num_triangles(); ++t) area += m.signed_area(t);
  EXPECT_NEAR(area, 0.05, 1e-15);
}

TEST(SlabMesh, AreaMatchesCrossProductOracle) {
  const SlabMesh m = build_slab_mesh(1.0, 0.05, 64, 8);
  EXPECT_EQ(m.num_nodes(), 585u);
  double area = 0.0;
  for (std::size_t t = 0; t < m.num_triangles(); ++t) area += m.signed_area(t);
  EXPECT_NEAR(area, 0.05, 1e-12);
  EXPECT_NEAR(cross_area(m), 0.05, 1e-12);
}

TEST(SlabMesh, InvariantsHoldAcrossSizes) {
  for (int nx : {1, 3, 16, 77}) {
    for (int ny : {1, 2, 7}) {
      const SlabMesh m = build_slab_mesh(2.5, 0.3, nx, ny);
      EXPECT_EQ(validate_slab(m), "") << nx << "x" << ny;
      EXPECT_EQ(m.num_nodes(), static_cast<std::size_t>((nx + 1) * (ny + 1)));
      double area = 0.0;
      for (std::size_t t = 0; t < m.num_triangles(); ++t) {
        EXPECT_GT(m.signed_area(t), 0.0);
        area += m.signed_area(t);
      }
      EXPECT_NEAR(area / (2.5 * 0.3), 1.0, 1e-12);
      EXPECT_EQ(m.bottom.size() + m.top.size() + m.sides.size(), static_cast<std::size_t>(2 * nx + 2 * ny));
    }
  }
}

TEST(SlabMesh, RejectsBadArguments) {
  EXPECT_THROW(build_slab_mesh(0.0, 0.05, 4, 4), InvalidArgument);
  EXPECT_THROW(build_slab_mesh(1.0, -1.0, 4, 4), InvalidArgument);
  EXPECT_THROW(build_slab_mesh(1.0, 0.05, 0, 4), InvalidArgument);
  EXPECT_THROW(build_slab_mesh(1.0, 0.05, 4, 0), InvalidArgument);
}

TEST(SlabMesh, ValidateCatchesFlippedTriangle) {
  SlabMesh m = build_slab_mesh(1.0, 0.05, 2, 1);
  std::swap(m.triangles[0][1], m.triangles[0][2]);
  EXPECT_NE(validate_slab(m), "");
}

TEST(TraceMesh, UniformNodes) {
  const TraceMesh tr = trace_of_top(build_slab_mesh(1.0, 0.05, 2, 3));
  ASSERT_EQ(tr.size(), 3u);
  EXPECT_DOUBLE_EQ(tr.s[0], 0.0);
  EXPECT_DOUBLE_EQ(tr.s[1], 0.5);
  EXPECT_DOUBLE_EQ(tr.s[2], 1.0);
}

TEST(TraceMesh, InversionMeshHas78Nodes) {
  const SlabMesh m = build_slab_mesh(1.0, 0.05, 77, 7);
  const TraceMesh tr = trace_of_top(m);
  EXPECT_EQ(tr.size(), 78u);
  double total = 0.0;
  for (std::size_t k = 0; k < tr.num_intervals(); ++k) {
    const auto [a, b] = tr.interval(k);
    total += tr.s[b] - tr.s[a];
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(TraceMesh, ParentMapRecoversTopNodes) {
  const SlabMesh m = build_slab_mesh(1.0, 0.05, 13, 4);
  const TraceMesh tr = trace_of_top(m);
  std::set<int> seen;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const Point& p = m.nodes[tr.parent_node[i]];
    EXPECT_EQ(p.y(), m.H);
    EXPECT_EQ(p.x(), tr.s[i]);
    if (i > 0) EXPECT_GT(tr.s[i], tr.s[i - 1]);
    seen.insert(tr.parent_node[i]);
  }
  EXPECT_EQ(seen.size(), tr.size());
  EXPECT_EQ(tr.s.front(), 0.0);
  EXPECT_EQ(tr.s.back(), 1.0);
}

TEST(TraceMesh, EmptyTopIsInvalid) {
  SlabMesh m = build_slab_mesh(1.0, 0.05, 2, 1);
  m.top.clear();
  EXPECT_THROW(trace_of_top(m), InvalidMesh);
}

TEST(TraceMesh, InterpolationIsLinear) {
  const TraceMesh tr = trace_of_top(build_slab_mesh(1.0, 0.05, 4, 1));
  Eigen::VectorXd v(5);
  v << 0.0, 1.0, 4.0, 9.0, 16.0;
  EXPECT_DOUBLE_EQ(tr.interpolate(v, 0.25), 1.0);
  EXPECT_DOUBLE_EQ(tr.interpolate(v, 0.375), 2.5);
  EXPECT_DOUBLE_EQ(tr.interpolate(v, 1.0), 16.0);
}
