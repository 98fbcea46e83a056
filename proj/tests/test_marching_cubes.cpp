#include "doctest.h"
#include "helpers.hpp"
#include "leap/mesh.hpp"

using namespace leap;

namespace {

void sphere_field(const Mat& pts, Vec& out, double r) {
  out.resize(pts.rows());
  for (Index i = 0; i < pts.rows(); ++i) out(i) = pts.row(i).norm() - r;
}

}  // namespace

TEST_CASE("marching cubes recovers a sphere") {
  double r = 0.7;
  auto field = [r](const Mat& p, Vec& out) { sphere_field(p, out, r); };
  TriMesh mesh = marching_cubes(field, Vec3(-1, -1, -1), Vec3(1, 1, 1), 48, 0.0);
  REQUIRE(mesh.num_faces() > 0);
  CHECK(is_watertight(mesh));

  double cell = 2.0 / 48;
  for (Index i = 0; i < mesh.num_vertices(); ++i)
    CHECK(std::abs(mesh.vertices.row(i).norm() - r) < cell);

  double expect = 4.0 / 3.0 * M_PI * r * r * r;
  CHECK(signed_volume6(mesh) / 6.0 == doctest::Approx(expect).epsilon(0.02));
  CHECK(surface_area(mesh) == doctest::Approx(4.0 * M_PI * r * r).epsilon(0.02));
}

TEST_CASE("marching cubes respects the grid box and is deterministic") {
  Vec3 c(2.0, -1.0, 0.5);
  double r = 0.3;
  auto field = [&](const Mat& p, Vec& out) {
    out.resize(p.rows());
    for (Index i = 0; i < p.rows(); ++i) out(i) = (p.row(i).transpose() - c).norm() - r;
  };
  Vec3 lo = c - Vec3::Constant(0.5), hi = c + Vec3::Constant(0.5);
  TriMesh a = marching_cubes(field, lo, hi, 24, 0.0);
  TriMesh b = marching_cubes(field, lo, hi, 24, 0.0);
  REQUIRE(a.num_faces() > 0);
  CHECK(a.vertices == b.vertices);
  CHECK(a.faces == b.faces);
  for (Index i = 0; i < a.num_vertices(); ++i) {
    CHECK((a.vertices.row(i).transpose() - lo).minCoeff() >= 0.0);
    CHECK((hi - a.vertices.row(i).transpose()).minCoeff() >= 0.0);
  }
}

TEST_CASE("marching cubes at a shifted level") {
  auto field = [](const Mat& p, Vec& out) { sphere_field(p, out, 0.0); };  // plain distance
  TriMesh mesh = marching_cubes(field, Vec3(-1, -1, -1), Vec3(1, 1, 1), 40, 0.55);
  REQUIRE(mesh.num_faces() > 0);
  for (Index i = 0; i < mesh.num_vertices(); ++i)
    CHECK(mesh.vertices.row(i).norm() == doctest::Approx(0.55).epsilon(0.1));
}
