#pragma once

#include <array>
#include <string>

#include "leap/common.hpp"

namespace leap {

struct TriMesh {
  Mat vertices;                            // N x 3
  std::vector<std::array<int, 3>> faces;   // CCW indices into vertices

  Index num_vertices() const { return vertices.rows(); }
  std::size_t num_faces() const { return faces.size(); }
};

// OBJ subset: v and f records, negative indices resolved, quads fan-triangulated,
// anything else ignored. Malformed records report the 1-based line number.
TriMesh load_obj(const std::string& path);
void save_obj(const TriMesh& mesh, const std::string& path);

// Every undirected edge must be shared by exactly two triangles with opposite
// orientation. Returns a description of the first defect, or empty.
std::string watertight_defect(const TriMesh& mesh);
inline bool is_watertight(const TriMesh& mesh) { return watertight_defect(mesh).empty(); }

double surface_area(const TriMesh& mesh);

// Area-weighted vertex normals, normalized; zero-area fans yield zero rows.
Mat vertex_normals(const TriMesh& mesh);

void mesh_bounds(const TriMesh& mesh, Vec3& lo, Vec3& hi);

// `pad` fraction of each axis extent added on both sides.
void padded_bounds(const Mat& points, double pad, Vec3& lo, Vec3& hi);

// n points uniform over the surface by area; deterministic in seed. When
// `normals` is given it receives the unit face normal under each sample.
Mat sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed,
                   Mat* normals = nullptr);

// Six times the signed volume enclosed by the faces; positive when the
// winding is outward.
double signed_volume6(const TriMesh& mesh);
// Flips every face if the mesh encloses negative volume.
void orient_outward(TriMesh& mesh);

// Point-in-mesh test by ray-crossing parity along three fixed pseudo-random
// directions with majority vote. Construction rejects meshes that are not
// watertight. Points within 1e-9 of a face are perturbed and retried.
class InsideTester {
 public:
  explicit InsideTester(const TriMesh& mesh);
  bool contains(const Vec3& p) const;
  std::vector<std::uint8_t> contains_batch(const Mat& points) const;

 private:
  bool ray_parity(const Vec3& origin, const Vec3& dir, bool& degenerate) const;
  const TriMesh& mesh_;
  std::array<Vec3, 3> dirs_;
};

// Isosurface of a scalar field at `level`, marching cubes over a res^3 cell
// grid spanning [lo, hi]. The field is sampled at the (res+1)^3 lattice via
// `field`, which fills values for a batch of query points (rows).
TriMesh marching_cubes(const std::function<void(const Mat&, Vec&)>& field, const Vec3& lo,
                       const Vec3& hi, int res, double level);

}  // namespace leap
