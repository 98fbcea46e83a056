#include <unordered_map>

#include "leap/mesh.hpp"

namespace leap {

namespace {

#include "mc_tables.inc"

// Cube corner offsets (x, y, z) in lattice units.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

// For each cube edge: lattice coordinates of its low endpoint and its axis.
constexpr int kEdgeBase[12][4] = {
    {0, 0, 0, 0}, {1, 0, 0, 1}, {0, 1, 0, 0}, {0, 0, 0, 1},
    {0, 0, 1, 0}, {1, 0, 1, 1}, {0, 1, 1, 0}, {0, 0, 1, 1},
    {0, 0, 0, 2}, {1, 0, 0, 2}, {1, 1, 0, 2}, {0, 1, 0, 2}};

constexpr int kEdgeEnds[12][2] = {{0, 1}, {1, 2}, {3, 2}, {0, 3}, {4, 5}, {5, 6},
                                  {7, 6}, {4, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

std::uint64_t edge_key(long ix, long iy, long iz, int axis) {
  return (static_cast<std::uint64_t>(axis) << 60) | (static_cast<std::uint64_t>(ix) << 40) |
         (static_cast<std::uint64_t>(iy) << 20) | static_cast<std::uint64_t>(iz);
}

}  // namespace

TriMesh marching_cubes(const std::function<void(const Mat&, Vec&)>& field, const Vec3& lo,
                       const Vec3& hi, int res, double level) {
  require(res >= 2, "marching_cubes: resolution must be >= 2");
  require((hi - lo).minCoeff() > 0, "marching_cubes: empty bounds");
  const long n = res + 1;
  Vec3 step = (hi - lo) / res;

  auto sample_plane = [&](long iz, Vec& out) {
    Mat pts(n * n, 3);
    for (long iy = 0; iy < n; ++iy)
      for (long ix = 0; ix < n; ++ix) {
        long r = iy * n + ix;
        pts(r, 0) = lo[0] + step[0] * ix;
        pts(r, 1) = lo[1] + step[1] * iy;
        pts(r, 2) = lo[2] + step[2] * iz;
      }
    out.resize(n * n);
    field(pts, out);
    require(out.size() == n * n, "marching_cubes: field returned wrong count");
  };

  Vec plane0, plane1;
  sample_plane(0, plane0);

  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
  std::unordered_map<std::uint64_t, int> edge_vertex;

  auto corner_value = [&](const Vec& z0, const Vec& z1, long ix, long iy, int dz) -> double {
    const Vec& p = dz == 0 ? z0 : z1;
    return p(iy * n + ix);
  };

  for (long iz = 0; iz < res; ++iz) {
    sample_plane(iz + 1, plane1);
    for (long iy = 0; iy < res; ++iy) {
      for (long ix = 0; ix < res; ++ix) {
        double v[8];
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          v[c] = corner_value(plane0, plane1, ix + kCorner[c][0], iy + kCorner[c][1],
                              kCorner[c][2]);
          if (v[c] < level) cube |= 1 << c;
        }
        if (kEdgeTable[cube] == 0) continue;

        int edge_to_vertex[12];
        for (int e = 0; e < 12; ++e) {
          if (!(kEdgeTable[cube] & (1 << e))) continue;
          long ex = ix + kEdgeBase[e][0], ey = iy + kEdgeBase[e][1], ez = iz + kEdgeBase[e][2];
          auto key = edge_key(ex, ey, ez, kEdgeBase[e][3]);
          auto it = edge_vertex.find(key);
          if (it == edge_vertex.end()) {
            double f0 = v[kEdgeEnds[e][0]], f1 = v[kEdgeEnds[e][1]];
            double t = f1 == f0 ? 0.5 : (level - f0) / (f1 - f0);
            t = std::clamp(t, 0.0, 1.0);
            const int* c0 = kCorner[kEdgeEnds[e][0]];
            const int* c1 = kCorner[kEdgeEnds[e][1]];
            Vec3 a(lo[0] + step[0] * (ix + c0[0]), lo[1] + step[1] * (iy + c0[1]),
                   lo[2] + step[2] * (iz + c0[2]));
            Vec3 b(lo[0] + step[0] * (ix + c1[0]), lo[1] + step[1] * (iy + c1[1]),
                   lo[2] + step[2] * (iz + c1[2]));
            it = edge_vertex.emplace(key, static_cast<int>(verts.size())).first;
            verts.push_back(a + t * (b - a));
          }
          edge_to_vertex[e] = it->second;
        }

        for (int t = 0; kTriTable[cube][t] != -1; t += 3) {
          int i0 = edge_to_vertex[kTriTable[cube][t]];
          int i1 = edge_to_vertex[kTriTable[cube][t + 1]];
          int i2 = edge_to_vertex[kTriTable[cube][t + 2]];
          if (i0 == i1 || i1 == i2 || i0 == i2) continue;
          // swapped winding so normals point away from below-level regions
          faces.push_back({i0, i2, i1});
        }
      }
    }
    std::swap(plane0, plane1);
  }

  TriMesh mesh;
  mesh.vertices.resize(static_cast<Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Index>(i)) = verts[i];
  mesh.faces = std::move(faces);
  return mesh;
}

}  // namespace leap
