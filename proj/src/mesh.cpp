#include "leap/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace leap {

namespace {

int resolve_index(long raw, long nverts, std::size_t line) {
  long idx = raw < 0 ? nverts + raw : raw - 1;
  if (idx < 0 || idx >= nverts)
    fail("obj line " + std::to_string(line) + ": vertex index " + std::to_string(raw) +
         " out of range");
  return static_cast<int>(idx);
}

}  // namespace

TriMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open obj file: " + path);
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
  std::string linebuf;
  std::size_t lineno = 0;
  while (std::getline(in, linebuf)) {
    ++lineno;
    std::istringstream ls(linebuf);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z()))
        fail("obj line " + std::to_string(lineno) + ": malformed vertex");
      verts.push_back(v);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string corner;
      while (ls >> corner) {
        // "i", "i/t", "i/t/n", "i//n" all start with the vertex index
        char* end = nullptr;
        long raw = std::strtol(corner.c_str(), &end, 10);
        if (end == corner.c_str())
          fail("obj line " + std::to_string(lineno) + ": malformed face corner '" + corner + "'");
        poly.push_back(resolve_index(raw, static_cast<long>(verts.size()), lineno));
      }
      if (poly.size() < 3) fail("obj line " + std::to_string(lineno) + ": face with <3 corners");
      for (std::size_t i = 2; i < poly.size(); ++i)
        faces.push_back({poly[0], poly[i - 1], poly[i]});
    }
  }
  TriMesh mesh;
  mesh.vertices.resize(static_cast<Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Index>(i)) = verts[i];
  mesh.faces = std::move(faces);
  return mesh;
}

void save_obj(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot write obj file: " + path);
  char buf[128];
  for (Index i = 0; i < mesh.vertices.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", mesh.vertices(i, 0), mesh.vertices(i, 1),
                  mesh.vertices(i, 2));
    out << buf;
  }
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) fail("write failed: " + path);
}

std::string watertight_defect(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> directed;
  for (const auto& f : mesh.faces) {
    for (int e = 0; e < 3; ++e) {
      int a = f[e], b = f[(e + 1) % 3];
      if (a == b) return "degenerate edge on face with repeated vertex " + std::to_string(a);
      ++directed[{a, b}];
    }
  }
  for (const auto& [edge, count] : directed) {
    auto rev = directed.find({edge.second, edge.first});
    int rc = rev == directed.end() ? 0 : rev->second;
    if (count != 1 || rc != 1)
      return "edge (" + std::to_string(edge.first) + "," + std::to_string(edge.second) +
             ") has coverage " + std::to_string(count) + "/" + std::to_string(rc);
  }
  return {};
}

double surface_area(const TriMesh& mesh) {
  double area = 0.0;
  for (const auto& f : mesh.faces) {
    Vec3 a = mesh.vertices.row(f[0]), b = mesh.vertices.row(f[1]), c = mesh.vertices.row(f[2]);
    area += 0.5 * (b - a).cross(c - a).norm();
  }
  return area;
}

Mat vertex_normals(const TriMesh& mesh) {
  Mat normals = Mat::Zero(mesh.vertices.rows(), 3);
  for (const auto& f : mesh.faces) {
    Vec3 a = mesh.vertices.row(f[0]), b = mesh.vertices.row(f[1]), c = mesh.vertices.row(f[2]);
    Vec3 n = (b - a).cross(c - a);  // magnitude = 2 * area, giving area weighting
    for (int k = 0; k < 3; ++k) normals.row(f[k]) += n.transpose();
  }
  for (Index i = 0; i < normals.rows(); ++i) {
    double len = normals.row(i).norm();
    if (len > 1e-20) normals.row(i) /= len;
  }
  return normals;
}

void mesh_bounds(const TriMesh& mesh, Vec3& lo, Vec3& hi) {
  require(mesh.vertices.rows() > 0, "mesh_bounds: empty mesh");
  lo = mesh.vertices.colwise().minCoeff().transpose();
  hi = mesh.vertices.colwise().maxCoeff().transpose();
}

void padded_bounds(const Mat& points, double pad, Vec3& lo, Vec3& hi) {
  require(points.rows() > 0, "padded_bounds: no points");
  lo = points.colwise().minCoeff().transpose();
  hi = points.colwise().maxCoeff().transpose();
  Vec3 extent = hi - lo;
  double floor = 1e-6 * std::max(1.0, extent.maxCoeff());
  for (int a = 0; a < 3; ++a) {
    double p = std::max(pad * extent[a], floor);
    lo[a] -= p;
    hi[a] += p;
  }
}

Mat sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed, Mat* normals) {
  require(!mesh.faces.empty(), "sample_surface: mesh has no faces");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    Vec3 a = mesh.vertices.row(f[0]), b = mesh.vertices.row(f[1]), c = mesh.vertices.row(f[2]);
    total += 0.5 * (b - a).cross(c - a).norm();
    cumulative[i] = total;
  }
  require(total > 0.0, "sample_surface: degenerate (zero-area) mesh");
  Rng rng(seed);
  Mat out(static_cast<Index>(n), 3);
  if (normals != nullptr) normals->resize(static_cast<Index>(n), 3);
  for (std::size_t i = 0; i < n; ++i) {
    double pick = rng.uniform() * total;
    std::size_t fi =
        std::lower_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin();
    if (fi >= mesh.faces.size()) fi = mesh.faces.size() - 1;
    const auto& f = mesh.faces[fi];
    double su = std::sqrt(rng.uniform()), v = rng.uniform();
    double wa = 1.0 - su, wb = su * (1.0 - v), wc = su * v;
    out.row(static_cast<Index>(i)) = wa * mesh.vertices.row(f[0]) + wb * mesh.vertices.row(f[1]) +
                                     wc * mesh.vertices.row(f[2]);
    if (normals != nullptr) {
      Vec3 a = mesh.vertices.row(f[0]), b = mesh.vertices.row(f[1]), c = mesh.vertices.row(f[2]);
      Vec3 nrm = (b - a).cross(c - a);
      double len = nrm.norm();
      normals->row(static_cast<Index>(i)) = len > 0.0 ? Vec3(nrm / len) : Vec3(Vec3::Zero());
    }
  }
  return out;
}

double signed_volume6(const TriMesh& mesh) {
  double vol = 0.0;
  for (const auto& f : mesh.faces) {
    Vec3 a = mesh.vertices.row(f[0]), b = mesh.vertices.row(f[1]), c = mesh.vertices.row(f[2]);
    vol += a.dot(b.cross(c));
  }
  return vol;
}

void orient_outward(TriMesh& mesh) {
  if (signed_volume6(mesh) >= 0.0) return;
  for (auto& f : mesh.faces) std::swap(f[1], f[2]);
}

InsideTester::InsideTester(const TriMesh& mesh) : mesh_(mesh) {
  std::string defect = watertight_defect(mesh);
  if (!defect.empty()) fail("inside test requires a watertight mesh: " + defect);
  Rng rng(0x9d5ad33ull);  // fixed stream so the directions are stable constants
  for (auto& d : dirs_) d = rng.unit3();
}

bool InsideTester::ray_parity(const Vec3& origin, const Vec3& dir, bool& degenerate) const {
  constexpr double kEps = 1e-12;
  constexpr double kBary = 1e-9;
  degenerate = false;
  int crossings = 0;
  for (const auto& f : mesh_.faces) {
    Vec3 a = mesh_.vertices.row(f[0]);
    Vec3 e1 = Vec3(mesh_.vertices.row(f[1])) - a;
    Vec3 e2 = Vec3(mesh_.vertices.row(f[2])) - a;
    Vec3 pvec = dir.cross(e2);
    double det = e1.dot(pvec);
    if (std::abs(det) < kEps) continue;  // parallel; cannot cross transversally
    double inv = 1.0 / det;
    Vec3 tvec = origin - a;
    double u = tvec.dot(pvec) * inv;
    if (u < -kBary || u > 1.0 + kBary) continue;
    Vec3 qvec = tvec.cross(e1);
    double v = dir.dot(qvec) * inv;
    if (v < -kBary || u + v > 1.0 + kBary) continue;
    double t = e2.dot(qvec) * inv;
    if (t <= -kBary) continue;
    bool boundary = u < kBary || v < kBary || u + v > 1.0 - kBary;
    if (t < 1e-9 || boundary) {
      degenerate = true;  // grazing or on-surface hit; caller retries
      return false;
    }
    ++crossings;
  }
  return (crossings & 1) != 0;
}

bool InsideTester::contains(const Vec3& p) const {
  int votes = 0;
  Rng jitter(0x51ce5EEDull);
  for (int r = 0; r < 3; ++r) {
    Vec3 origin = p;
    Vec3 dir = dirs_[r];
    bool degenerate = true;
    bool inside = false;
    for (int attempt = 0; attempt < 8 && degenerate; ++attempt) {
      inside = ray_parity(origin, dir, degenerate);
      if (degenerate) {
        dir = (dir + 0.37 * jitter.unit3()).normalized();
        if (attempt >= 3) origin = p + 1e-7 * jitter.unit3();
      }
    }
    if (degenerate) fail("inside test: degenerate rays persisted after retries");
    votes += inside ? 1 : 0;
  }
  return votes >= 2;
}

std::vector<std::uint8_t> InsideTester::contains_batch(const Mat& points) const {
  require(points.cols() == 3, "contains_batch: points must be Nx3");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(points.rows()));
  parallel_for(out.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i)
      out[i] = contains(points.row(static_cast<Index>(i)).transpose()) ? 1 : 0;
  }, 256);
  return out;
}

}  // namespace leap
