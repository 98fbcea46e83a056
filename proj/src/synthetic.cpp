#include "leap/synthetic.hpp"

#include <cmath>
#include <vector>

#include "leap/mesh.hpp"

namespace leap {
namespace {

struct Capsule {
  Vec3 a, b;
  double r;
};

struct Skeleton {
  Mat pos;                  // [K x 3] designed joint locations
  std::vector<int> parent;  // [K]
  std::vector<Capsule> capsules;  // one per joint
};

Skeleton design_skeleton(Index k) {
  require(k >= 13, "need at least 13 joints");
  Index torso = k - 10;
  Skeleton s;
  s.pos.resize(k, 3);
  s.parent.assign(static_cast<std::size_t>(k), -1);
  for (Index j = 0; j < torso; ++j) {
    double t = static_cast<double>(j) / static_cast<double>(torso - 1);
    s.pos.row(j) = Vec3(0.0, 0.95 + 0.60 * t, 0.0);
    s.parent[static_cast<std::size_t>(j)] = static_cast<int>(j) - 1;
  }
  int chest = static_cast<int>(std::max<Index>(torso - 3, 0));
  double chest_y = s.pos(chest, 1) + 0.07;
  Index arm = torso;
  for (int side = 0; side < 2; ++side) {
    double sx = side == 0 ? 1.0 : -1.0;
    s.pos.row(arm) = Vec3(sx * 0.18, chest_y, 0.0);
    s.parent[static_cast<std::size_t>(arm)] = chest;
    s.pos.row(arm + 1) = Vec3(sx * 0.44, chest_y, 0.0);
    s.parent[static_cast<std::size_t>(arm + 1)] = static_cast<int>(arm);
    arm += 2;
  }
  Index leg = torso + 4;
  for (int side = 0; side < 2; ++side) {
    double sx = side == 0 ? 1.0 : -1.0;
    s.pos.row(leg) = Vec3(sx * 0.09, 0.90, 0.0);
    s.parent[static_cast<std::size_t>(leg)] = 0;
    s.pos.row(leg + 1) = Vec3(sx * 0.09, 0.50, 0.0);
    s.parent[static_cast<std::size_t>(leg + 1)] = static_cast<int>(leg);
    s.pos.row(leg + 2) = Vec3(sx * 0.09, 0.10, 0.0);
    s.parent[static_cast<std::size_t>(leg + 2)] = static_cast<int>(leg + 1);
    leg += 3;
  }

  s.capsules.resize(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) {
    Vec3 a = s.pos.row(j);
    Vec3 tip;
    double r;
    if (j < torso) {
      tip = j + 1 < torso ? Vec3(s.pos.row(j + 1)) : Vec3(a + Vec3(0.0, 0.14, 0.0));
      r = j + 1 < torso ? 0.105 : 0.09;
    } else if (j < torso + 4) {
      bool upper = (j - torso) % 2 == 0;
      double sx = j < torso + 2 ? 1.0 : -1.0;
      tip = upper ? Vec3(s.pos.row(j + 1)) : Vec3(a + Vec3(sx * 0.24, 0.0, 0.0));
      r = upper ? 0.055 : 0.05;
    } else {
      int seg = static_cast<int>(j - torso - 4) % 3;
      if (seg == 2) {
        tip = a + Vec3(0.0, -0.04, 0.15);
        r = 0.05;
      } else {
        tip = s.pos.row(j + 1);
        r = seg == 0 ? 0.075 : 0.06;
      }
    }
    s.capsules[static_cast<std::size_t>(j)] = {a, tip, r};
  }
  return s;
}

double capsule_core_distance(const Capsule& c, const Vec3& p) {
  Vec3 ab = c.b - c.a;
  double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? std::clamp((p - c.a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (c.a + t * ab)).norm();
}

double union_sdf(const Skeleton& s, const Vec3& p) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& c : s.capsules) d = std::min(d, capsule_core_distance(c, p) - c.r);
  return d;
}

TriMesh mesh_skeleton(const Skeleton& s, Index target_verts, const Vec3& jitter) {
  Vec3 lo = Vec3::Constant(1e30), hi = Vec3::Constant(-1e30);
  double max_r = 0.0;
  for (const auto& c : s.capsules) {
    lo = lo.cwiseMin(c.a).cwiseMin(c.b);
    hi = hi.cwiseMax(c.a).cwiseMax(c.b);
    max_r = std::max(max_r, c.r);
  }
  lo.array() -= max_r + 0.08;
  hi.array() += max_r + 0.08;
  lo += jitter;
  hi += jitter;

  auto field = [&s](const Mat& pts, Vec& out) {
    for (Index i = 0; i < pts.rows(); ++i) out(i) = union_sdf(s, pts.row(i));
  };

  TriMesh best;
  Index best_gap = std::numeric_limits<Index>::max();
  for (int res = 10; res <= 72; res += 2) {
    TriMesh mesh = marching_cubes(field, lo, hi, res, 0.0);
    Index gap = std::abs(mesh.vertices.rows() - target_verts);
    if (gap < best_gap) {
      best_gap = gap;
      best = std::move(mesh);
    }
    if (mesh.vertices.rows() > 2 * target_verts) break;
  }
  require(best.vertices.rows() > 0, "empty synthetic mesh");
  return best;
}

// Smooth random vector fields over the vertices, one column per field.
Mat smooth_fields(const Mat& verts, Index count, Rng& rng) {
  Index n = verts.rows();
  Mat out = Mat::Zero(3 * n, count);
  for (Index c = 0; c < count; ++c) {
    for (int m = 0; m < 6; ++m) {
      Vec3 k = rng.uniform(2.0, 6.0) * rng.unit3();
      for (int axis = 0; axis < 3; ++axis) {
        double amp = rng.normal();
        double phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        for (Index i = 0; i < n; ++i)
          out(3 * i + axis, c) += amp * std::sin(k.dot(verts.row(i)) + phase);
      }
    }
  }
  return out;
}

Mat orthonormal_columns(const Mat& x) {
  Eigen::HouseholderQR<Mat> qr(x);
  Mat q = qr.householderQ() * Mat::Identity(x.rows(), x.cols());
  return q;
}

double shape_joint_condition(const BodyModel& m) {
  Index k = m.n_joints(), s = m.n_shape();
  Mat a(3 * k, s);
  using RowMatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
  for (Index c = 0; c < s; ++c) {
    Vec flat = m.shape_dirs.col(c);
    Mat dj = m.joint_regressor * Eigen::Map<const RowMatX3>(flat.data(), m.n_verts(), 3);
    RowMatX3 row = dj;
    a.col(c) = Eigen::Map<const Vec>(row.data(), 3 * k);
  }
  Eigen::JacobiSVD<Mat> svd(a);
  double smin = svd.singularValues()(svd.singularValues().size() - 1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return svd.singularValues()(0) / smin;
}

}  // namespace

BodyModel make_synthetic_model(std::uint64_t seed, Index n_joints, Index target_verts,
                               Index n_shape) {
  require(n_shape >= 1, "need at least one shape direction");
  Skeleton skel = design_skeleton(n_joints);
  Rng rng(mix_seed(seed, 0x5b0d7));
  for (int attempt = 0; attempt < 32; ++attempt) {
    Vec3 jitter = attempt == 0 ? Vec3::Zero() : Vec3(0.013 * rng.normal3());
    TriMesh mesh = mesh_skeleton(skel, target_verts, jitter);
    if (!watertight_defect(mesh).empty()) continue;

    BodyModel m;
    m.template_verts = mesh.vertices;
    m.faces = mesh.faces;
    m.parent = skel.parent;
    Index n = m.n_verts(), k = n_joints;

    m.weights.resize(n, k);
    const double sigma_w = 0.03;
    for (Index i = 0; i < n; ++i) {
      Vec3 p = mesh.vertices.row(i);
      Vec score(k);
      for (Index j = 0; j < k; ++j) {
        const Capsule& c = skel.capsules[static_cast<std::size_t>(j)];
        score(j) = -(capsule_core_distance(c, p) - c.r) / sigma_w;
      }
      score.array() -= score.maxCoeff();
      Vec e = score.array().exp();
      m.weights.row(i) = e / e.sum();
    }

    m.joint_regressor.resize(k, n);
    const double sigma_r = 0.07;
    for (Index j = 0; j < k; ++j) {
      Vec3 c = skel.pos.row(j);
      Vec w(n);
      for (Index i = 0; i < n; ++i)
        w(i) = std::exp(-(Vec3(mesh.vertices.row(i)) - c).squaredNorm() /
                        (2.0 * sigma_r * sigma_r));
      m.joint_regressor.row(j) = w / w.sum();
    }

    m.pose_dirs = 0.002 * std::sqrt(3.0 * static_cast<double>(n)) *
                  orthonormal_columns(smooth_fields(mesh.vertices, 9 * (k - 1), rng));

    for (int inner = 0; inner < 32; ++inner) {
      m.shape_dirs = 0.01 * std::sqrt(3.0 * static_cast<double>(n)) *
                     orthonormal_columns(smooth_fields(mesh.vertices, n_shape, rng));
      if (shape_joint_condition(m) < 1e4) {
        m.validate();
        return m;
      }
    }
  }
  fail("could not build a watertight, well-conditioned synthetic body");
}

}  // namespace leap
