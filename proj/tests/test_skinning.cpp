#include "doctest.h"
#include "helpers.hpp"
#include "leap/skinning.hpp"

using namespace leap;
using leap::test::random_mat;

namespace {

struct PosedSetup {
  BodyModel body = leap::test::tiny_body();
  Vec beta;
  PoseState pose;
  BoneTransformSet bt;
  Mat posed;

  explicit PosedSetup(std::uint64_t seed) {
    Rng rng(seed);
    beta = Vec::Zero(body.n_shape());
    for (Index i = 0; i < beta.size(); ++i) beta(i) = 0.4 * rng.normal();
    pose = random_pose(body, rng, 0.45, 0.0);
    bt = bone_transforms(body, beta, pose);
    posed = posed_vertices(body, beta, pose);
  }
};

}  // namespace

TEST_CASE("nearest vertex matches a brute-force scan and breaks ties low") {
  Rng rng(3);
  Mat verts = random_mat(rng, 40, 3);
  Mat pts = random_mat(rng, 200, 3, 1.2);
  std::vector<Index> idx = nearest_vertex(verts, pts);
  for (Index i = 0; i < pts.rows(); ++i) {
    Index best = 0;
    double bd = (verts.row(0) - pts.row(i)).squaredNorm();
    for (Index v = 1; v < verts.rows(); ++v) {
      double d = (verts.row(v) - pts.row(i)).squaredNorm();
      if (d < bd) {
        bd = d;
        best = v;
      }
    }
    CHECK(idx[static_cast<std::size_t>(i)] == best);
  }

  // exact tie: equidistant from rows 3 and 7 picks 3
  Mat tv(8, 3);
  tv.setZero();
  tv.row(3) = Vec3(1, 0, 0).transpose();
  tv.row(7) = Vec3(-1, 0, 0).transpose();
  for (Index v = 0; v < 8; ++v)
    if (v != 3 && v != 7) tv.row(v) = Vec3(0, 0, 5 + static_cast<double>(v)).transpose();
  Mat q(1, 3);
  q.setZero();
  CHECK(nearest_vertex(tv, q)[0] == 3);
}

TEST_CASE("pseudo ground-truth weights copy the nearest row") {
  PosedSetup s(5);
  Rng rng(7);
  Mat pts = sample_surface(TriMesh{s.posed, s.body.faces}, 64, rng.bits());
  Mat w = pseudo_gt_weights(s.body.weights, s.posed, pts);
  std::vector<Index> idx = nearest_vertex(s.posed, pts);
  for (Index i = 0; i < pts.rows(); ++i) {
    CHECK(w.row(i) == s.body.weights.row(idx[static_cast<std::size_t>(i)]));
    CHECK(w.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  // a point exactly at a vertex returns that vertex's weights
  Mat at_vertex = s.posed.row(11);
  CHECK(pseudo_gt_weights(s.body.weights, s.posed, at_vertex).row(0) == s.body.weights.row(11));
}

TEST_CASE("reprojection inverts canonicalization") {
  PosedSetup s(11);
  Rng rng(13);
  Vec3 lo, hi;
  padded_bounds(s.posed, 0.1, lo, hi);
  Index n = 10000;
  Mat pts(n, 3);
  for (Index i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) pts(i, a) = rng.uniform(lo[a], hi[a]);
  Mat w = pseudo_gt_weights(s.body.weights, s.posed, pts);

  Mat canonical = canonicalize_plain(w, s.bt.b, pts);
  Mat back = reproject_plain(w, s.bt.b, canonical);
  CHECK((back - pts).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("canonicalizing posed vertices with body weights recovers the canonical pose") {
  PosedSetup s(17);
  Mat canonical_true = canonical_vertices(s.body, s.beta, s.pose);
  Mat canonical = canonicalize_plain(s.body.weights, s.bt.b, s.posed);
  // exact because posing applied the identical blended transforms
  CHECK((canonical - canonical_true).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("blend rows is the weighted transform sum") {
  PosedSetup s(19);
  Rng rng(23);
  Mat w = pseudo_gt_weights(s.body.weights, s.posed, random_mat(rng, 5, 3));
  Mat rows = blend_rows(w, s.bt.b);
  for (Index i = 0; i < w.rows(); ++i) {
    Vec expect = Vec::Zero(12);
    for (Index k = 0; k < w.cols(); ++k) expect += w(i, k) * s.bt.b.row(k).transpose();
    CHECK((rows.row(i).transpose() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("cycle distance is rowwise L1 and vanishes on identical weights") {
  Rng rng(29);
  Mat a = random_mat(rng, 6, 4).cwiseAbs();
  Mat b = random_mat(rng, 6, 4).cwiseAbs();
  Vec d = cycle_distance_plain(a, b);
  for (Index i = 0; i < 6; ++i)
    CHECK(d(i) == doctest::Approx((a.row(i) - b.row(i)).cwiseAbs().sum()).epsilon(1e-14));
  CHECK(cycle_distance_plain(a, a).maxCoeff() == 0.0);

  // disjoint one-hot rows are distance 2
  Mat oh1 = Mat::Zero(1, 4), oh2 = Mat::Zero(1, 4);
  oh1(0, 0) = 1.0;
  oh2(0, 3) = 1.0;
  CHECK(cycle_distance_plain(oh1, oh2)(0) == 2.0);
}

TEST_CASE("singular blends fall back to the dominant bone transform") {
  // 0.5 I + 0.5 rot_z(pi) has a rank-one rotation block
  Mat bone_rows(3, 12);
  auto fill = [&](Index row, const Mat3& r, const Vec3& t) {
    bone_rows(row, 0) = r(0, 0); bone_rows(row, 1) = r(0, 1); bone_rows(row, 2) = r(0, 2);
    bone_rows(row, 3) = r(1, 0); bone_rows(row, 4) = r(1, 1); bone_rows(row, 5) = r(1, 2);
    bone_rows(row, 6) = r(2, 0); bone_rows(row, 7) = r(2, 1); bone_rows(row, 8) = r(2, 2);
    bone_rows.block<1, 3>(row, 9) = t.transpose();
  };
  Mat3 half_turn = rodrigues(Vec3(0, 0, M_PI));
  fill(0, Mat3::Identity(), Vec3(0.1, 0.0, 0.0));
  fill(1, half_turn, Vec3(-0.2, 0.3, 0.0));
  fill(2, half_turn, Vec3(0.4, -0.1, 0.2));

  Mat w(1, 3);
  w << 0.5, 0.3, 0.2;
  Mat pts(1, 3);
  pts << 0.5, -0.2, 0.9;
  Mat blended = blend_rows(w, bone_rows);
  Mat3 a;
  a << blended(0, 0), blended(0, 1), blended(0, 2), blended(0, 3), blended(0, 4), blended(0, 5),
      blended(0, 6), blended(0, 7), blended(0, 8);
  REQUIRE(std::abs(a.determinant()) < 1e-12);

  Mat out = canonicalize_plain(w, bone_rows, pts);
  Vec inv0 = affine_row_invert_rigid(bone_rows.row(0));
  CHECK((out.row(0).transpose() - affine_row_apply(inv0, pts.row(0).transpose())).norm() <
        1e-12);
}
