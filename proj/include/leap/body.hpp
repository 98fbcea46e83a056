#pragma once

#include <array>
#include <string>
#include <vector>

#include "leap/common.hpp"

namespace leap {

// Parametric skinned body: template mesh, shape and pose corrective blend
// shapes, joint regressor, kinematic tree, skinning weights.
struct BodyModel {
  Mat template_verts;            // [N x 3]
  std::vector<std::array<int, 3>> faces;
  Mat shape_dirs;                // [3N x S], column s displaces all vertices
  Mat pose_dirs;                 // [3N x 9(K-1)], keyed by non-root rotations
  Mat joint_regressor;           // [K x N]
  std::vector<int> parent;       // [K], parent[0] == -1
  Mat weights;                   // [N x K], rows sum to one

  Index n_verts() const { return template_verts.rows(); }
  Index n_joints() const { return joint_regressor.rows(); }
  Index n_shape() const { return shape_dirs.cols(); }
  void validate() const;
};

struct PoseState {
  Mat axis_angle;  // [K x 3] per-joint local rotations
  Vec3 t0 = Vec3::Zero();
};

// Per-bone rigid transforms, one row-major [r00..r22 | t] row per bone.
struct BoneTransformSet {
  Mat world;   // kinematic chain at the given pose, before root translation
  Mat g;       // root translation times world
  Mat b;       // skinning transforms: g composed with inverse rest chain
  Mat rest;    // kinematic chain at the rest pose
  Mat joints;  // [K x 3] rest joint locations for the given shape
  Vec3 t0 = Vec3::Zero();
};

Mat3 rodrigues(const Vec3& axis_angle);

// Affine rows are row-major [r00..r22 | t0 t1 t2].
Vec affine_row_compose(const Vec& a, const Vec& b);
Vec affine_row_invert_rigid(const Vec& a);
Vec3 affine_row_apply(const Vec& a, const Vec3& x);
Vec affine_row_identity();

// Template plus shape blend offsets, before pose correctives.
Mat shaped_template(const BodyModel& m, const Vec& beta);
Mat joint_locations(const BodyModel& m, const Mat& shaped);
// Full canonical-pose vertices: template + shape offsets + pose correctives.
Mat canonical_vertices(const BodyModel& m, const Vec& beta, const PoseState& pose);
BoneTransformSet bone_transforms(const BodyModel& m, const Vec& beta, const PoseState& pose);
// Blend the per-bone transforms with the given weights and apply to points.
Mat lbs_apply(const Mat& weights, const Mat& bone_rows, const Mat& points);
Mat posed_vertices(const BodyModel& m, const Vec& beta, const PoseState& pose);
// Least-squares shape recovery from rest joint locations.
Vec beta_from_joints(const BodyModel& m, const Mat& joints);

PoseState random_pose(const BodyModel& m, Rng& rng, double angle_scale, double t0_scale);

void save_body(const BodyModel& m, const std::string& path);
BodyModel load_body(const std::string& path);

}  // namespace leap
