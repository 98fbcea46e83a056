#pragma once

#include <string>
#include <utility>
#include <vector>

#include "leap/body.hpp"
#include "leap/nn.hpp"

namespace leap {

// Per-pose constants consumed by the encoders and weight fields. Everything
// here is expressed root-locally: the root translation is stripped from the
// skinning transforms and posed vertices, and callers shift query points
// instead.
struct PoseContext {
  Mat b_local;      // [K x 12] skinning transforms with zero root translation
  Mat can_verts;    // [N x 3] canonical-pose vertices for the shape
  Mat posed_verts;  // [N x 3] posed vertices, root-local
  Mat node_feats;   // [K x 13] rest joint, bone length, local rotation
  Mat root_feats;   // [1 x 12K] flattened rotations and rest joints
  Mat pose_code;    // [1 x 3K] bone-projected root origin
  Vec3 t0 = Vec3::Zero();
};

PoseContext make_pose_context(const BodyModel& m, const Vec& beta, const PoseState& pose);

// Plain counterpart of the pose_project tape op: applies each inverse bone
// transform to t0 and concatenates the results.
Mat projected_root(const Mat& bone_rows, const Vec3& t0);

// Hierarchical per-bone code. Every node owns a small two-layer MLP fed with
// its parent's code plus its rest joint, bone length, and local rotation; the
// root's parent slot is a linear image of the whole pose.
struct StructureEncoder {
  StructureEncoder() = default;
  StructureEncoder(ParameterStore& ps, Rng& rng, const std::string& name, Index n_joints,
                   const std::vector<int>& parent);
  // Returns [1 x code_dim * K].
  Var operator()(Tape& t, const Mat& node_feats, const Mat& root_feats) const;

  static constexpr Index kCodeDim = 6;
  std::vector<int> parent;
  Linear root;
  std::vector<std::pair<Linear, Linear>> nodes;
};

}  // namespace leap
