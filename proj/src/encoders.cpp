#include "leap/encoders.hpp"

namespace leap {

using RowMat3 = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;

Mat projected_root(const Mat& bone_rows, const Vec3& t0) {
  Index k = bone_rows.rows();
  Mat out(1, 3 * k);
  for (Index j = 0; j < k; ++j) {
    Vec inv = affine_row_invert_rigid(bone_rows.row(j));
    out.block<1, 3>(0, 3 * j) = affine_row_apply(inv, t0).transpose();
  }
  return out;
}

PoseContext make_pose_context(const BodyModel& m, const Vec& beta, const PoseState& pose) {
  PoseContext ctx;
  ctx.t0 = pose.t0;
  PoseState local = pose;
  local.t0 = Vec3::Zero();
  BoneTransformSet bones = bone_transforms(m, beta, local);
  ctx.b_local = bones.b;
  ctx.can_verts = canonical_vertices(m, beta, local);
  ctx.posed_verts = lbs_apply(m.weights, bones.b, ctx.can_verts);
  ctx.pose_code = projected_root(bones.b, Vec3::Zero());

  Index k = m.n_joints();
  ctx.node_feats.resize(k, 13);
  ctx.root_feats.resize(1, 12 * k);
  for (Index j = 0; j < k; ++j) {
    Vec3 joint = bones.joints.row(j);
    int p = m.parent[static_cast<std::size_t>(j)];
    double len = p < 0 ? joint.norm() : (joint - Vec3(bones.joints.row(p))).norm();
    RowMat3 r = rodrigues(pose.axis_angle.row(j));
    ctx.node_feats.block<1, 3>(j, 0) = joint.transpose();
    ctx.node_feats(j, 3) = len;
    ctx.node_feats.block<1, 9>(j, 4) = Eigen::Map<const Eigen::RowVectorXd>(r.data(), 9);
    ctx.root_feats.block<1, 9>(0, 9 * j) = ctx.node_feats.block<1, 9>(j, 4);
    ctx.root_feats.block<1, 3>(0, 9 * k + 3 * j) = joint.transpose();
  }
  return ctx;
}

StructureEncoder::StructureEncoder(ParameterStore& ps, Rng& rng, const std::string& name,
                                   Index n_joints, const std::vector<int>& parent_)
    : parent(parent_) {
  require(static_cast<Index>(parent.size()) == n_joints, "parent size mismatch");
  root = Linear(ps, rng, name + ".root", 12 * n_joints, kCodeDim);
  Index in = kCodeDim + 13;
  for (Index j = 0; j < n_joints; ++j) {
    std::string base = name + ".node" + std::to_string(j);
    nodes.emplace_back(Linear(ps, rng, base + ".l1", in, in),
                       Linear(ps, rng, base + ".l2", in, kCodeDim));
  }
}

Var StructureEncoder::operator()(Tape& t, const Mat& node_feats, const Mat& root_feats) const {
  Index k = static_cast<Index>(nodes.size());
  require(node_feats.rows() == k && node_feats.cols() == 13, "node feature shape mismatch");
  std::vector<Var> codes;
  codes.reserve(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) {
    int p = parent[static_cast<std::size_t>(j)];
    Var up = p < 0 ? root(t, t.constant(root_feats)) : codes[static_cast<std::size_t>(p)];
    Var in = concat_cols({up, t.constant(node_feats.row(j))});
    const auto& mlp = nodes[static_cast<std::size_t>(j)];
    codes.push_back(mlp.second(t, relu(mlp.first(t, in))));
  }
  return concat_cols(codes);
}

}  // namespace leap
