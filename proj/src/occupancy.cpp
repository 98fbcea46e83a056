#include "leap/occupancy.hpp"

namespace leap {

using RowMatX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void build_model(LeapModel& model, const ModelConfig& cfg, Index n_joints,
                 const std::vector<int>& parent, std::uint64_t seed) {
  require(model.params.size() == 0, "model already built");
  require(n_joints >= 2, "need at least two joints");
  model.cfg = cfg;
  model.n_joints = n_joints;
  model.parent = parent;
  Rng rng(mix_seed(seed, 0x1ea9));
  ParameterStore& ps = model.params;
  StatsStore& ss = model.stats;

  if (cfg.use_shape) {
    model.shape_can = PointNet(ps, rng, "shape_can", 3, cfg.pn_hidden, cfg.shape_feat,
                               cfg.pn_blocks);
    model.shape_posed = PointNet(ps, rng, "shape_posed", 3, cfg.pn_hidden, cfg.shape_feat,
                                 cfg.pn_blocks);
  }
  if (cfg.use_structure)
    model.structure = StructureEncoder(ps, rng, "structure", n_joints, parent);
  model.bone_proj = Linear(ps, rng, "bone_proj", model.z_dim(), cfg.bone_code * n_joints);
  model.lbs_can = PointNet(ps, rng, "lbs_can", 3, cfg.pn_hidden, cfg.lbs_point_feat,
                           cfg.pn_blocks);
  model.lbs_posed = PointNet(ps, rng, "lbs_posed", 3, cfg.pn_hidden, cfg.lbs_point_feat,
                             cfg.pn_blocks);
  model.inv_pose = Linear(ps, rng, "inv_pose", 12 * n_joints, cfg.lbs_pose_feat);
  model.fwd_net = CondMlp(ps, ss, rng, "fwd_net", 3, cfg.lbs_hidden, n_joints,
                          model.fwd_cond_dim(), cfg.lbs_blocks);
  model.inv_net = CondMlp(ps, ss, rng, "inv_net", 3, cfg.lbs_hidden, n_joints,
                          model.inv_cond_dim(), cfg.lbs_blocks);
  model.occ_net = CondMlp(ps, ss, rng, "occ_net", 3, cfg.occ_hidden, 1, model.occ_cond_dim(),
                          cfg.occ_blocks);
}

static std::vector<Index> one_group(Index n) { return {0, n}; }

Var global_code(LeapModel& model, Tape& t, const PoseContext& ctx) {
  std::vector<Var> parts;
  if (model.cfg.use_shape) {
    parts.push_back(model.shape_can(t, t.constant(ctx.can_verts), one_group(ctx.can_verts.rows())));
    parts.push_back(
        model.shape_posed(t, t.constant(ctx.posed_verts), one_group(ctx.posed_verts.rows())));
  }
  if (model.cfg.use_structure)
    parts.push_back(model.structure(t, ctx.node_feats, ctx.root_feats));
  parts.push_back(t.constant(ctx.pose_code));
  return parts.size() == 1 ? parts[0] : concat_cols(parts);
}

Var bone_codes(LeapModel& model, Tape& t, Var z) {
  return reshape_rowmajor(model.bone_proj(t, z), model.n_joints, model.cfg.bone_code);
}

Var forward_cond(LeapModel& model, Tape& t, const PoseContext& ctx) {
  Var a = model.lbs_can(t, t.constant(ctx.can_verts), one_group(ctx.can_verts.rows()));
  Var b = model.lbs_posed(t, t.constant(ctx.posed_verts), one_group(ctx.posed_verts.rows()));
  return concat_cols({a, b});
}

Var inverse_cond(LeapModel& model, Tape& t, const PoseContext& ctx, Var fwd) {
  RowMatX flat = ctx.b_local;
  Mat row = Eigen::Map<const Eigen::RowVectorXd>(flat.data(), flat.size());
  return concat_cols({fwd, model.inv_pose(t, t.constant(row))});
}

Var inverse_cond(LeapModel& model, Tape& t, const PoseContext& ctx) {
  return inverse_cond(model, t, ctx, forward_cond(model, t, ctx));
}

Var forward_weights(LeapModel& model, Tape& t, Var pts_can, Var cond, bool training) {
  return softmax_rows(model.fwd_net(t, pts_can, cond, training));
}

Var inverse_weights(LeapModel& model, Tape& t, Var pts_local, Var cond, bool training) {
  return softmax_rows(model.inv_net(t, pts_local, cond, training));
}

Var occupancy_head(LeapModel& model, Tape& t, Var z, Var pts_can, Var w, Var cycle,
                   bool training) {
  Var zx = matmul(w, bone_codes(model, t, z));
  Var cond = concat_cols({zx, cycle});
  return sigmoid(model.occ_net(t, pts_can, cond, training));
}

QueryResult query_model(LeapModel& model, Tape& t, const PoseContext& ctx, Var pts_local,
                        bool training) {
  QueryResult out;
  Var fwd = forward_cond(model, t, ctx);
  out.w_inv = inverse_weights(model, t, pts_local, inverse_cond(model, t, ctx, fwd), training);
  out.canonical = canonicalize_points(out.w_inv, t.constant(ctx.b_local), pts_local);
  Var w_fwd = forward_weights(model, t, out.canonical, fwd, training);
  out.cycle = rowwise_sum(abs_val(sub(out.w_inv, w_fwd)));
  Var z = global_code(model, t, ctx);
  out.occ = occupancy_head(model, t, z, out.canonical, out.w_inv, out.cycle, training);
  return out;
}

Vec query_occupancy(LeapModel& model, const PoseContext& ctx, const Mat& pts_world) {
  Vec out(pts_world.rows());
  const Index chunk = 4096;
  for (Index begin = 0; begin < pts_world.rows(); begin += chunk) {
    Index n = std::min(chunk, pts_world.rows() - begin);
    Mat local = pts_world.middleRows(begin, n);
    local.rowwise() -= ctx.t0.transpose();
    Tape t(false);
    QueryResult q = query_model(model, t, ctx, t.constant(local), false);
    out.segment(begin, n) = q.occ.val().col(0);
  }
  return out;
}

FrozenLbs frozen_lbs_eval(LeapModel& model, const PoseContext& ctx, const Mat& pts_local) {
  FrozenLbs out;
  out.w.resize(pts_local.rows(), model.n_joints);
  out.canonical.resize(pts_local.rows(), 3);
  out.cycle.resize(pts_local.rows());
  const Index chunk = 4096;
  for (Index begin = 0; begin < pts_local.rows(); begin += chunk) {
    Index n = std::min(chunk, pts_local.rows() - begin);
    Tape t(false);
    Var pts = t.constant(pts_local.middleRows(begin, n));
    Var fwd = forward_cond(model, t, ctx);
    Var w = inverse_weights(model, t, pts, inverse_cond(model, t, ctx, fwd), false);
    Var canonical = canonicalize_points(w, t.constant(ctx.b_local), pts);
    Var w_fwd = forward_weights(model, t, canonical, fwd, false);
    out.w.middleRows(begin, n) = w.val();
    out.canonical.middleRows(begin, n) = canonical.val();
    out.cycle.segment(begin, n) = cycle_distance_plain(w.val(), w_fwd.val());
  }
  return out;
}

TriMesh extract_isosurface(LeapModel& model, const PoseContext& ctx, int res, double level,
                           double pad) {
  Mat posed_world = ctx.posed_verts;
  posed_world.rowwise() += ctx.t0.transpose();
  Vec3 lo, hi;
  padded_bounds(posed_world, pad, lo, hi);
  auto field = [&](const Mat& pts, Vec& out) {
    out = -query_occupancy(model, ctx, pts);
  };
  return marching_cubes(field, lo, hi, res, -level);
}

}  // namespace leap
