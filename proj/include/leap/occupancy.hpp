#pragma once

#include <cstdint>
#include <memory>

#include "leap/encoders.hpp"
#include "leap/mesh.hpp"
#include "leap/skinning.hpp"

namespace leap {

struct ModelConfig {
  Index shape_feat = 32;      // per point encoder; the shape code is twice this
  Index pn_hidden = 32;
  int pn_blocks = 1;
  Index lbs_point_feat = 50;  // per point encoder; forward conditioning is twice this
  Index lbs_pose_feat = 40;   // flattened-transform feature added for the inverse field
  Index lbs_hidden = 48;
  int lbs_blocks = 2;
  Index occ_hidden = 64;
  int occ_blocks = 3;
  Index bone_code = 12;       // per-bone slice of the projected global code
  bool use_shape = true;
  bool use_structure = true;
};

// Learned fields plus their conditioning encoders. Fixed address after
// construction: layers keep pointers into the parameter store.
struct LeapModel {
  LeapModel() = default;
  LeapModel(const LeapModel&) = delete;
  LeapModel& operator=(const LeapModel&) = delete;

  ModelConfig cfg;
  Index n_joints = 0;
  std::vector<int> parent;
  ParameterStore params;
  StatsStore stats;

  PointNet shape_can, shape_posed;
  StructureEncoder structure;
  Linear bone_proj;
  PointNet lbs_can, lbs_posed;
  Linear inv_pose;
  CondMlp fwd_net, inv_net, occ_net;

  Index z_dim() const {
    Index d = 3 * n_joints;
    if (cfg.use_shape) d += 2 * cfg.shape_feat;
    if (cfg.use_structure) d += StructureEncoder::kCodeDim * n_joints;
    return d;
  }
  Index fwd_cond_dim() const { return 2 * cfg.lbs_point_feat; }
  Index inv_cond_dim() const { return fwd_cond_dim() + cfg.lbs_pose_feat; }
  Index occ_cond_dim() const { return cfg.bone_code + 1; }
};

void build_model(LeapModel& model, const ModelConfig& cfg, Index n_joints,
                 const std::vector<int>& parent, std::uint64_t seed);

// Global conditioning code [1 x z_dim] for one pose.
Var global_code(LeapModel& model, Tape& t, const PoseContext& ctx);
// Per-bone slices of the projected global code, [K x bone_code].
Var bone_codes(LeapModel& model, Tape& t, Var z);
Var forward_cond(LeapModel& model, Tape& t, const PoseContext& ctx);
Var inverse_cond(LeapModel& model, Tape& t, const PoseContext& ctx);
// Variant reusing an already-built forward conditioning subgraph.
Var inverse_cond(LeapModel& model, Tape& t, const PoseContext& ctx, Var fwd);
// Softmax weight fields over bones, [B x K].
Var forward_weights(LeapModel& model, Tape& t, Var pts_can, Var cond, bool training);
Var inverse_weights(LeapModel& model, Tape& t, Var pts_local, Var cond, bool training);
// Occupancy head on canonicalized points, [B x 1] in (0, 1).
Var occupancy_head(LeapModel& model, Tape& t, Var z, Var pts_can, Var w, Var cycle,
                   bool training);

struct QueryResult {
  Var occ;
  Var w_inv;
  Var canonical;
  Var cycle;
};

// Full differentiable query on root-local points.
QueryResult query_model(LeapModel& model, Tape& t, const PoseContext& ctx, Var pts_local,
                        bool training);

// Inference on world-space points, chunked, no gradients.
Vec query_occupancy(LeapModel& model, const PoseContext& ctx, const Mat& pts_world);

// Frozen weight-field evaluation used when only the occupancy head trains.
struct FrozenLbs {
  Mat w;
  Mat canonical;
  Vec cycle;
};
FrozenLbs frozen_lbs_eval(LeapModel& model, const PoseContext& ctx, const Mat& pts_local);

// Level-set mesh of the learned occupancy around the posed body.
TriMesh extract_isosurface(LeapModel& model, const PoseContext& ctx, int res,
                           double level = 0.5, double pad = 0.2);

}  // namespace leap
