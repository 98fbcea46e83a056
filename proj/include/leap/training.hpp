#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "leap/occupancy.hpp"

namespace leap {

struct TrainConfig {
  // stage 1, weight fields
  int lbs_iters = 5000;
  Index inv_uniform = 1024;   // inverse batch, box-uniform half
  Index inv_surface = 1024;   // inverse batch, near-surface half
  Index fwd_uniform = 512;    // forward batch, canonical box-uniform half
  Index fwd_surface = 512;    // forward batch, canonical near-surface half
  Index fwd_mapped = 1024;    // inverse points carried over through pseudo-GT

  // stage 2, occupancy head
  int occ_iters = 10000;
  Index occ_uniform = 1536;
  Index occ_surface = 1024;
  Index occ_canonical = 512;

  // sample banks per pose
  Index bank_uniform = 2048;
  Index bank_surface = 2048;
  Index bank_canonical = 2048;

  double lr = 1e-4;
  double lr_min = -1.0;       // >= 0 enables cosine decay from lr to lr_min
  int bn_passes = 64;         // post-stage running-stat re-estimation passes
  double sigma = 0.1;         // near-surface noise scale
  double pad = 0.1;           // uniform box padding, fraction of extent
  int log_every = 100;
  std::uint64_t seed = 1;
};

// Fixed per-pose sample banks. Everything is root-local; occupancy labels
// come from ray parity against the corresponding mesh.
struct PoseBank {
  PoseState pose;
  PoseContext ctx;
  Mat inv_pts;     // posed-space samples, uniform block then near-surface block
  Mat inv_w;       // nearest posed vertex weights
  Vec inv_occ;
  Mat mapped_pts;  // pseudo-GT canonical image of inv_pts
  Mat mapped_w;    // re-labelled against canonical vertices
  Mat can_pts;     // canonical-space samples, uniform block then near-surface
  Mat can_w;       // nearest canonical vertex weights
  Vec can_occ;
};

std::vector<PoseState> sample_pose_pool(const BodyModel& m, int count, double angle_scale,
                                        double t0_scale, std::uint64_t seed);

std::vector<PoseBank> build_banks(const BodyModel& m, const Vec& beta,
                                  const std::vector<PoseState>& poses, const TrainConfig& tc);

struct StageSummary {
  int iters = 0;
  double final_loss = 0.0;
  double l1_inv = 0.0;  // eval-mode weight errors at end of stage 1
  double l1_fwd = 0.0;
  double seconds = 0.0;
};

// Joint training of both weight fields against pseudo-ground-truth weights.
StageSummary train_stage_lbs(LeapModel& model, const BodyModel& body, const Vec& beta,
                             const std::vector<PoseState>& poses, const TrainConfig& tc,
                             std::ostream* log);

// Occupancy training with the weight fields frozen; their outputs over the
// banks are precomputed once.
StageSummary train_stage_occupancy(LeapModel& model, const BodyModel& body, const Vec& beta,
                                   const std::vector<PoseState>& poses, const TrainConfig& tc,
                                   std::ostream* log);

// Mean intersection-over-union of thresholded occupancy against ray-parity
// labels on box-uniform points, pooled over the given poses.
double eval_iou(LeapModel& model, const BodyModel& body, const Vec& beta,
                const std::vector<PoseState>& poses, Index points_per_pose, double pad,
                std::uint64_t seed);

// Eval-mode L1 weight-field errors over fresh samples from the given poses.
void eval_weight_l1(LeapModel& model, const BodyModel& body, const Vec& beta,
                    const std::vector<PoseState>& poses, Index points_per_pose,
                    std::uint64_t seed, double& l1_inv, double& l1_fwd);

// Symmetric mean squared nearest-neighbour distance between surface samples,
// times 1e4; both meshes are sampled with the same seed.
double chamfer_x1e4(const TriMesh& a, const TriMesh& b, Index samples, std::uint64_t seed);

}  // namespace leap
