#pragma once

#include "leap/occupancy.hpp"

namespace leap {

struct PlacementConfig {
  double lr = 0.01;
  int max_iters = 1000;
  Index samples = 512;                           // surface samples before offsetting
  std::vector<double> depths = {0.01, 0.03, 0.05};  // interior offsets along -normal
  double diverge_factor = 10.0;                  // times the scene-point diameter
  std::uint64_t seed = 7;
};

// Collision probe points: surface samples of the obstacle pushed inside it at
// each configured depth. The mesh is oriented outward first, so this works
// for either input winding.
Mat offset_scene_points(const TriMesh& obstacle, Index samples,
                        const std::vector<double>& depths, std::uint64_t seed);

// Points the body at translation t0 claims as inside (occupancy >= 0.5).
Index count_violations(LeapModel& model, const PoseContext& ctx, const Vec3& t0,
                       const Mat& pts_world);

// Per-point hinge on occupancy above the decision level, clamped to [0, 1].
Vec collision_scores(LeapModel& model, const PoseContext& ctx, const Vec3& t0,
                     const Mat& pts_world);

struct PlacementResult {
  Vec3 translation = Vec3::Zero();  // accepted body root translation
  double loss = 0.0;
  Index violations = 0;
  int iters = 0;
  bool converged = false;  // collision loss reached exactly zero
};

// Gradient descent on the body root translation against the summed collision
// scores of the probe points. The problem is recentred at the initial
// translation; the best iterate by (violations, loss) is kept, and the search
// stops early once the loss hits zero or the step diverges.
PlacementResult optimize_translation(LeapModel& model, const BodyModel& body, const Vec& beta,
                                     const PoseState& initial, const Mat& scene_pts,
                                     const PlacementConfig& pc);

}  // namespace leap
