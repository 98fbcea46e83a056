#include "leap/placement.hpp"

#include <cmath>
#include <limits>

namespace leap {

Mat offset_scene_points(const TriMesh& obstacle, Index samples,
                        const std::vector<double>& depths, std::uint64_t seed) {
  require(!depths.empty(), "need at least one offset depth");
  TriMesh oriented = obstacle;
  orient_outward(oriented);
  Mat normals;
  Mat pts = sample_surface(oriented, static_cast<std::size_t>(samples), seed, &normals);
  Mat out(samples * static_cast<Index>(depths.size()), 3);
  Index r = 0;
  for (double d : depths)
    for (Index i = 0; i < pts.rows(); ++i) out.row(r++) = pts.row(i) - d * normals.row(i);
  return out;
}

Vec collision_scores(LeapModel& model, const PoseContext& ctx, const Vec3& t0,
                     const Mat& pts_world) {
  PoseContext at = ctx;
  at.t0 = t0;
  Vec occ = query_occupancy(model, at, pts_world);
  return (occ.array() - 0.5).cwiseMax(0.0).cwiseMin(1.0).matrix();
}

Index count_violations(LeapModel& model, const PoseContext& ctx, const Vec3& t0,
                       const Mat& pts_world) {
  PoseContext at = ctx;
  at.t0 = t0;
  Vec occ = query_occupancy(model, at, pts_world);
  return (occ.array() >= 0.5).count();
}

PlacementResult optimize_translation(LeapModel& model, const BodyModel& body, const Vec& beta,
                                     const PoseState& initial, const Mat& scene_pts,
                                     const PlacementConfig& pc) {
  require(scene_pts.rows() > 0 && scene_pts.cols() == 3, "bad scene points");
  PoseState local = initial;
  local.t0 = Vec3::Zero();
  PoseContext ctx = make_pose_context(body, beta, local);

  Vec3 center = initial.t0;
  Mat shifted = scene_pts;
  shifted.rowwise() -= center.transpose();
  Vec3 lo = scene_pts.colwise().minCoeff(), hi = scene_pts.colwise().maxCoeff();
  double max_dist = pc.diverge_factor * std::max((hi - lo).norm(), 1e-6);

  model.params.set_frozen("", true);

  Mat delta = Mat::Zero(1, 3), m1 = Mat::Zero(1, 3), m2 = Mat::Zero(1, 3);
  Mat best_delta = delta;
  double best_loss = std::numeric_limits<double>::infinity();
  Index best_viol = std::numeric_limits<Index>::max();
  int iter = 0;
  bool converged = false;
  long steps = 0;
  for (; iter < pc.max_iters; ++iter) {
    Tape t(true);
    Var d = t.leaf(delta);
    Var pts = sub(t.constant(shifted), repeat_rows(d, shifted.rows()));
    QueryResult q = query_model(model, t, ctx, pts, false);
    Var loss = sum_all(clamp_unit(add_scalar(q.occ, -0.5)));
    double lv = loss.val()(0, 0);
    Index viol = (q.occ.val().col(0).array() >= 0.5).count();
    if (viol < best_viol || (viol == best_viol && lv < best_loss)) {
      best_viol = viol;
      best_loss = lv;
      best_delta = delta;
    }
    if (lv == 0.0) {
      converged = true;
      break;
    }
    t.backward(loss);
    Mat g = t.grad(d);
    ++steps;
    m1 = 0.9 * m1 + 0.1 * g;
    m2 = 0.999 * m2 + 0.001 * g.cwiseProduct(g);
    Mat mh = m1 / (1.0 - std::pow(0.9, static_cast<double>(steps)));
    Mat vh = m2 / (1.0 - std::pow(0.999, static_cast<double>(steps)));
    delta.array() -= pc.lr * mh.array() / (vh.array().sqrt() + 1e-8);
    if (delta.norm() > max_dist) break;
  }

  model.params.set_frozen("", false);
  PlacementResult r;
  r.translation = center + Vec3(best_delta.row(0).transpose());
  r.loss = best_loss;
  r.violations = best_viol;
  r.iters = iter;
  r.converged = converged;
  return r;
}

}  // namespace leap
