#include "leap/training.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>

#include "json.hpp"

namespace leap {
namespace {

using nlohmann::json;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void emit(std::ostream* log, const json& j) {
  if (log != nullptr) *log << j.dump() << "\n";
}

Mat uniform_box(Rng& rng, const Vec3& lo, const Vec3& hi, Index n) {
  Mat pts(n, 3);
  for (Index i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) pts(i, a) = rng.uniform(lo[a], hi[a]);
  return pts;
}

Mat near_surface(const TriMesh& mesh, Rng& rng, double sigma, Index n) {
  Mat pts = sample_surface(mesh, static_cast<std::size_t>(n), rng.bits());
  for (Index i = 0; i < n; ++i) pts.row(i) += sigma * rng.normal3().transpose();
  return pts;
}

Vec occupancy_labels(const TriMesh& mesh, const Mat& pts) {
  std::vector<std::uint8_t> in = InsideTester(mesh).contains_batch(pts);
  Vec y(pts.rows());
  for (Index i = 0; i < pts.rows(); ++i) y(i) = in[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  return y;
}

Mat vstack(const Mat& a, const Mat& b) {
  Mat out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

// Minibatch gather: count rows drawn with replacement from [lo, hi).
std::vector<Index> draw(Rng& rng, Index lo, Index hi, Index count) {
  std::vector<Index> idx(static_cast<std::size_t>(count));
  for (auto& i : idx)
    i = lo + static_cast<Index>(rng.index(static_cast<std::size_t>(hi - lo)));
  return idx;
}

Mat take(const Mat& src, const std::vector<Index>& idx) {
  Mat out(static_cast<Index>(idx.size()), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = src.row(idx[i]);
  return out;
}

Vec take(const Vec& src, const std::vector<Index>& idx) {
  Vec out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = src(idx[i]);
  return out;
}

const char* kFrozenPrefixes[] = {"lbs_can", "lbs_posed", "inv_pose", "fwd_net", "inv_net"};

double lr_at(const TrainConfig& tc, int iter, int total) {
  if (tc.lr_min < 0.0 || total <= 1) return tc.lr;
  double t = static_cast<double>(iter) / static_cast<double>(total - 1);
  return tc.lr_min + 0.5 * (tc.lr - tc.lr_min) * (1.0 + std::cos(M_PI * t));
}

// Replaces the exponential running statistics (horizon ~1/(1-momentum)
// batches) with an arithmetic average over fresh forward passes, so stored
// stats stop depending on which poses the last few iterations happened to
// draw.
void recalibrate_stats(StatsStore& ss, const std::vector<std::string>& prefixes, int passes,
                       const std::function<void()>& forward_pass) {
  std::vector<int> ids;
  for (int i = 0; i < ss.size(); ++i)
    for (const std::string& p : prefixes)
      if (ss.name(i).rfind(p, 0) == 0) {
        ids.push_back(i);
        break;
      }
  if (ids.empty()) return;
  for (int pass = 1; pass <= passes; ++pass) {
    double m = static_cast<double>(pass - 1) / static_cast<double>(pass);
    for (int i : ids) ss.entry(i).momentum = m;
    forward_pass();
  }
  for (int i : ids) ss.entry(i).momentum = 0.9;
}

}  // namespace

std::vector<PoseState> sample_pose_pool(const BodyModel& m, int count, double angle_scale,
                                        double t0_scale, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x90525));
  std::vector<PoseState> poses;
  poses.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) poses.push_back(random_pose(m, rng, angle_scale, t0_scale));
  return poses;
}

std::vector<PoseBank> build_banks(const BodyModel& m, const Vec& beta,
                                  const std::vector<PoseState>& poses, const TrainConfig& tc) {
  std::vector<PoseBank> banks(poses.size());
  Rng rng(mix_seed(tc.seed, 0xba9c5));
  for (std::size_t pi = 0; pi < poses.size(); ++pi) {
    PoseBank& b = banks[pi];
    b.pose = poses[pi];
    b.pose.t0 = Vec3::Zero();
    b.ctx = make_pose_context(m, beta, b.pose);

    TriMesh posed{b.ctx.posed_verts, m.faces};
    Vec3 lo, hi;
    padded_bounds(posed.vertices, tc.pad, lo, hi);
    b.inv_pts = vstack(uniform_box(rng, lo, hi, tc.bank_uniform),
                       near_surface(posed, rng, tc.sigma, tc.bank_surface));
    b.inv_w = pseudo_gt_weights(m.weights, b.ctx.posed_verts, b.inv_pts);
    b.inv_occ = occupancy_labels(posed, b.inv_pts);
    b.mapped_pts = canonicalize_plain(b.inv_w, b.ctx.b_local, b.inv_pts);
    b.mapped_w = pseudo_gt_weights(m.weights, b.ctx.can_verts, b.mapped_pts);

    TriMesh canon{b.ctx.can_verts, m.faces};
    Vec3 clo, chi;
    padded_bounds(canon.vertices, tc.pad, clo, chi);
    Index cu = tc.bank_canonical / 2;
    b.can_pts = vstack(uniform_box(rng, clo, chi, cu),
                       near_surface(canon, rng, tc.sigma, tc.bank_canonical - cu));
    b.can_w = pseudo_gt_weights(m.weights, b.ctx.can_verts, b.can_pts);
    b.can_occ = occupancy_labels(canon, b.can_pts);
  }
  return banks;
}

StageSummary train_stage_lbs(LeapModel& model, const BodyModel& body, const Vec& beta,
                             const std::vector<PoseState>& poses, const TrainConfig& tc,
                             std::ostream* log) {
  StageSummary s;
  double t_start = now_seconds();
  std::vector<PoseBank> banks = build_banks(body, beta, poses, tc);
  Rng rng(mix_seed(tc.seed, 0x57a6e1));
  Index bank_total = tc.bank_uniform + tc.bank_surface;

  for (int iter = 0; iter < tc.lbs_iters; ++iter) {
    PoseBank& b = banks[rng.index(banks.size())];

    std::vector<Index> inv_idx = draw(rng, 0, tc.bank_uniform, tc.inv_uniform);
    for (Index i : draw(rng, tc.bank_uniform, bank_total, tc.inv_surface)) inv_idx.push_back(i);
    Mat xi = take(b.inv_pts, inv_idx);
    Mat wi = take(b.inv_w, inv_idx);

    Index can_total = b.can_pts.rows(), can_half = tc.bank_canonical / 2;
    std::vector<Index> fwd_idx = draw(rng, 0, can_half, tc.fwd_uniform);
    for (Index i : draw(rng, can_half, can_total, tc.fwd_surface)) fwd_idx.push_back(i);
    Mat xf = take(b.can_pts, fwd_idx);
    Mat wf = take(b.can_w, fwd_idx);
    std::vector<Index> map_idx = draw(rng, 0, bank_total, tc.fwd_mapped);
    xf = vstack(xf, take(b.mapped_pts, map_idx));
    wf = vstack(wf, take(b.mapped_w, map_idx));

    Tape t(true);
    Var fwd = forward_cond(model, t, b.ctx);
    Var inv = inverse_cond(model, t, b.ctx, fwd);
    Var w_inv = inverse_weights(model, t, t.constant(xi), inv, true);
    Var l_inv = mean_all(abs_val(sub(w_inv, t.constant(wi))));
    Var w_fwd = forward_weights(model, t, t.constant(xf), fwd, true);
    Var l_fwd = mean_all(abs_val(sub(w_fwd, t.constant(wf))));
    Var loss = add(l_inv, l_fwd);
    t.backward(loss);
    model.params.adam_step(lr_at(tc, iter, tc.lbs_iters));

    s.final_loss = loss.val()(0, 0);
    if (iter % tc.log_every == 0 || iter + 1 == tc.lbs_iters)
      emit(log, json{{"stage", "lbs"},
                     {"iter", iter},
                     {"loss", s.final_loss},
                     {"l1_inv", l_inv.val()(0, 0)},
                     {"l1_fwd", l_fwd.val()(0, 0)}});
  }

  recalibrate_stats(model.stats, {"fwd_net", "inv_net"}, tc.bn_passes, [&] {
    PoseBank& b = banks[rng.index(banks.size())];
    std::vector<Index> inv_idx = draw(rng, 0, tc.bank_uniform, tc.inv_uniform);
    for (Index i : draw(rng, tc.bank_uniform, bank_total, tc.inv_surface)) inv_idx.push_back(i);
    Index can_total = b.can_pts.rows(), can_half = tc.bank_canonical / 2;
    std::vector<Index> fwd_idx = draw(rng, 0, can_half, tc.fwd_uniform);
    for (Index i : draw(rng, can_half, can_total, tc.fwd_surface)) fwd_idx.push_back(i);
    Mat xf = vstack(take(b.can_pts, fwd_idx), take(b.mapped_pts, draw(rng, 0, bank_total, tc.fwd_mapped)));

    Tape t(false);
    Var fwd = forward_cond(model, t, b.ctx);
    Var inv = inverse_cond(model, t, b.ctx, fwd);
    inverse_weights(model, t, t.constant(take(b.inv_pts, inv_idx)), inv, true);
    forward_weights(model, t, t.constant(xf), fwd, true);
  });

  eval_weight_l1(model, body, beta, poses, 2048, mix_seed(tc.seed, 0xe7a1), s.l1_inv, s.l1_fwd);
  s.iters = tc.lbs_iters;
  s.seconds = now_seconds() - t_start;
  emit(log, json{{"stage", "lbs"},
                 {"event", "summary"},
                 {"iters", s.iters},
                 {"l1_inv", s.l1_inv},
                 {"l1_fwd", s.l1_fwd},
                 {"seconds", s.seconds}});
  return s;
}

StageSummary train_stage_occupancy(LeapModel& model, const BodyModel& body, const Vec& beta,
                                   const std::vector<PoseState>& poses, const TrainConfig& tc,
                                   std::ostream* log) {
  StageSummary s;
  double t_start = now_seconds();
  std::vector<PoseBank> banks = build_banks(body, beta, poses, tc);
  std::vector<FrozenLbs> frozen(banks.size());
  for (std::size_t i = 0; i < banks.size(); ++i)
    frozen[i] = frozen_lbs_eval(model, banks[i].ctx, banks[i].inv_pts);
  for (const char* p : kFrozenPrefixes) model.params.set_frozen(p, true);

  Rng rng(mix_seed(tc.seed, 0x0cc7));
  Index bank_total = tc.bank_uniform + tc.bank_surface;
  for (int iter = 0; iter < tc.occ_iters; ++iter) {
    std::size_t bi = rng.index(banks.size());
    PoseBank& b = banks[bi];
    FrozenLbs& f = frozen[bi];

    std::vector<Index> pidx = draw(rng, 0, tc.bank_uniform, tc.occ_uniform);
    for (Index i : draw(rng, tc.bank_uniform, bank_total, tc.occ_surface)) pidx.push_back(i);
    std::vector<Index> cidx = draw(rng, 0, b.can_pts.rows(), tc.occ_canonical);

    Mat pts = vstack(take(f.canonical, pidx), take(b.can_pts, cidx));
    Mat w = vstack(take(f.w, pidx), take(b.can_w, cidx));
    Vec cyc(pts.rows());
    cyc << take(f.cycle, pidx), Vec::Zero(static_cast<Index>(cidx.size()));
    Vec y(pts.rows());
    y << take(b.inv_occ, pidx), take(b.can_occ, cidx);

    Tape t(true);
    Var z = global_code(model, t, b.ctx);
    Var occ = occupancy_head(model, t, z, t.constant(pts), t.constant(w), t.constant(cyc), true);
    Var loss = mean_all(square(sub(occ, t.constant(y))));
    t.backward(loss);
    model.params.adam_step(lr_at(tc, iter, tc.occ_iters));

    s.final_loss = loss.val()(0, 0);
    if (iter % tc.log_every == 0 || iter + 1 == tc.occ_iters)
      emit(log, json{{"stage", "occ"}, {"iter", iter}, {"loss", s.final_loss}});
  }

  recalibrate_stats(model.stats, {"occ_net"}, tc.bn_passes, [&] {
    std::size_t bi = rng.index(banks.size());
    PoseBank& b = banks[bi];
    FrozenLbs& f = frozen[bi];
    std::vector<Index> pidx = draw(rng, 0, tc.bank_uniform, tc.occ_uniform);
    for (Index i : draw(rng, tc.bank_uniform, bank_total, tc.occ_surface)) pidx.push_back(i);
    std::vector<Index> cidx = draw(rng, 0, b.can_pts.rows(), tc.occ_canonical);
    Mat pts = vstack(take(f.canonical, pidx), take(b.can_pts, cidx));
    Mat w = vstack(take(f.w, pidx), take(b.can_w, cidx));
    Vec cyc(pts.rows());
    cyc << take(f.cycle, pidx), Vec::Zero(static_cast<Index>(cidx.size()));

    Tape t(false);
    Var z = global_code(model, t, b.ctx);
    occupancy_head(model, t, z, t.constant(pts), t.constant(w), t.constant(cyc), true);
  });

  for (const char* p : kFrozenPrefixes) model.params.set_frozen(p, false);
  s.iters = tc.occ_iters;
  s.seconds = now_seconds() - t_start;
  emit(log, json{{"stage", "occ"},
                 {"event", "summary"},
                 {"iters", s.iters},
                 {"final_loss", s.final_loss},
                 {"seconds", s.seconds}});
  return s;
}

double eval_iou(LeapModel& model, const BodyModel& body, const Vec& beta,
                const std::vector<PoseState>& poses, Index points_per_pose, double pad,
                std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x10f));
  double inter = 0.0, uni = 0.0;
  for (const PoseState& pose : poses) {
    PoseContext ctx = make_pose_context(body, beta, pose);
    Mat verts = ctx.posed_verts;
    verts.rowwise() += ctx.t0.transpose();
    TriMesh posed{verts, body.faces};
    Vec3 lo, hi;
    padded_bounds(verts, pad, lo, hi);
    Index half = points_per_pose / 2;
    Mat pts = vstack(uniform_box(rng, lo, hi, points_per_pose - half),
                     near_surface(posed, rng, 0.1, half));
    std::vector<std::uint8_t> truth = InsideTester(posed).contains_batch(pts);
    Vec occ = query_occupancy(model, ctx, pts);
    for (Index i = 0; i < pts.rows(); ++i) {
      bool gt = truth[static_cast<std::size_t>(i)] != 0;
      bool pr = occ(i) >= 0.5;
      inter += gt && pr ? 1.0 : 0.0;
      uni += gt || pr ? 1.0 : 0.0;
    }
  }
  return uni == 0.0 ? 1.0 : inter / uni;
}

void eval_weight_l1(LeapModel& model, const BodyModel& body, const Vec& beta,
                    const std::vector<PoseState>& poses, Index points_per_pose,
                    std::uint64_t seed, double& l1_inv, double& l1_fwd) {
  Rng rng(mix_seed(seed, 0x3c9));
  double sum_inv = 0.0, sum_fwd = 0.0;
  for (const PoseState& pose : poses) {
    PoseState local = pose;
    local.t0 = Vec3::Zero();
    PoseContext ctx = make_pose_context(body, beta, local);

    TriMesh posed{ctx.posed_verts, body.faces};
    Vec3 lo, hi;
    padded_bounds(posed.vertices, 0.1, lo, hi);
    Index half = points_per_pose / 2;
    Mat xi = vstack(uniform_box(rng, lo, hi, half),
                    near_surface(posed, rng, 0.1, points_per_pose - half));
    Mat wi = pseudo_gt_weights(body.weights, ctx.posed_verts, xi);

    TriMesh canon{ctx.can_verts, body.faces};
    Vec3 clo, chi;
    padded_bounds(canon.vertices, 0.1, clo, chi);
    Mat xf = vstack(uniform_box(rng, clo, chi, half),
                    near_surface(canon, rng, 0.1, points_per_pose - half));
    Mat wf = pseudo_gt_weights(body.weights, ctx.can_verts, xf);

    Tape t(false);
    Var fwd = forward_cond(model, t, ctx);
    Var inv = inverse_cond(model, t, ctx, fwd);
    Var w_inv = inverse_weights(model, t, t.constant(xi), inv, false);
    Var w_fwd = forward_weights(model, t, t.constant(xf), fwd, false);
    sum_inv += (w_inv.val() - wi).cwiseAbs().mean();
    sum_fwd += (w_fwd.val() - wf).cwiseAbs().mean();
  }
  l1_inv = sum_inv / static_cast<double>(poses.size());
  l1_fwd = sum_fwd / static_cast<double>(poses.size());
}

double chamfer_x1e4(const TriMesh& a, const TriMesh& b, Index samples, std::uint64_t seed) {
  Mat pa = sample_surface(a, static_cast<std::size_t>(samples), seed);
  Mat pb = sample_surface(b, static_cast<std::size_t>(samples), seed);
  auto direction = [](const Mat& from, const Mat& to) {
    Vec best(from.rows());
    parallel_for(from.rows(), [&](Index begin, Index end) {
      for (Index i = begin; i < end; ++i)
        best(i) = (to.rowwise() - from.row(i)).rowwise().squaredNorm().minCoeff();
    });
    return best.mean();
  };
  return 1e4 * 0.5 * (direction(pa, pb) + direction(pb, pa));
}

}  // namespace leap
