#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "leap/checkpoint.hpp"
#include "leap/config.hpp"
#include "leap/container.hpp"
#include "leap/placement.hpp"
#include "leap/synthetic.hpp"
#include "leap/training.hpp"

namespace {

using json = nlohmann::json;
using namespace leap;

struct CommonOpts {
  std::string config;
  std::vector<std::string> sets;
  bool force = false;
};

void add_common(CLI::App* sub, CommonOpts& c) {
  sub->add_option("--config", c.config, "run config (JSON)")->check(CLI::ExistingFile);
  sub->add_option("--set", c.sets, "override a config key, key=value");
  sub->add_flag("--force", c.force, "overwrite existing outputs");
}

RunConfig resolve_config(const CommonOpts& c) {
  RunConfig rc = c.config.empty() ? RunConfig{} : load_config(c.config);
  for (const std::string& kv : c.sets) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos) fail("--set expects key=value, got '" + kv + "'");
    apply_override(rc, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return rc;
}

std::ofstream open_log(const std::string& path, bool force) {
  std::ofstream out;
  if (path.empty()) return out;
  check_overwrite(path, force);
  out.open(path);
  if (!out) fail("cannot open log file: " + path);
  return out;
}

std::string load_trained(LeapModel& model, const std::string& path, const BodyModel& body) {
  std::string stage = load_checkpoint(model, path);
  if (model.n_joints != body.n_joints())
    fail("checkpoint has " + std::to_string(model.n_joints) + " joints, body has " +
         std::to_string(body.n_joints()));
  return stage;
}

void write_json(const json& j, const std::string& path, bool force) {
  std::cout << j.dump(2) << "\n";
  if (path.empty()) return;
  check_overwrite(path, force);
  std::ofstream out(path);
  if (!out) fail("cannot open output file: " + path);
  out << j.dump(2) << "\n";
}

json summary_json(const char* stage, const StageSummary& s) {
  json j{{"stage", stage},
         {"iters", s.iters},
         {"final_loss", s.final_loss},
         {"seconds", s.seconds}};
  if (std::string(stage) == "lbs") {
    j["l1_inv"] = s.l1_inv;
    j["l1_fwd"] = s.l1_fwd;
  }
  return j;
}

// Finite-difference audit of the tape gradients through a full occupancy
// query on a small model. Central differences; a parameter passes when
// |fd - an| / max(|fd|, |an|, 1e-6) < tol. The floor keeps round-off noise
// on true-zero gradients (bias rows feeding batch norm) from registering.
int run_gradcheck(std::uint64_t seed, int trials, int per_tensor, Index points, double h,
                  double tol) {
  BodyModel body = make_synthetic_model(mix_seed(seed, 0xb0d1), 13, 250, 4);
  ModelConfig cfg;
  cfg.shape_feat = 8;
  cfg.pn_hidden = 12;
  cfg.pn_blocks = 1;
  cfg.lbs_point_feat = 10;
  cfg.lbs_pose_feat = 8;
  cfg.lbs_hidden = 12;
  cfg.lbs_blocks = 1;
  cfg.occ_hidden = 12;
  cfg.occ_blocks = 2;
  cfg.bone_code = 6;

  long total = 0, bad = 0;
  long pt_total = 0, pt_bad = 0;
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    std::uint64_t ts = mix_seed(seed, 0x6c0 + static_cast<std::uint64_t>(trial));
    LeapModel model;
    build_model(model, cfg, body.n_joints(), body.parent, ts);
    Rng rng(mix_seed(ts, 0x9d));
    Vec beta(body.n_shape());
    for (Index i = 0; i < beta.size(); ++i) beta(i) = rng.normal();
    PoseState pose = random_pose(body, rng, 0.3, 0.0);
    PoseContext ctx = make_pose_context(body, beta, pose);
    Mat pts(points, 3);
    for (Index i = 0; i < points; ++i)
      pts.row(i) = ctx.posed_verts.row(rng.index(static_cast<std::size_t>(ctx.posed_verts.rows()))) +
                   0.05 * rng.normal3().transpose();

    auto loss_value = [&]() {
      Tape t(false);
      QueryResult q = query_model(model, t, ctx, t.constant(pts), true);
      return sum_all(square(q.occ)).val()(0, 0);
    };

    model.params.zero_grad();
    Tape t(true);
    Var p = t.leaf(pts);
    QueryResult q = query_model(model, t, ctx, p, true);
    t.backward(sum_all(square(q.occ)));
    Mat point_grad = t.grad(p);

    for (int id = 0; id < model.params.size(); ++id) {
      ParamEntry& e = model.params.entry(id);
      Mat analytic = e.grad;
      Index n = e.value.size();
      for (int s = 0; s < per_tensor && s < n; ++s) {
        Index flat = (n <= per_tensor) ? s : static_cast<Index>(rng.index(static_cast<std::size_t>(n)));
        double saved = e.value.data()[flat];
        e.value.data()[flat] = saved + h;
        double lp = loss_value();
        e.value.data()[flat] = saved - h;
        double lm = loss_value();
        e.value.data()[flat] = saved;
        double fd = (lp - lm) / (2.0 * h);
        double an = analytic.data()[flat];
        double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
        ++total;
        worst = std::max(worst, rel);
        if (rel > tol) {
          ++bad;
          std::cout << "  mismatch " << e.name << "[" << flat << "] fd=" << fd << " an=" << an
                    << " rel=" << rel << "\n";
        }
      }
    }
    model.params.zero_grad();

    for (Index i = 0; i < pts.rows(); ++i) {
      for (Index c = 0; c < 3; ++c) {
        double saved = pts(i, c);
        pts(i, c) = saved + h;
        double lp = loss_value();
        pts(i, c) = saved - h;
        double lm = loss_value();
        pts(i, c) = saved;
        double fd = (lp - lm) / (2.0 * h);
        double an = point_grad(i, c);
        double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
        ++pt_total;
        if (rel > tol) ++pt_bad;
      }
    }
  }

  double frac = total == 0 ? 0.0 : static_cast<double>(total - bad) / static_cast<double>(total);
  bool ok = frac >= 0.99 && pt_bad == 0;
  std::cout << "gradcheck: params " << (total - bad) << "/" << total << " within tol ("
            << 100.0 * frac << "%), worst rel " << worst << ", points " << (pt_total - pt_bad)
            << "/" << pt_total << (ok ? " PASS" : " FAIL") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learned articulated occupancy toolkit"};
  app.require_subcommand(1);

  CommonOpts c_gen, c_tl, c_to, c_ev, c_ex, c_pl;

  auto* gen = app.add_subcommand("gen-model", "generate a synthetic body model");
  std::string gen_out, gen_obj;
  add_common(gen, c_gen);
  gen->add_option("--out", gen_out, "body model file")->required();
  gen->add_option("--obj", gen_obj, "also export the template mesh as OBJ");
  gen->callback([&] {
    RunConfig rc = resolve_config(c_gen);
    check_overwrite(gen_out, c_gen.force);
    if (!gen_obj.empty()) check_overwrite(gen_obj, c_gen.force);
    BodyModel body = run_body(rc);
    save_body(body, gen_out);
    if (!gen_obj.empty()) save_obj(TriMesh{body.template_verts, body.faces}, gen_obj);
    std::cout << "body: " << body.n_joints() << " joints, " << body.n_verts() << " vertices, "
              << body.n_shape() << " shape dirs -> " << gen_out << "\n";
  });

  auto* tl = app.add_subcommand("train-lbs", "stage 1: train the skinning weight fields");
  std::string tl_body, tl_out, tl_log;
  add_common(tl, c_tl);
  tl->add_option("--body", tl_body, "body model file")->required()->check(CLI::ExistingFile);
  tl->add_option("--out", tl_out, "checkpoint to write")->required();
  tl->add_option("--log", tl_log, "JSONL metrics log");
  tl->callback([&] {
    RunConfig rc = resolve_config(c_tl);
    check_overwrite(tl_out, c_tl.force);
    std::ofstream log = open_log(tl_log, c_tl.force);
    BodyModel body = load_body(tl_body);
    Vec beta = run_beta(rc, body);
    LeapModel model;
    build_model(model, rc.model, body.n_joints(), body.parent, rc.train.seed);
    std::vector<PoseState> pool = run_pose_pool(body, rc);
    std::vector<PoseState> train = train_split(pool, rc);
    StageSummary s = train_stage_lbs(model, body, beta, train, rc.train, log ? &log : nullptr);
    save_checkpoint(model, "lbs", tl_out);
    std::cout << summary_json("lbs", s).dump(2) << "\n";
  });

  auto* to = app.add_subcommand("train-occ", "stage 2: train the occupancy head");
  std::string to_body, to_init, to_out, to_log;
  add_common(to, c_to);
  to->add_option("--body", to_body, "body model file")->required()->check(CLI::ExistingFile);
  to->add_option("--init", to_init, "stage-1 checkpoint to start from")
      ->required()
      ->check(CLI::ExistingFile);
  to->add_option("--out", to_out, "checkpoint to write")->required();
  to->add_option("--log", to_log, "JSONL metrics log");
  to->callback([&] {
    RunConfig rc = resolve_config(c_to);
    check_overwrite(to_out, c_to.force);
    std::ofstream log = open_log(to_log, c_to.force);
    BodyModel body = load_body(to_body);
    Vec beta = run_beta(rc, body);
    LeapModel model;
    load_trained(model, to_init, body);
    std::vector<PoseState> pool = run_pose_pool(body, rc);
    std::vector<PoseState> train = train_split(pool, rc);
    StageSummary s = train_stage_occupancy(model, body, beta, train, rc.train, log ? &log : nullptr);
    save_checkpoint(model, "occupancy", to_out);
    std::cout << summary_json("occupancy", s).dump(2) << "\n";
  });

  auto* ev = app.add_subcommand("eval", "IOU and weight-field errors on a pose split");
  std::string ev_body, ev_ckpt, ev_out, ev_split = "held";
  add_common(ev, c_ev);
  ev->add_option("--body", ev_body, "body model file")->required()->check(CLI::ExistingFile);
  ev->add_option("--ckpt", ev_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", ev_split, "pose split: held, train or all")
      ->check(CLI::IsMember({"held", "train", "all"}));
  ev->add_option("--out", ev_out, "write the metrics JSON here too");
  ev->callback([&] {
    RunConfig rc = resolve_config(c_ev);
    BodyModel body = load_body(ev_body);
    Vec beta = run_beta(rc, body);
    LeapModel model;
    std::string stage = load_trained(model, ev_ckpt, body);
    std::vector<PoseState> pool = run_pose_pool(body, rc);
    std::vector<PoseState> poses = ev_split == "all"     ? pool
                                   : ev_split == "train" ? train_split(pool, rc)
                                                         : held_split(pool, rc);
    double iou = eval_iou(model, body, beta, poses, rc.eval_points, rc.eval_pad,
                          mix_seed(rc.train.seed, 0xeba1));
    double l1_inv = 0.0, l1_fwd = 0.0;
    eval_weight_l1(model, body, beta, poses, 2048, mix_seed(rc.train.seed, 0xe7a1), l1_inv, l1_fwd);
    write_json(json{{"stage", stage},
                    {"split", ev_split},
                    {"poses", poses.size()},
                    {"points_per_pose", rc.eval_points},
                    {"iou", iou},
                    {"l1_inv", l1_inv},
                    {"l1_fwd", l1_fwd}},
               ev_out, c_ev.force);
  });

  auto* ex = app.add_subcommand("extract", "extract the learned isosurface as OBJ");
  std::string ex_body, ex_ckpt, ex_out;
  int ex_pose = 0, ex_res = 64;
  double ex_pad = 0.2;
  bool ex_rest = false;
  add_common(ex, c_ex);
  ex->add_option("--body", ex_body, "body model file")->required()->check(CLI::ExistingFile);
  ex->add_option("--ckpt", ex_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  ex->add_option("--out", ex_out, "output OBJ")->required();
  ex->add_option("--pose", ex_pose, "pose index into the run pool");
  ex->add_flag("--rest", ex_rest, "use the rest pose instead of --pose");
  ex->add_option("--res", ex_res, "marching-cubes grid resolution")->check(CLI::PositiveNumber);
  ex->add_option("--pad", ex_pad, "bounding-box padding fraction");
  ex->callback([&] {
    RunConfig rc = resolve_config(c_ex);
    check_overwrite(ex_out, c_ex.force);
    BodyModel body = load_body(ex_body);
    Vec beta = run_beta(rc, body);
    LeapModel model;
    load_trained(model, ex_ckpt, body);
    PoseState pose;
    if (ex_rest) {
      pose.axis_angle = Mat::Zero(body.n_joints(), 3);
    } else {
      std::vector<PoseState> pool = run_pose_pool(body, rc);
      if (ex_pose < 0 || ex_pose >= static_cast<int>(pool.size()))
        fail("--pose out of range, pool has " + std::to_string(pool.size()));
      pose = pool[static_cast<std::size_t>(ex_pose)];
    }
    PoseContext ctx = make_pose_context(body, beta, pose);
    TriMesh mesh = extract_isosurface(model, ctx, ex_res, 0.5, ex_pad);
    save_obj(mesh, ex_out);
    std::cout << "isosurface: " << mesh.num_vertices() << " vertices, " << mesh.num_faces()
              << " faces -> " << ex_out << "\n";
  });

  auto* pl = app.add_subcommand("place", "optimize the body translation out of a scene mesh");
  std::string pl_body, pl_ckpt, pl_scene, pl_out, pl_obj;
  int pl_pose = 0;
  std::vector<double> pl_init;
  PlacementConfig pc;
  add_common(pl, c_pl);
  pl->add_option("--body", pl_body, "body model file")->required()->check(CLI::ExistingFile);
  pl->add_option("--ckpt", pl_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  pl->add_option("--scene", pl_scene, "obstacle mesh (OBJ)")->required()->check(CLI::ExistingFile);
  pl->add_option("--out", pl_out, "write the placement JSON here too");
  pl->add_option("--obj", pl_obj, "export the placed posed mesh as OBJ");
  pl->add_option("--pose", pl_pose, "pose index into the run pool");
  pl->add_option("--init", pl_init, "initial root translation x y z")->expected(3);
  pl->add_option("--lr", pc.lr, "step size");
  pl->add_option("--iters", pc.max_iters, "iteration cap")->check(CLI::PositiveNumber);
  pl->add_option("--samples", pc.samples, "scene surface samples before offsetting");
  pl->add_option("--seed", pc.seed, "sampling seed");
  pl->callback([&] {
    RunConfig rc = resolve_config(c_pl);
    BodyModel body = load_body(pl_body);
    Vec beta = run_beta(rc, body);
    LeapModel model;
    load_trained(model, pl_ckpt, body);
    TriMesh scene = load_obj(pl_scene);
    Mat probes = offset_scene_points(scene, pc.samples, pc.depths, pc.seed);
    std::vector<PoseState> pool = run_pose_pool(body, rc);
    if (pl_pose < 0 || pl_pose >= static_cast<int>(pool.size()))
      fail("--pose out of range, pool has " + std::to_string(pool.size()));
    PoseState pose = pool[static_cast<std::size_t>(pl_pose)];
    if (!pl_init.empty()) pose.t0 = Vec3(pl_init[0], pl_init[1], pl_init[2]);
    PoseContext ctx = make_pose_context(body, beta, pose);
    Index before = count_violations(model, ctx, pose.t0, probes);
    PlacementResult res = optimize_translation(model, body, beta, pose, probes, pc);
    if (!pl_obj.empty()) {
      check_overwrite(pl_obj, c_pl.force);
      PoseState placed = pose;
      placed.t0 = res.translation;
      save_obj(TriMesh{posed_vertices(body, beta, placed), body.faces}, pl_obj);
    }
    write_json(json{{"initial_translation", {pose.t0.x(), pose.t0.y(), pose.t0.z()}},
                    {"translation", {res.translation.x(), res.translation.y(), res.translation.z()}},
                    {"initial_violations", before},
                    {"violations", res.violations},
                    {"probes", probes.rows()},
                    {"loss", res.loss},
                    {"iters", res.iters},
                    {"converged", res.converged}},
               pl_out, c_pl.force);
  });

  auto* gc = app.add_subcommand("gradcheck", "finite-difference audit of the tape gradients");
  std::uint64_t gc_seed = 1;
  int gc_trials = 1, gc_samples = 4, gc_points = 6;
  double gc_h = 1e-4, gc_tol = 1e-4;
  int gc_rc = 0;
  gc->add_option("--seed", gc_seed, "base seed");
  gc->add_option("--trials", gc_trials, "independently seeded models")->check(CLI::PositiveNumber);
  gc->add_option("--samples", gc_samples, "checked entries per tensor")->check(CLI::PositiveNumber);
  gc->add_option("--points", gc_points, "query batch size")->check(CLI::PositiveNumber);
  gc->add_option("--step", gc_h, "central-difference step");
  gc->add_option("--tol", gc_tol, "relative error tolerance");
  gc->callback([&] { gc_rc = run_gradcheck(gc_seed, gc_trials, gc_samples, gc_points, gc_h, gc_tol); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return gc_rc;
}
