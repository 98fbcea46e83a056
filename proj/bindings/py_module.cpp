#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <memory>

#include "leap/checkpoint.hpp"
#include "leap/config.hpp"
#include "leap/placement.hpp"
#include "leap/synthetic.hpp"
#include "leap/training.hpp"

namespace py = pybind11;
using namespace leap;

namespace {

PoseState make_pose(const BodyModel& body, const Mat& axis_angle, const Vec3& t0) {
  require(axis_angle.rows() == body.n_joints() && axis_angle.cols() == 3,
          "axis_angle must be [n_joints x 3]");
  PoseState p;
  p.axis_angle = axis_angle;
  p.t0 = t0;
  return p;
}

py::array_t<int> faces_array(const std::vector<std::array<int, 3>>& faces) {
  py::array_t<int> out({static_cast<py::ssize_t>(faces.size()), py::ssize_t(3)});
  auto r = out.mutable_unchecked<2>();
  for (py::ssize_t i = 0; i < r.shape(0); ++i)
    for (py::ssize_t j = 0; j < 3; ++j)
      r(i, j) = faces[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return out;
}

std::vector<std::array<int, 3>> faces_from_array(const py::array_t<int>& faces) {
  auto r = faces.unchecked<2>();
  require(r.shape(1) == 3, "faces must be [F x 3]");
  std::vector<std::array<int, 3>> out(static_cast<std::size_t>(r.shape(0)));
  for (py::ssize_t i = 0; i < r.shape(0); ++i)
    out[static_cast<std::size_t>(i)] = {r(i, 0), r(i, 1), r(i, 2)};
  return out;
}

std::vector<PoseState> pose_list(const BodyModel& body, const std::vector<Mat>& axis_angles,
                                 const std::vector<Vec3>& t0s) {
  require(axis_angles.size() == t0s.size(), "axis_angles and t0s must pair up");
  std::vector<PoseState> out;
  out.reserve(axis_angles.size());
  for (std::size_t i = 0; i < axis_angles.size(); ++i)
    out.push_back(make_pose(body, axis_angles[i], t0s[i]));
  return out;
}

struct PyModel {
  LeapModel model;
  std::string stage = "untrained";
};

RunConfig config_from_json(const std::string& text) {
  return text.empty() ? RunConfig{} : parse_config(text);
}

py::dict summary_dict(const StageSummary& s) {
  py::dict d;
  d["iters"] = s.iters;
  d["final_loss"] = s.final_loss;
  d["l1_inv"] = s.l1_inv;
  d["l1_fwd"] = s.l1_fwd;
  d["seconds"] = s.seconds;
  return d;
}

StageSummary run_stage(PyModel& pm, const BodyModel& body, const Vec& beta,
                       const std::vector<Mat>& axis_angles, const std::vector<Vec3>& t0s,
                       const std::string& config, const std::string& log_path, bool occupancy) {
  RunConfig rc = config_from_json(config);
  std::vector<PoseState> poses = pose_list(body, axis_angles, t0s);
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) fail("cannot open log file: " + log_path);
  }
  std::ostream* lp = log ? &log : nullptr;
  StageSummary s;
  {
    py::gil_scoped_release release;
    s = occupancy ? train_stage_occupancy(pm.model, body, beta, poses, rc.train, lp)
                  : train_stage_lbs(pm.model, body, beta, poses, rc.train, lp);
  }
  pm.stage = occupancy ? "occupancy" : "lbs";
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "learned articulated occupancy of people";

  py::class_<BodyModel>(m, "Body")
      .def_static(
          "synthetic",
          [](std::uint64_t seed, Index joints, Index verts, Index shapes) {
            return make_synthetic_model(seed, joints, verts, shapes);
          },
          py::arg("seed"), py::arg("joints") = 16, py::arg("verts") = 600, py::arg("shapes") = 8)
      .def_static("load", &load_body, py::arg("path"))
      .def("save", &save_body, py::arg("path"))
      .def_property_readonly("n_joints", &BodyModel::n_joints)
      .def_property_readonly("n_verts", &BodyModel::n_verts)
      .def_property_readonly("n_shape", &BodyModel::n_shape)
      .def_property_readonly("vertices", [](const BodyModel& b) { return b.template_verts; })
      .def_property_readonly("faces", [](const BodyModel& b) { return faces_array(b.faces); })
      .def_property_readonly("parent", [](const BodyModel& b) { return b.parent; })
      .def(
          "joints",
          [](const BodyModel& b, const Vec& beta) {
            return joint_locations(b, shaped_template(b, beta));
          },
          py::arg("beta"))
      .def(
          "canonical_vertices",
          [](const BodyModel& b, const Vec& beta, const Mat& axis_angle) {
            return canonical_vertices(b, beta, make_pose(b, axis_angle, Vec3::Zero()));
          },
          py::arg("beta"), py::arg("axis_angle"))
      .def(
          "posed_vertices",
          [](const BodyModel& b, const Vec& beta, const Mat& axis_angle, const Vec3& t0) {
            return posed_vertices(b, beta, make_pose(b, axis_angle, t0));
          },
          py::arg("beta"), py::arg("axis_angle"), py::arg("t0") = Vec3(Vec3::Zero()))
      .def(
          "random_pose",
          [](const BodyModel& b, std::uint64_t seed, double angle_scale) {
            Rng rng(seed);
            return random_pose(b, rng, angle_scale, 0.0).axis_angle;
          },
          py::arg("seed"), py::arg("angle_scale") = 0.35);

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const BodyModel& body, std::uint64_t seed, const std::string& config) {
             auto pm = std::make_unique<PyModel>();
             RunConfig rc = config_from_json(config);
             build_model(pm->model, rc.model, body.n_joints(), body.parent, seed);
             return pm;
           }),
           py::arg("body"), py::arg("seed") = 1, py::arg("config") = std::string())
      .def_static("load",
                  [](const std::string& path) {
                    auto pm = std::make_unique<PyModel>();
                    pm->stage = load_checkpoint(pm->model, path);
                    return pm;
                  })
      .def("save",
           [](const PyModel& pm, const std::string& path) {
             save_checkpoint(pm.model, pm.stage == "untrained" ? "lbs" : pm.stage, path);
           })
      .def_property_readonly("stage", [](const PyModel& pm) { return pm.stage; })
      .def_property_readonly("n_params",
                             [](const PyModel& pm) { return pm.model.params.scalar_count(); })
      .def(
          "query_occupancy",
          [](PyModel& pm, const BodyModel& body, const Vec& beta, const Mat& axis_angle,
             const Vec3& t0, const Mat& pts) {
            PoseContext ctx = make_pose_context(body, beta, make_pose(body, axis_angle, t0));
            py::gil_scoped_release release;
            return query_occupancy(pm.model, ctx, pts);
          },
          py::arg("body"), py::arg("beta"), py::arg("axis_angle"), py::arg("t0"), py::arg("pts"))
      .def(
          "lbs_query",
          [](PyModel& pm, const BodyModel& body, const Vec& beta, const Mat& axis_angle,
             const Vec3& t0, const Mat& pts) {
            PoseContext ctx = make_pose_context(body, beta, make_pose(body, axis_angle, t0));
            Mat local = pts;
            local.rowwise() -= ctx.t0.transpose();
            FrozenLbs f = frozen_lbs_eval(pm.model, ctx, local);
            return py::make_tuple(f.w, f.canonical, f.cycle);
          },
          py::arg("body"), py::arg("beta"), py::arg("axis_angle"), py::arg("t0"), py::arg("pts"))
      .def(
          "extract",
          [](PyModel& pm, const BodyModel& body, const Vec& beta, const Mat& axis_angle,
             const Vec3& t0, int res, double pad) {
            PoseContext ctx = make_pose_context(body, beta, make_pose(body, axis_angle, t0));
            TriMesh mesh;
            {
              py::gil_scoped_release release;
              mesh = extract_isosurface(pm.model, ctx, res, 0.5, pad);
            }
            return py::make_tuple(mesh.vertices, faces_array(mesh.faces));
          },
          py::arg("body"), py::arg("beta"), py::arg("axis_angle"), py::arg("t0"), py::arg("res") = 48,
          py::arg("pad") = 0.2);

  m.def("default_config", [] { return config_to_json(RunConfig{}); });

  m.def(
      "train_lbs",
      [](PyModel& pm, const BodyModel& body, const Vec& beta, const std::vector<Mat>& axis_angles,
         const std::vector<Vec3>& t0s, const std::string& config, const std::string& log_path) {
        return summary_dict(run_stage(pm, body, beta, axis_angles, t0s, config, log_path, false));
      },
      py::arg("model"), py::arg("body"), py::arg("beta"), py::arg("axis_angles"), py::arg("t0s"),
      py::arg("config") = std::string(), py::arg("log_path") = std::string());

  m.def(
      "train_occ",
      [](PyModel& pm, const BodyModel& body, const Vec& beta, const std::vector<Mat>& axis_angles,
         const std::vector<Vec3>& t0s, const std::string& config, const std::string& log_path) {
        return summary_dict(run_stage(pm, body, beta, axis_angles, t0s, config, log_path, true));
      },
      py::arg("model"), py::arg("body"), py::arg("beta"), py::arg("axis_angles"), py::arg("t0s"),
      py::arg("config") = std::string(), py::arg("log_path") = std::string());

  m.def(
      "eval_iou",
      [](PyModel& pm, const BodyModel& body, const Vec& beta, const std::vector<Mat>& axis_angles,
         const std::vector<Vec3>& t0s, Index points_per_pose, double pad, std::uint64_t seed) {
        std::vector<PoseState> poses = pose_list(body, axis_angles, t0s);
        py::gil_scoped_release release;
        return eval_iou(pm.model, body, beta, poses, points_per_pose, pad, seed);
      },
      py::arg("model"), py::arg("body"), py::arg("beta"), py::arg("axis_angles"), py::arg("t0s"),
      py::arg("points_per_pose") = 4096, py::arg("pad") = 0.1, py::arg("seed") = 1);

  m.def(
      "place",
      [](PyModel& pm, const BodyModel& body, const Vec& beta, const Mat& axis_angle,
         const Vec3& t0, const Mat& scene_verts, const py::array_t<int>& scene_faces, double lr,
         int max_iters, Index samples, std::uint64_t seed) {
        TriMesh scene{scene_verts, faces_from_array(scene_faces)};
        PlacementConfig pc;
        pc.lr = lr;
        pc.max_iters = max_iters;
        pc.samples = samples;
        pc.seed = seed;
        PoseState pose = make_pose(body, axis_angle, t0);
        py::dict out;
        Mat probes;
        PlacementResult res;
        Index before = 0;
        {
          py::gil_scoped_release release;
          probes = offset_scene_points(scene, pc.samples, pc.depths, pc.seed);
          PoseContext ctx = make_pose_context(body, beta, pose);
          before = count_violations(pm.model, ctx, pose.t0, probes);
          res = optimize_translation(pm.model, body, beta, pose, probes, pc);
        }
        out["translation"] = Vec3(res.translation);
        out["initial_violations"] = before;
        out["violations"] = res.violations;
        out["loss"] = res.loss;
        out["iters"] = res.iters;
        out["converged"] = res.converged;
        return out;
      },
      py::arg("model"), py::arg("body"), py::arg("beta"), py::arg("axis_angle"), py::arg("t0"),
      py::arg("scene_verts"), py::arg("scene_faces"), py::arg("lr") = 0.01,
      py::arg("max_iters") = 1000, py::arg("samples") = 512, py::arg("seed") = 7);
}
