#include "helpers.hpp"

#include <unistd.h>

#include <cstdlib>
#include <filesystem>

namespace leap::test {

TempDir::TempDir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "leap_test_XXXXXX").string();
  std::vector<char> buf(tmpl.begin(), tmpl.end());
  buf.push_back('\0');
  if (mkdtemp(buf.data()) == nullptr) fail("mkdtemp failed");
  path_ = buf.data();
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

Mat random_mat(Rng& rng, Index rows, Index cols, double scale) {
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

double max_grad_error(const LossFn& f, const std::vector<Mat>& inputs, double h, double floor) {
  Tape t(true);
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Mat& m : inputs) vars.push_back(t.leaf(m));
  t.backward(f(t, vars));
  std::vector<Mat> grads;
  grads.reserve(vars.size());
  for (Var v : vars) grads.push_back(t.grad(v));

  auto value = [&](const std::vector<Mat>& xs) {
    Tape tt(false);
    std::vector<Var> vs;
    vs.reserve(xs.size());
    for (const Mat& m : xs) vs.push_back(tt.constant(m));
    Var out = f(tt, vs);
    require(out.rows() == 1 && out.cols() == 1, "loss must be scalar");
    return out.val()(0, 0);
  };

  double worst = 0.0;
  std::vector<Mat> xs = inputs;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    for (Index k = 0; k < xs[j].size(); ++k) {
      double saved = xs[j].data()[k];
      xs[j].data()[k] = saved + h;
      double lp = value(xs);
      xs[j].data()[k] = saved - h;
      double lm = value(xs);
      xs[j].data()[k] = saved;
      double fd = (lp - lm) / (2.0 * h);
      double an = grads[j].data()[k];
      double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

double winding_number(const TriMesh& mesh, const Vec3& p) {
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    Vec3 a = mesh.vertices.row(f[0]).transpose() - p;
    Vec3 b = mesh.vertices.row(f[1]).transpose() - p;
    Vec3 c = mesh.vertices.row(f[2]).transpose() - p;
    double la = a.norm(), lb = b.norm(), lc = c.norm();
    double num = a.dot(b.cross(c));
    double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    total += 2.0 * std::atan2(num, den);
  }
  return total / (4.0 * M_PI);
}

BodyModel tiny_body(std::uint64_t seed) {
  return make_synthetic_model(seed, 13, 250, 4);
}

ModelConfig tiny_model_config() {
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
  return cfg;
}

FdAudit fd_audit_model(std::uint64_t seed, int per_tensor, Index points, double h, double tol) {
  BodyModel body = tiny_body(mix_seed(seed, 0xb0d1));
  LeapModel model;
  build_model(model, tiny_model_config(), body.n_joints(), body.parent, seed);
  Rng rng(mix_seed(seed, 0x9d));
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

  FdAudit out;
  for (int id = 0; id < model.params.size(); ++id) {
    ParamEntry& e = model.params.entry(id);
    Mat analytic = e.grad;
    Index n = e.value.size();
    for (int s = 0; s < per_tensor && s < n; ++s) {
      Index flat =
          (n <= per_tensor) ? s : static_cast<Index>(rng.index(static_cast<std::size_t>(n)));
      double saved = e.value.data()[flat];
      e.value.data()[flat] = saved + h;
      double lp = loss_value();
      e.value.data()[flat] = saved - h;
      double lm = loss_value();
      e.value.data()[flat] = saved;
      double fd = (lp - lm) / (2.0 * h);
      double an = analytic.data()[flat];
      double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      ++out.checked;
      out.worst = std::max(out.worst, rel);
      if (rel > tol) ++out.bad;
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
      ++out.pt_checked;
      if (rel > tol) ++out.pt_bad;
    }
  }
  return out;
}

}  // namespace leap::test
