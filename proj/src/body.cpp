#include "leap/body.hpp"

#include <cmath>

#include "leap/container.hpp"

namespace leap {

using RowMat3 = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;
using RowMatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

Mat3 rodrigues(const Vec3& axis_angle) {
  double theta2 = axis_angle.squaredNorm();
  double theta = std::sqrt(theta2);
  Mat3 k;
  k << 0.0, -axis_angle.z(), axis_angle.y(), axis_angle.z(), 0.0, -axis_angle.x(),
      -axis_angle.y(), axis_angle.x(), 0.0;
  double a, b;
  if (theta < 1e-8) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * k + b * (k * k);
}

Vec affine_row_identity() {
  Vec a = Vec::Zero(12);
  a(0) = a(4) = a(8) = 1.0;
  return a;
}

Vec affine_row_compose(const Vec& a, const Vec& b) {
  Eigen::Map<const RowMat3> ra(a.data()), rb(b.data());
  Vec out(12);
  Eigen::Map<RowMat3>(out.data()) = ra * rb;
  out.segment<3>(9) = ra * b.segment<3>(9) + a.segment<3>(9);
  return out;
}

Vec affine_row_invert_rigid(const Vec& a) {
  Eigen::Map<const RowMat3> ra(a.data());
  Vec out(12);
  Eigen::Map<RowMat3>(out.data()) = ra.transpose();
  out.segment<3>(9) = -(ra.transpose() * a.segment<3>(9));
  return out;
}

Vec3 affine_row_apply(const Vec& a, const Vec3& x) {
  Eigen::Map<const RowMat3> ra(a.data());
  return ra * x + a.segment<3>(9);
}

void BodyModel::validate() const {
  Index n = n_verts(), k = n_joints(), s = n_shape();
  require(n > 0 && template_verts.cols() == 3, "bad template shape");
  require(k >= 2 && joint_regressor.cols() == n, "bad joint regressor shape");
  require(shape_dirs.rows() == 3 * n, "bad shape dirs rows");
  require(pose_dirs.rows() == 3 * n && pose_dirs.cols() == 9 * (k - 1), "bad pose dirs shape");
  require(static_cast<Index>(parent.size()) == k, "bad parent size");
  require(parent[0] == -1, "root parent must be -1");
  for (Index j = 1; j < k; ++j)
    require(parent[static_cast<std::size_t>(j)] >= 0 && parent[static_cast<std::size_t>(j)] < j,
            "parents must precede children");
  require(weights.rows() == n && weights.cols() == k, "bad weights shape");
  require(weights.minCoeff() > -1e-12, "negative skinning weight");
  require((weights.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-8,
          "skinning weights must sum to one");
  require(!faces.empty(), "empty face list");
  for (const auto& f : faces)
    for (int v : f) require(v >= 0 && v < n, "face index out of range");
  require(s >= 0, "bad shape count");
}

static Mat unflatten3(const Vec& flat) {
  require(flat.size() % 3 == 0, "flat vertex block not divisible by 3");
  return Eigen::Map<const RowMatX3>(flat.data(), flat.size() / 3, 3);
}

Mat shaped_template(const BodyModel& m, const Vec& beta) {
  require(beta.size() == m.n_shape(), "beta size mismatch");
  Mat v = m.template_verts;
  if (beta.size() > 0) v += unflatten3(m.shape_dirs * beta);
  return v;
}

Mat joint_locations(const BodyModel& m, const Mat& shaped) {
  return m.joint_regressor * shaped;
}

static Vec pose_correct_coeffs(const BodyModel& m, const PoseState& pose) {
  Index k = m.n_joints();
  require(pose.axis_angle.rows() == k && pose.axis_angle.cols() == 3, "pose shape mismatch");
  Vec c(9 * (k - 1));
  for (Index j = 1; j < k; ++j) {
    RowMat3 r = rodrigues(pose.axis_angle.row(j)) - Mat3::Identity();
    c.segment<9>(9 * (j - 1)) = Eigen::Map<const Vec>(r.data(), 9);
  }
  return c;
}

Mat canonical_vertices(const BodyModel& m, const Vec& beta, const PoseState& pose) {
  return shaped_template(m, beta) + unflatten3(m.pose_dirs * pose_correct_coeffs(m, pose));
}

static Mat chain_rows(const BodyModel& m, const Mat& joints, const Mat* axis_angle) {
  Index k = m.n_joints();
  Mat rows(k, 12);
  for (Index j = 0; j < k; ++j) {
    Vec local = affine_row_identity();
    if (axis_angle != nullptr)
      Eigen::Map<RowMat3>(local.data()) = rodrigues(axis_angle->row(j));
    int p = m.parent[static_cast<std::size_t>(j)];
    Vec3 off = p < 0 ? Vec3(joints.row(j)) : Vec3(joints.row(j) - joints.row(p));
    local.segment<3>(9) = off;
    rows.row(j) = p < 0 ? local : Vec(affine_row_compose(rows.row(p), local));
  }
  return rows;
}

BoneTransformSet bone_transforms(const BodyModel& m, const Vec& beta, const PoseState& pose) {
  BoneTransformSet out;
  out.joints = joint_locations(m, shaped_template(m, beta));
  out.world = chain_rows(m, out.joints, &pose.axis_angle);
  out.rest = chain_rows(m, out.joints, nullptr);
  out.t0 = pose.t0;
  out.g = out.world;
  out.g.middleCols(9, 3).rowwise() += pose.t0.transpose();
  out.b.resize(m.n_joints(), 12);
  for (Index j = 0; j < m.n_joints(); ++j)
    out.b.row(j) = affine_row_compose(out.g.row(j), affine_row_invert_rigid(out.rest.row(j)));
  return out;
}

Mat lbs_apply(const Mat& weights, const Mat& bone_rows, const Mat& points) {
  require(weights.rows() == points.rows() && weights.cols() == bone_rows.rows(),
          "lbs shape mismatch");
  Mat mixed = weights * bone_rows;
  Mat out(points.rows(), 3);
  for (Index i = 0; i < points.rows(); ++i)
    out.row(i) = affine_row_apply(mixed.row(i), points.row(i));
  return out;
}

Mat posed_vertices(const BodyModel& m, const Vec& beta, const PoseState& pose) {
  BoneTransformSet bones = bone_transforms(m, beta, pose);
  return lbs_apply(m.weights, bones.b, canonical_vertices(m, beta, pose));
}

Vec beta_from_joints(const BodyModel& m, const Mat& joints) {
  Index k = m.n_joints(), s = m.n_shape();
  require(joints.rows() == k && joints.cols() == 3, "joints shape mismatch");
  Mat base = joint_locations(m, m.template_verts);
  Mat a(3 * k, s);
  for (Index c = 0; c < s; ++c) {
    Mat dj = m.joint_regressor * unflatten3(m.shape_dirs.col(c));
    a.col(c) = Eigen::Map<const Vec>(RowMatX3(dj).data(), 3 * k);
  }
  RowMatX3 rhs = joints - base;
  Vec b = Eigen::Map<const Vec>(rhs.data(), 3 * k);
  return a.colPivHouseholderQr().solve(b);
}

PoseState random_pose(const BodyModel& m, Rng& rng, double angle_scale, double t0_scale) {
  PoseState pose;
  pose.axis_angle.resize(m.n_joints(), 3);
  for (Index j = 0; j < m.n_joints(); ++j)
    pose.axis_angle.row(j) = angle_scale * rng.normal3();
  pose.t0 = t0_scale * rng.normal3();
  return pose;
}

void save_body(const BodyModel& m, const std::string& path) {
  m.validate();
  ArrayFile f;
  f.put_matrix("template_verts", m.template_verts);
  std::vector<std::int64_t> fv;
  fv.reserve(m.faces.size() * 3);
  for (const auto& face : m.faces)
    for (int v : face) fv.push_back(v);
  f.put_ints("faces", fv);
  f.put_matrix("shape_dirs", m.shape_dirs);
  f.put_matrix("pose_dirs", m.pose_dirs);
  f.put_matrix("joint_regressor", m.joint_regressor);
  std::vector<std::int64_t> par(m.parent.begin(), m.parent.end());
  f.put_ints("parent", par);
  f.put_matrix("weights", m.weights);
  f.save(path);
}

BodyModel load_body(const std::string& path) {
  ArrayFile f = ArrayFile::load(path);
  BodyModel m;
  m.template_verts = f.get_matrix("template_verts");
  std::vector<std::int64_t> fv = f.get_ints("faces");
  require(fv.size() % 3 == 0, "face list not divisible by 3");
  m.faces.resize(fv.size() / 3);
  for (std::size_t i = 0; i < m.faces.size(); ++i)
    m.faces[i] = {static_cast<int>(fv[3 * i]), static_cast<int>(fv[3 * i + 1]),
                  static_cast<int>(fv[3 * i + 2])};
  m.shape_dirs = f.get_matrix("shape_dirs");
  m.pose_dirs = f.get_matrix("pose_dirs");
  m.joint_regressor = f.get_matrix("joint_regressor");
  std::vector<std::int64_t> par = f.get_ints("parent");
  m.parent.assign(par.begin(), par.end());
  m.weights = f.get_matrix("weights");
  m.validate();
  return m;
}

}  // namespace leap
