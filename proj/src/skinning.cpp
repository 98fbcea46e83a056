#include "leap/skinning.hpp"

namespace leap {

std::vector<Index> nearest_vertex(const Mat& verts, const Mat& pts) {
  std::vector<Index> out(static_cast<std::size_t>(pts.rows()));
  parallel_for(pts.rows(), [&](Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      Vec d2 = (verts.rowwise() - pts.row(i)).rowwise().squaredNorm();
      Index best = 0;
      d2.minCoeff(&best);
      out[static_cast<std::size_t>(i)] = best;
    }
  });
  return out;
}

Mat pseudo_gt_weights(const Mat& weights, const Mat& verts, const Mat& pts) {
  std::vector<Index> idx = nearest_vertex(verts, pts);
  Mat out(pts.rows(), weights.cols());
  for (Index i = 0; i < pts.rows(); ++i) out.row(i) = weights.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

Mat blend_rows(const Mat& w, const Mat& bone_rows) {
  require(w.cols() == bone_rows.rows(), "blend shape mismatch");
  return w * bone_rows;
}

Mat canonicalize_plain(const Mat& w, const Mat& bone_rows, const Mat& pts, double det_eps) {
  require(w.rows() == pts.rows(), "canonicalize shape mismatch");
  Mat mixed = blend_rows(w, bone_rows);
  Mat out(pts.rows(), 3);
  for (Index i = 0; i < pts.rows(); ++i) {
    Mat3 a;
    a << mixed(i, 0), mixed(i, 1), mixed(i, 2), mixed(i, 3), mixed(i, 4), mixed(i, 5),
        mixed(i, 6), mixed(i, 7), mixed(i, 8);
    Vec3 t = mixed.row(i).segment<3>(9);
    Vec3 x = pts.row(i);
    if (std::abs(a.determinant()) < det_eps) {
      Index best = 0;
      w.row(i).maxCoeff(&best);
      out.row(i) = affine_row_apply(affine_row_invert_rigid(bone_rows.row(best)), x);
    } else {
      out.row(i) = a.inverse() * (x - t);
    }
  }
  return out;
}

Mat reproject_plain(const Mat& w, const Mat& bone_rows, const Mat& pts) {
  return lbs_apply(w, bone_rows, pts);
}

Vec cycle_distance_plain(const Mat& w_a, const Mat& w_b) {
  require(w_a.rows() == w_b.rows() && w_a.cols() == w_b.cols(), "cycle shape mismatch");
  return (w_a - w_b).cwiseAbs().rowwise().sum();
}

}  // namespace leap
