#pragma once

#include <vector>

#include "leap/body.hpp"

namespace leap {

// Index of the closest row of verts for each query point; ties pick the
// lowest index.
std::vector<Index> nearest_vertex(const Mat& verts, const Mat& pts);

// Skinning weights copied from the nearest canonical / posed vertex.
Mat pseudo_gt_weights(const Mat& weights, const Mat& verts, const Mat& pts);

// Per-point blended transforms (Σ_k w_k B_k), one affine row per point.
Mat blend_rows(const Mat& w, const Mat& bone_rows);

// Inverse of the blended transform applied to each point. Points whose
// blended rotation block is near singular fall back to the inverse of the
// highest-weight bone transform.
Mat canonicalize_plain(const Mat& w, const Mat& bone_rows, const Mat& pts,
                       double det_eps = 1e-8);

// Blended transform applied to each point (the forward direction).
Mat reproject_plain(const Mat& w, const Mat& bone_rows, const Mat& pts);

// Row-wise L1 distance between two weight matrices.
Vec cycle_distance_plain(const Mat& w_a, const Mat& w_b);

}  // namespace leap
