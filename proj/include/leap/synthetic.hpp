#pragma once

#include <cstdint>

#include "leap/body.hpp"

namespace leap {

// Procedural articulated humanoid: capsule-union body meshed at a resolution
// chosen to land near target_verts, smooth orthogonal blend shapes, Gaussian
// joint regressor, softmax capsule skinning weights. Regenerates (new grid
// jitter / new shape basis) until the mesh is watertight and the shape-to-
// joint map is well conditioned.
BodyModel make_synthetic_model(std::uint64_t seed, Index n_joints = 16,
                               Index target_verts = 600, Index n_shape = 8);

}  // namespace leap
