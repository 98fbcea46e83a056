#pragma once

#include <string>
#include <vector>

#include "leap/occupancy.hpp"

namespace leap {

// Checkpoints carry everything needed to rebuild the model exactly: the
// dims, kinematic tree, all parameters with their optimizer moments, and the
// batch-norm running statistics. `stage` records how far training got
// ("lbs" after stage 1, "occupancy" after stage 2).
void save_checkpoint(const LeapModel& model, const std::string& stage, const std::string& path);

// Rebuilds `model` (which must be freshly constructed) and returns the stage
// tag.
std::string load_checkpoint(LeapModel& model, const std::string& path);

// Copies parameter values (and moments) whose names start with any of the
// prefixes from a checkpoint into an already-built model; shapes must match.
void load_matching_params(LeapModel& model, const std::string& path,
                          const std::vector<std::string>& prefixes);

}  // namespace leap
