#pragma once

#include <string>

#include "leap/training.hpp"

namespace leap {

// One file drives a whole run: body generation, model dims, both training
// stages, pose pool, and evaluation defaults.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  int pose_count = 50;
  int held_out = 5;
  double angle_scale = 0.35;
  double t0_scale = 0.0;
  std::uint64_t pose_seed = 5;

  Index body_joints = 16;
  Index body_verts = 600;
  Index body_shapes = 8;
  std::uint64_t body_seed = 7;
  std::uint64_t beta_seed = 11;
  double beta_scale = 1.0;

  Index eval_points = 20000;
  double eval_pad = 0.1;
};

// Strict JSON: every key must be known, sections are nested objects.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text);
std::string config_to_json(const RunConfig& rc);
// dotted path ("train.lr") plus a JSON literal value.
void apply_override(RunConfig& rc, const std::string& key, const std::string& value);

// Derived run pieces shared by the command-line tools and the tests: the
// synthetic subject, its shape coefficients, the pose pool, and the
// train / held-out split (held-out poses are the pool tail).
BodyModel run_body(const RunConfig& rc);
Vec run_beta(const RunConfig& rc, const BodyModel& body);
std::vector<PoseState> run_pose_pool(const BodyModel& body, const RunConfig& rc);
std::vector<PoseState> train_split(const std::vector<PoseState>& pool, const RunConfig& rc);
std::vector<PoseState> held_split(const std::vector<PoseState>& pool, const RunConfig& rc);

}  // namespace leap
