#include "leap/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "leap/synthetic.hpp"

namespace leap {
namespace {

using nlohmann::json;

struct Field {
  std::string key;
  std::function<void(RunConfig&, const json&)> set;
  std::function<json(const RunConfig&)> get;
};

template <typename T, typename U>
Field field(const std::string& key, U RunConfig::* member) {
  return {key, [member](RunConfig& rc, const json& v) { rc.*member = v.get<T>(); },
          [member](const RunConfig& rc) { return json(static_cast<T>(rc.*member)); }};
}

template <typename T, typename U>
Field field(const std::string& key, ModelConfig RunConfig::* sec, U ModelConfig::* member) {
  return {key, [sec, member](RunConfig& rc, const json& v) { rc.*sec.*member = v.get<T>(); },
          [sec, member](const RunConfig& rc) { return json(static_cast<T>(rc.*sec.*member)); }};
}

template <typename T, typename U>
Field field(const std::string& key, TrainConfig RunConfig::* sec, U TrainConfig::* member) {
  return {key, [sec, member](RunConfig& rc, const json& v) { rc.*sec.*member = v.get<T>(); },
          [sec, member](const RunConfig& rc) { return json(static_cast<T>(rc.*sec.*member)); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> k = {
      field<Index>("model.shape_feat", &RunConfig::model, &ModelConfig::shape_feat),
      field<Index>("model.pn_hidden", &RunConfig::model, &ModelConfig::pn_hidden),
      field<int>("model.pn_blocks", &RunConfig::model, &ModelConfig::pn_blocks),
      field<Index>("model.lbs_point_feat", &RunConfig::model, &ModelConfig::lbs_point_feat),
      field<Index>("model.lbs_pose_feat", &RunConfig::model, &ModelConfig::lbs_pose_feat),
      field<Index>("model.lbs_hidden", &RunConfig::model, &ModelConfig::lbs_hidden),
      field<int>("model.lbs_blocks", &RunConfig::model, &ModelConfig::lbs_blocks),
      field<Index>("model.occ_hidden", &RunConfig::model, &ModelConfig::occ_hidden),
      field<int>("model.occ_blocks", &RunConfig::model, &ModelConfig::occ_blocks),
      field<Index>("model.bone_code", &RunConfig::model, &ModelConfig::bone_code),
      field<bool>("model.use_shape", &RunConfig::model, &ModelConfig::use_shape),
      field<bool>("model.use_structure", &RunConfig::model, &ModelConfig::use_structure),

      field<int>("train.lbs_iters", &RunConfig::train, &TrainConfig::lbs_iters),
      field<Index>("train.inv_uniform", &RunConfig::train, &TrainConfig::inv_uniform),
      field<Index>("train.inv_surface", &RunConfig::train, &TrainConfig::inv_surface),
      field<Index>("train.fwd_uniform", &RunConfig::train, &TrainConfig::fwd_uniform),
      field<Index>("train.fwd_surface", &RunConfig::train, &TrainConfig::fwd_surface),
      field<Index>("train.fwd_mapped", &RunConfig::train, &TrainConfig::fwd_mapped),
      field<int>("train.occ_iters", &RunConfig::train, &TrainConfig::occ_iters),
      field<Index>("train.occ_uniform", &RunConfig::train, &TrainConfig::occ_uniform),
      field<Index>("train.occ_surface", &RunConfig::train, &TrainConfig::occ_surface),
      field<Index>("train.occ_canonical", &RunConfig::train, &TrainConfig::occ_canonical),
      field<Index>("train.bank_uniform", &RunConfig::train, &TrainConfig::bank_uniform),
      field<Index>("train.bank_surface", &RunConfig::train, &TrainConfig::bank_surface),
      field<Index>("train.bank_canonical", &RunConfig::train, &TrainConfig::bank_canonical),
      field<double>("train.lr", &RunConfig::train, &TrainConfig::lr),
      field<double>("train.lr_min", &RunConfig::train, &TrainConfig::lr_min),
      field<int>("train.bn_passes", &RunConfig::train, &TrainConfig::bn_passes),
      field<double>("train.sigma", &RunConfig::train, &TrainConfig::sigma),
      field<double>("train.pad", &RunConfig::train, &TrainConfig::pad),
      field<int>("train.log_every", &RunConfig::train, &TrainConfig::log_every),
      field<std::uint64_t>("train.seed", &RunConfig::train, &TrainConfig::seed),

      field<int>("poses.count", &RunConfig::pose_count),
      field<int>("poses.held_out", &RunConfig::held_out),
      field<double>("poses.angle_scale", &RunConfig::angle_scale),
      field<double>("poses.t0_scale", &RunConfig::t0_scale),
      field<std::uint64_t>("poses.seed", &RunConfig::pose_seed),

      field<Index>("body.joints", &RunConfig::body_joints),
      field<Index>("body.verts", &RunConfig::body_verts),
      field<Index>("body.shapes", &RunConfig::body_shapes),
      field<std::uint64_t>("body.seed", &RunConfig::body_seed),
      field<std::uint64_t>("body.beta_seed", &RunConfig::beta_seed),
      field<double>("body.beta_scale", &RunConfig::beta_scale),

      field<Index>("eval.points", &RunConfig::eval_points),
      field<double>("eval.pad", &RunConfig::eval_pad),
  };
  return k;
}

const Field* find_field(const std::string& key) {
  for (const Field& f : fields())
    if (f.key == key) return &f;
  return nullptr;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const std::exception& e) {
    fail(std::string("config parse error: ") + e.what());
  }
  require(root.is_object(), "config root must be an object");
  RunConfig rc;
  for (const auto& [section, body] : root.items()) {
    require(body.is_object(), "config section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) {
      std::string dotted = section + "." + key;
      const Field* f = find_field(dotted);
      if (f == nullptr) fail("unknown config key: " + dotted);
      try {
        f->set(rc, value);
      } catch (const std::exception& e) {
        fail("config key '" + dotted + "': " + e.what());
      }
    }
  }
  return rc;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& rc) {
  json root = json::object();
  for (const Field& f : fields()) {
    std::size_t dot = f.key.find('.');
    root[f.key.substr(0, dot)][f.key.substr(dot + 1)] = f.get(rc);
  }
  return root.dump(2);
}

void apply_override(RunConfig& rc, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (f == nullptr) fail("unknown config key: " + key);
  json v;
  try {
    v = json::parse(value);
  } catch (const std::exception&) {
    v = json(value);
  }
  try {
    f->set(rc, v);
  } catch (const std::exception& e) {
    fail("override '" + key + "': " + e.what());
  }
}

BodyModel run_body(const RunConfig& rc) {
  return make_synthetic_model(rc.body_seed, rc.body_joints, rc.body_verts, rc.body_shapes);
}

Vec run_beta(const RunConfig& rc, const BodyModel& body) {
  Rng rng(mix_seed(rc.beta_seed, 0xbe7aull));
  Vec beta(body.n_shape());
  for (Index i = 0; i < beta.size(); ++i) beta(i) = rc.beta_scale * rng.normal();
  return beta;
}

std::vector<PoseState> run_pose_pool(const BodyModel& body, const RunConfig& rc) {
  require(rc.pose_count > 0, "pose_count must be positive");
  require(rc.held_out >= 0 && rc.held_out < rc.pose_count, "held_out must be in [0, pose_count)");
  return sample_pose_pool(body, rc.pose_count, rc.angle_scale, rc.t0_scale, rc.pose_seed);
}

std::vector<PoseState> train_split(const std::vector<PoseState>& pool, const RunConfig& rc) {
  require(static_cast<int>(pool.size()) == rc.pose_count, "pose pool size mismatch");
  return {pool.begin(), pool.end() - rc.held_out};
}

std::vector<PoseState> held_split(const std::vector<PoseState>& pool, const RunConfig& rc) {
  require(static_cast<int>(pool.size()) == rc.pose_count, "pose pool size mismatch");
  return {pool.end() - rc.held_out, pool.end()};
}

}  // namespace leap
