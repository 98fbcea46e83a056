#include "leap/checkpoint.hpp"

#include "leap/container.hpp"

namespace leap {
namespace {

constexpr const char* kFormat = "leap-checkpoint";

void put_config(ArrayFile& f, const LeapModel& model) {
  const ModelConfig& c = model.cfg;
  f.put_int("cfg.shape_feat", c.shape_feat);
  f.put_int("cfg.pn_hidden", c.pn_hidden);
  f.put_int("cfg.pn_blocks", c.pn_blocks);
  f.put_int("cfg.lbs_point_feat", c.lbs_point_feat);
  f.put_int("cfg.lbs_pose_feat", c.lbs_pose_feat);
  f.put_int("cfg.lbs_hidden", c.lbs_hidden);
  f.put_int("cfg.lbs_blocks", c.lbs_blocks);
  f.put_int("cfg.occ_hidden", c.occ_hidden);
  f.put_int("cfg.occ_blocks", c.occ_blocks);
  f.put_int("cfg.bone_code", c.bone_code);
  f.put_int("cfg.use_shape", c.use_shape ? 1 : 0);
  f.put_int("cfg.use_structure", c.use_structure ? 1 : 0);
  f.put_int("n_joints", model.n_joints);
  std::vector<std::int64_t> par(model.parent.begin(), model.parent.end());
  f.put_ints("parent", par);
}

ModelConfig get_config(const ArrayFile& f) {
  ModelConfig c;
  c.shape_feat = f.get_int("cfg.shape_feat");
  c.pn_hidden = f.get_int("cfg.pn_hidden");
  c.pn_blocks = static_cast<int>(f.get_int("cfg.pn_blocks"));
  c.lbs_point_feat = f.get_int("cfg.lbs_point_feat");
  c.lbs_pose_feat = f.get_int("cfg.lbs_pose_feat");
  c.lbs_hidden = f.get_int("cfg.lbs_hidden");
  c.lbs_blocks = static_cast<int>(f.get_int("cfg.lbs_blocks"));
  c.occ_hidden = f.get_int("cfg.occ_hidden");
  c.occ_blocks = static_cast<int>(f.get_int("cfg.occ_blocks"));
  c.bone_code = f.get_int("cfg.bone_code");
  c.use_shape = f.get_int("cfg.use_shape") != 0;
  c.use_structure = f.get_int("cfg.use_structure") != 0;
  return c;
}

}  // namespace

void save_checkpoint(const LeapModel& model, const std::string& stage, const std::string& path) {
  require(stage == "lbs" || stage == "occupancy", "unknown stage tag: " + stage);
  ArrayFile f;
  f.put_string("format", kFormat);
  f.put_string("stage", stage);
  put_config(f, model);
  for (int i = 0; i < model.params.size(); ++i) {
    const ParamEntry& e = model.params.entry(i);
    f.put_matrix("param." + e.name, e.value);
    f.put_matrix("adam_m." + e.name, e.m);
    f.put_matrix("adam_v." + e.name, e.v);
    f.put_int("steps." + e.name, e.steps);
  }
  for (int i = 0; i < model.stats.size(); ++i) {
    const CbnState& st = model.stats.entry(i);
    f.put_vector("stats." + model.stats.name(i) + ".mean", st.mean);
    f.put_vector("stats." + model.stats.name(i) + ".var", st.var);
  }
  f.save(path);
}

std::string load_checkpoint(LeapModel& model, const std::string& path) {
  ArrayFile f = ArrayFile::load(path);
  require(f.has("format") && f.get_string("format") == kFormat,
          "not a checkpoint file: " + path);
  std::string stage = f.get_string("stage");
  std::vector<std::int64_t> par = f.get_ints("parent");
  std::vector<int> parent(par.begin(), par.end());
  build_model(model, get_config(f), f.get_int("n_joints"), parent, 0);

  for (int i = 0; i < model.params.size(); ++i) {
    ParamEntry& e = model.params.entry(i);
    Mat value = f.get_matrix("param." + e.name);
    require(value.rows() == e.value.rows() && value.cols() == e.value.cols(),
            "checkpoint shape mismatch for " + e.name);
    e.value = value;
    e.m = f.get_matrix("adam_m." + e.name);
    e.v = f.get_matrix("adam_v." + e.name);
    e.steps = f.get_int("steps." + e.name);
  }
  for (int i = 0; i < model.stats.size(); ++i) {
    CbnState& st = model.stats.entry(i);
    std::string base = "stats." + model.stats.name(i);
    Vec mean = f.get_vector(base + ".mean");
    require(mean.size() == st.mean.size(), "checkpoint stats mismatch for " + base);
    st.mean = mean;
    st.var = f.get_vector(base + ".var");
  }
  return stage;
}

void load_matching_params(LeapModel& model, const std::string& path,
                          const std::vector<std::string>& prefixes) {
  ArrayFile f = ArrayFile::load(path);
  require(f.has("format") && f.get_string("format") == kFormat,
          "not a checkpoint file: " + path);
  for (int i = 0; i < model.params.size(); ++i) {
    ParamEntry& e = model.params.entry(i);
    bool wanted = false;
    for (const std::string& p : prefixes)
      if (e.name.rfind(p, 0) == 0) wanted = true;
    if (!wanted) continue;
    require(f.has("param." + e.name), "checkpoint lacks parameter " + e.name);
    Mat value = f.get_matrix("param." + e.name);
    require(value.rows() == e.value.rows() && value.cols() == e.value.cols(),
            "checkpoint shape mismatch for " + e.name);
    e.value = value;
    e.m = f.get_matrix("adam_m." + e.name);
    e.v = f.get_matrix("adam_v." + e.name);
    e.steps = f.get_int("steps." + e.name);
  }
  for (int i = 0; i < model.stats.size(); ++i) {
    const std::string& name = model.stats.name(i);
    bool wanted = false;
    for (const std::string& p : prefixes)
      if (name.rfind(p, 0) == 0) wanted = true;
    if (!wanted) continue;
    std::string base = "stats." + name;
    require(f.has(base + ".mean"), "checkpoint lacks stats " + base);
    CbnState& st = model.stats.entry(i);
    Vec mean = f.get_vector(base + ".mean");
    require(mean.size() == st.mean.size(), "checkpoint stats mismatch for " + base);
    st.mean = mean;
    st.var = f.get_vector(base + ".var");
  }
}

}  // namespace leap
