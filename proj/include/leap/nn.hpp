#pragma once

#include <string>
#include <vector>

#include "leap/autodiff.hpp"

namespace leap {

// Named registry for batch-norm running statistics, serialized alongside
// parameters in checkpoints.
class StatsStore {
 public:
  int add(const std::string& name, Index channels);
  int find(const std::string& name) const;
  CbnState& entry(int id) { return entries_[static_cast<std::size_t>(id)].second; }
  const CbnState& entry(int id) const { return entries_[static_cast<std::size_t>(id)].second; }
  const std::string& name(int id) const { return entries_[static_cast<std::size_t>(id)].first; }
  int size() const { return static_cast<int>(entries_.size()); }

 private:
  std::vector<std::pair<std::string, CbnState>> entries_;
};

struct Linear {
  Linear() = default;
  Linear(ParameterStore& ps, Rng& rng, const std::string& name, Index in, Index out);
  // Constant init, used by the conditional batch-norm scale/offset maps.
  Linear(ParameterStore& ps, const std::string& name, Index in, Index out, double w_fill,
         double b_fill);
  Var operator()(Tape& t, Var x) const;

  ParameterStore* ps = nullptr;
  int w = -1;
  int b = -1;
};

// Batch norm whose scale and offset are linear functions of a conditioning
// vector.
struct Cbn {
  Cbn() = default;
  Cbn(ParameterStore& ps, StatsStore& ss, const std::string& name, Index channels, Index cond_dim);
  Var operator()(Tape& t, Var x, Var cond, bool training) const;

  StatsStore* ss = nullptr;
  int stats = -1;
  Linear gamma;
  Linear beta;
};

// Residual point encoder: per-point MLP with residual blocks, max pool over
// each point group, then a projection to the feature size.
struct PointNet {
  PointNet() = default;
  PointNet(ParameterStore& ps, Rng& rng, const std::string& name, Index in, Index hidden,
           Index out, int blocks);
  // points: concatenated groups [sum(n_i) x in]; offsets: group starts plus a
  // trailing total. Returns [groups x out].
  Var operator()(Tape& t, Var points, const std::vector<Index>& offsets) const;

  Linear input;
  std::vector<std::pair<Linear, Linear>> res;
  Linear project;
};

struct CondResBlock {
  CondResBlock() = default;
  CondResBlock(ParameterStore& ps, StatsStore& ss, Rng& rng, const std::string& name,
               Index hidden, Index cond_dim);
  Var operator()(Tape& t, Var x, Var cond, bool training) const;

  Cbn bn1, bn2;
  Linear l1, l2;
};

// Conditioned point decoder shared by the weight fields and the occupancy
// head: input lift, residual blocks with conditional batch norm, final
// normalized projection. Returns pre-activation logits [B x out].
struct CondMlp {
  CondMlp() = default;
  CondMlp(ParameterStore& ps, StatsStore& ss, Rng& rng, const std::string& name, Index in,
          Index hidden, Index out, Index cond_dim, int blocks);
  Var operator()(Tape& t, Var x, Var cond, bool training) const;

  Linear input;
  std::vector<CondResBlock> blocks;
  Cbn bn_out;
  Linear output;
};

}  // namespace leap
