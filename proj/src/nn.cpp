#include "leap/nn.hpp"

#include <cmath>

namespace leap {

int StatsStore::add(const std::string& name, Index channels) {
  for (const auto& e : entries_)
    require(e.first != name, "duplicate stats name: " + name);
  CbnState st;
  st.init(channels);
  entries_.emplace_back(name, std::move(st));
  return static_cast<int>(entries_.size()) - 1;
}

int StatsStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].first == name) return static_cast<int>(i);
  return -1;
}

static Mat xavier(Rng& rng, Index out, Index in) {
  double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Mat w(out, in);
  for (Index r = 0; r < out; ++r)
    for (Index c = 0; c < in; ++c) w(r, c) = rng.uniform(-limit, limit);
  return w;
}

Linear::Linear(ParameterStore& ps_, Rng& rng, const std::string& name, Index in, Index out)
    : ps(&ps_) {
  w = ps->add(name + ".w", xavier(rng, out, in));
  b = ps->add(name + ".b", Mat::Zero(1, out));
}

Linear::Linear(ParameterStore& ps_, const std::string& name, Index in, Index out, double w_fill,
               double b_fill)
    : ps(&ps_) {
  w = ps->add(name + ".w", Mat::Constant(out, in, w_fill));
  b = ps->add(name + ".b", Mat::Constant(1, out, b_fill));
}

Var Linear::operator()(Tape& t, Var x) const {
  return linear(x, t.param(*ps, w), t.param(*ps, b));
}

Cbn::Cbn(ParameterStore& ps, StatsStore& ss_, const std::string& name, Index channels,
         Index cond_dim)
    : ss(&ss_) {
  stats = ss->add(name + ".stats", channels);
  gamma = Linear(ps, name + ".gamma", cond_dim, channels, 0.0, 1.0);
  beta = Linear(ps, name + ".beta", cond_dim, channels, 0.0, 0.0);
}

Var Cbn::operator()(Tape& t, Var x, Var cond, bool training) const {
  Var n = batchnorm(x, ss->entry(stats), training);
  return add(cmul(n, gamma(t, cond)), beta(t, cond));
}

PointNet::PointNet(ParameterStore& ps, Rng& rng, const std::string& name, Index in, Index hidden,
                   Index out, int nblocks) {
  input = Linear(ps, rng, name + ".input", in, hidden);
  for (int i = 0; i < nblocks; ++i) {
    std::string base = name + ".res" + std::to_string(i);
    res.emplace_back(Linear(ps, rng, base + ".l1", hidden, hidden),
                     Linear(ps, rng, base + ".l2", hidden, hidden));
  }
  project = Linear(ps, rng, name + ".project", hidden, out);
}

Var PointNet::operator()(Tape& t, Var points, const std::vector<Index>& offsets) const {
  Var h = relu(input(t, points));
  for (const auto& blk : res)
    h = add(h, blk.second(t, relu(blk.first(t, relu(h)))));
  Var pooled = group_colwise_max(h, offsets);
  return project(t, pooled);
}

CondResBlock::CondResBlock(ParameterStore& ps, StatsStore& ss, Rng& rng, const std::string& name,
                           Index hidden, Index cond_dim) {
  bn1 = Cbn(ps, ss, name + ".bn1", hidden, cond_dim);
  bn2 = Cbn(ps, ss, name + ".bn2", hidden, cond_dim);
  l1 = Linear(ps, rng, name + ".l1", hidden, hidden);
  l2 = Linear(ps, rng, name + ".l2", hidden, hidden);
}

Var CondResBlock::operator()(Tape& t, Var x, Var cond, bool training) const {
  Var h = l1(t, relu(bn1(t, x, cond, training)));
  h = l2(t, relu(bn2(t, h, cond, training)));
  return add(x, h);
}

CondMlp::CondMlp(ParameterStore& ps, StatsStore& ss, Rng& rng, const std::string& name, Index in,
                 Index hidden, Index out, Index cond_dim, int nblocks) {
  input = Linear(ps, rng, name + ".input", in, hidden);
  for (int i = 0; i < nblocks; ++i)
    blocks.emplace_back(ps, ss, rng, name + ".block" + std::to_string(i), hidden, cond_dim);
  bn_out = Cbn(ps, ss, name + ".bn_out", hidden, cond_dim);
  output = Linear(ps, rng, name + ".output", hidden, out);
}

Var CondMlp::operator()(Tape& t, Var x, Var cond, bool training) const {
  Var h = input(t, x);
  for (const auto& blk : blocks) h = blk(t, h, cond, training);
  return output(t, relu(bn_out(t, h, cond, training)));
}

}  // namespace leap
