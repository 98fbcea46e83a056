#include "leap/autodiff.hpp"

namespace leap {

const Mat& Var::val() const {
  require(tape_ != nullptr, "use of an undefined Var");
  return tape_->val(id_);
}

// --- ParameterStore ---

int ParameterStore::add(const std::string& name, Mat init) {
  require(by_name_.find(name) == by_name_.end(), "duplicate parameter name: " + name);
  ParamEntry e;
  e.name = name;
  e.grad = Mat::Zero(init.rows(), init.cols());
  e.m = e.grad;
  e.v = e.grad;
  e.value = std::move(init);
  entries_.push_back(std::move(e));
  int id = static_cast<int>(entries_.size()) - 1;
  by_name_[name] = id;
  return id;
}

int ParameterStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

int ParameterStore::require_id(const std::string& name) const {
  int id = find(name);
  if (id < 0) fail("no parameter named '" + name + "'");
  return id;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.grad.setZero();
}

void ParameterStore::adam_step(double lr, double beta1, double beta2, double eps) {
  for (auto& e : entries_) {
    if (e.frozen) continue;
    if (!e.grad.allFinite()) fail("non-finite gradient in parameter '" + e.name + "'");
    ++e.steps;
    e.m = beta1 * e.m + (1.0 - beta1) * e.grad;
    e.v = beta2 * e.v + (1.0 - beta2) * e.grad.cwiseProduct(e.grad);
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(e.steps));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(e.steps));
    e.value.array() -= lr * (e.m.array() / c1) / ((e.v.array() / c2).sqrt() + eps);
  }
  zero_grad();
}

void ParameterStore::set_frozen(const std::string& prefix, bool frozen) {
  bool any = false;
  for (auto& e : entries_)
    if (e.name.rfind(prefix, 0) == 0) {
      e.frozen = frozen;
      any = true;
    }
  if (!any) fail("no parameters match prefix '" + prefix + "'");
}

// --- Tape ---

Var Tape::constant(Mat v) {
  nodes_.push_back(Node{std::move(v), {}, false, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::leaf(Mat v) {
  if (!grad_enabled_) return constant(std::move(v));
  nodes_.push_back(Node{std::move(v), {}, true, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(ParameterStore& ps, int id) {
  ParamEntry& e = ps.entry(id);
  if (!grad_enabled_ || e.frozen) return constant(e.value);
  ParameterStore* store = &ps;
  Node n;
  n.value = e.value;
  n.requires_grad = true;
  n.back = [store, id](Tape& t, int self) { store->entry(id).grad += t.grad_of(self); };
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::emit(Mat value, const std::vector<int>& parents, BackFn back) {
  bool rg = false;
  if (grad_enabled_)
    for (int p : parents) rg = rg || nodes_[static_cast<std::size_t>(p)].requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = rg;
  if (rg) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(Var root) {
  require(root.tape() == this, "backward: Var belongs to another tape");
  require(grad_enabled_, "backward on a gradient-disabled tape");
  require(root.rows() == 1 && root.cols() == 1, "backward root must be scalar");
  auto& r = nodes_[static_cast<std::size_t>(root.id())];
  if (!r.requires_grad) return;
  r.grad = Mat::Ones(1, 1);
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0 || !n.back) continue;
    n.back(*this, i);
  }
}

Mat Tape::grad(Var v) const {
  require(v.tape() == this, "grad: Var belongs to another tape");
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::clear() { nodes_.clear(); }

void Tape::grad_block_add(int id, Index r0, Index c0, const Mat& g) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  n.grad.block(r0, c0, g.rows(), g.cols()) += g;
}

Mat& Tape::grad_mutable(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

// --- op helpers ---

namespace {

Tape& tape_of(Var a) {
  require(a.defined(), "op on an undefined Var");
  return *a.tape();
}

void same_tape(Var a, Var b) { require(a.tape() == b.tape(), "vars from different tapes"); }

Mat3 rot_at(const Mat& stack, Index r) {
  Mat3 R;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) R(i, j) = stack(r, 3 * i + j);
  return R;
}

Vec3 trans_at(const Mat& stack, Index r) { return Vec3(stack(r, 9), stack(r, 10), stack(r, 11)); }

void add_rot(Mat& g, Index r, const Mat3& dR) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) g(r, 3 * i + j) += dR(i, j);
}

void add_trans(Mat& g, Index r, const Vec3& dt) {
  g(r, 9) += dt[0];
  g(r, 10) += dt[1];
  g(r, 11) += dt[2];
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  same_tape(a, b);
  require(a.cols() == b.rows(), "matmul: inner dimensions disagree");
  Mat y;
  y.noalias() = a.val() * b.val();
  int pa = a.id(), pb = b.id();
  return t.emit(std::move(y), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    t.accumulate(pa, g * t.val(pb).transpose());
    t.accumulate(pb, t.val(pa).transpose() * g);
  });
}

Var linear(Var x, Var W, Var b) {
  Tape& t = tape_of(x);
  same_tape(x, W);
  require(x.cols() == W.cols(), "linear: input width does not match W");
  Mat y;
  y.noalias() = x.val() * W.val().transpose();
  std::vector<int> parents{x.id(), W.id()};
  if (b.defined()) {
    same_tape(x, b);
    require(b.rows() == 1 && b.cols() == W.rows(), "linear: bias must be [1 x out]");
    y.rowwise() += b.val().row(0);
    parents.push_back(b.id());
  }
  int px = x.id(), pw = W.id(), pb = b.defined() ? b.id() : -1;
  return t.emit(std::move(y), parents, [px, pw, pb](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    t.accumulate(px, g * t.val(pw));
    t.accumulate(pw, g.transpose() * t.val(px));
    if (pb >= 0) t.accumulate(pb, g.colwise().sum());
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  same_tape(a, b);
  int pa = a.id(), pb = b.id();
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return t.emit(a.val() + b.val(), {pa, pb}, [pa, pb](Tape& t, int self) {
      const Mat& g = t.grad_of(self);
      t.accumulate(pa, g);
      t.accumulate(pb, g);
    });
  }
  require(b.rows() == 1 && b.cols() == a.cols(), "add: shapes incompatible");
  Mat y = a.val();
  y.rowwise() += b.val().row(0);
  return t.emit(std::move(y), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    t.accumulate(pa, g);
    t.accumulate(pb, g.colwise().sum());
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  same_tape(a, b);
  int pa = a.id(), pb = b.id();
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return t.emit(a.val() - b.val(), {pa, pb}, [pa, pb](Tape& t, int self) {
      const Mat& g = t.grad_of(self);
      t.accumulate(pa, g);
      t.accumulate(pb, -g);
    });
  }
  require(b.rows() == 1 && b.cols() == a.cols(), "sub: shapes incompatible");
  Mat y = a.val();
  y.rowwise() -= b.val().row(0);
  return t.emit(std::move(y), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    t.accumulate(pa, g);
    t.accumulate(pb, -g.colwise().sum());
  });
}

Var cmul(Var a, Var b) {
  Tape& t = tape_of(a);
  same_tape(a, b);
  int pa = a.id(), pb = b.id();
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return t.emit(a.val().cwiseProduct(b.val()), {pa, pb}, [pa, pb](Tape& t, int self) {
      const Mat& g = t.grad_of(self);
      t.accumulate(pa, g.cwiseProduct(t.val(pb)));
      t.accumulate(pb, g.cwiseProduct(t.val(pa)));
    });
  }
  require(b.rows() == 1 && b.cols() == a.cols(), "cmul: shapes incompatible");
  Mat y = (a.val().array().rowwise() * b.val().row(0).array()).matrix();
  return t.emit(std::move(y), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    t.accumulate(pa, (g.array().rowwise() * t.val(pb).row(0).array()).matrix());
    t.accumulate(pb, g.cwiseProduct(t.val(pa)).colwise().sum());
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  int pa = a.id();
  return t.emit(s * a.val(), {pa}, [pa, s](Tape& t, int self) {
    t.accumulate(pa, s * t.grad_of(self));
  });
}

Var add_scalar(Var a, double c) {
  Tape& t = tape_of(a);
  int pa = a.id();
  return t.emit((a.val().array() + c).matrix(), {pa}, [pa](Tape& t, int self) {
    t.accumulate(pa, t.grad_of(self));
  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  int pa = a.id();
  return t.emit(a.val().cwiseMax(0.0), {pa}, [pa](Tape& t, int self) {
    t.accumulate(pa, ((t.val(pa).array() > 0.0).cast<double>() * t.grad_of(self).array()).matrix());
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  Mat y = a.val().unaryExpr([](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  int pa = a.id();
  return t.emit(std::move(y), {pa}, [pa](Tape& t, int self) {
    const Mat& y = t.val(self);
    t.accumulate(pa, (t.grad_of(self).array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var abs_val(Var a) {
  Tape& t = tape_of(a);
  int pa = a.id();
  return t.emit(a.val().cwiseAbs(), {pa}, [pa](Tape& t, int self) {
    t.accumulate(pa, (t.grad_of(self).array() * t.val(pa).array().sign()).matrix());
  });
}

Var square(Var a) {
  Tape& t = tape_of(a);
  int pa = a.id();
  return t.emit(a.val().array().square().matrix(), {pa}, [pa](Tape& t, int self) {
    t.accumulate(pa, (2.0 * t.val(pa).array() * t.grad_of(self).array()).matrix());
  });
}

Var clamp_unit(Var a) {
  Tape& t = tape_of(a);
  int pa = a.id();
  return t.emit(a.val().cwiseMax(0.0).cwiseMin(1.0), {pa}, [pa](Tape& t, int self) {
    const auto& x = t.val(pa).array();
    t.accumulate(pa,
                 (((x > 0.0) && (x < 1.0)).cast<double>() * t.grad_of(self).array()).matrix());
  });
}

Var sum_all(Var a) {
  Tape& t = tape_of(a);
  Mat y(1, 1);
  y(0, 0) = a.val().sum();
  int pa = a.id();
  return t.emit(std::move(y), {pa}, [pa](Tape& t, int self) {
    double g = t.grad_of(self)(0, 0);
    t.accumulate(pa, Mat::Constant(t.val(pa).rows(), t.val(pa).cols(), g));
  });
}

Var mean_all(Var a) {
  Tape& t = tape_of(a);
  Mat y(1, 1);
  y(0, 0) = a.val().mean();
  int pa = a.id();
  return t.emit(std::move(y), {pa}, [pa](Tape& t, int self) {
    double g = t.grad_of(self)(0, 0) / static_cast<double>(t.val(pa).size());
    t.accumulate(pa, Mat::Constant(t.val(pa).rows(), t.val(pa).cols(), g));
  });
}

Var rowwise_sum(Var a) {
  Tape& t = tape_of(a);
  Mat y = a.val().rowwise().sum();
  int pa = a.id();
  return t.emit(std::move(y), {pa}, [pa](Tape& t, int self) {
    t.accumulate(pa, t.grad_of(self) * Eigen::RowVectorXd::Ones(t.val(pa).cols()));
  });
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  Mat y = a.val();
  for (Index r = 0; r < y.rows(); ++r) {
    double mx = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - mx).exp();
    y.row(r) /= y.row(r).sum();
  }
  int pa = a.id();
  return t.emit(std::move(y), {pa}, [pa](Tape& t, int self) {
    const Mat& y = t.val(self);
    const Mat& g = t.grad_of(self);
    Vec dot = (g.array() * y.array()).rowwise().sum().matrix();
    t.accumulate(pa, ((g.array().colwise() - dot.array()) * y.array()).matrix());
  });
}

Var concat_cols(const std::vector<Var>& vs) {
  require(!vs.empty(), "concat_cols: empty list");
  Tape& t = tape_of(vs[0]);
  Index rows = vs[0].rows(), cols = 0;
  for (const Var& v : vs) {
    same_tape(vs[0], v);
    require(v.rows() == rows, "concat_cols: row mismatch");
    cols += v.cols();
  }
  Mat y(rows, cols);
  std::vector<int> parents;
  std::vector<Index> offs;
  Index c = 0;
  for (const Var& v : vs) {
    y.middleCols(c, v.cols()) = v.val();
    parents.push_back(v.id());
    offs.push_back(c);
    c += v.cols();
  }
  return t.emit(std::move(y), parents, [parents, offs](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    for (std::size_t i = 0; i < parents.size(); ++i) {
      Index cols = t.val(parents[i]).cols();
      t.grad_block_add(parents[i], 0, 0, g.middleCols(offs[i], cols));
    }
  });
}

Var concat_rows(const std::vector<Var>& vs) {
  require(!vs.empty(), "concat_rows: empty list");
  Tape& t = tape_of(vs[0]);
  Index cols = vs[0].cols(), rows = 0;
  for (const Var& v : vs) {
    same_tape(vs[0], v);
    require(v.cols() == cols, "concat_rows: column mismatch");
    rows += v.rows();
  }
  Mat y(rows, cols);
  std::vector<int> parents;
  std::vector<Index> offs;
  Index r = 0;
  for (const Var& v : vs) {
    y.middleRows(r, v.rows()) = v.val();
    parents.push_back(v.id());
    offs.push_back(r);
    r += v.rows();
  }
  return t.emit(std::move(y), parents, [parents, offs](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    for (std::size_t i = 0; i < parents.size(); ++i) {
      Index rows = t.val(parents[i]).rows();
      t.grad_block_add(parents[i], 0, 0, g.middleRows(offs[i], rows));
    }
  });
}

Var slice_cols(Var a, Index begin, Index len) {
  Tape& t = tape_of(a);
  require(begin >= 0 && len >= 0 && begin + len <= a.cols(), "slice_cols: out of range");
  int pa = a.id();
  return t.emit(a.val().middleCols(begin, len), {pa}, [pa, begin](Tape& t, int self) {
    t.grad_block_add(pa, 0, begin, t.grad_of(self));
  });
}

Var slice_rows(Var a, Index begin, Index len) {
  Tape& t = tape_of(a);
  require(begin >= 0 && len >= 0 && begin + len <= a.rows(), "slice_rows: out of range");
  int pa = a.id();
  return t.emit(a.val().middleRows(begin, len), {pa}, [pa, begin](Tape& t, int self) {
    t.grad_block_add(pa, begin, 0, t.grad_of(self));
  });
}

Var reshape_rowmajor(Var a, Index rows, Index cols) {
  Tape& t = tape_of(a);
  require(rows * cols == a.rows() * a.cols(), "reshape: element count mismatch");
  const Mat& src = a.val();
  Mat y(rows, cols);
  Index sc = src.cols();
  for (Index li = 0; li < rows * cols; ++li) y(li / cols, li % cols) = src(li / sc, li % sc);
  int pa = a.id();
  return t.emit(std::move(y), {pa}, [pa, cols](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    Mat& pg = t.grad_mutable(pa);
    Index sc = pg.cols();
    for (Index li = 0; li < g.rows() * g.cols(); ++li)
      pg(li / sc, li % sc) += g(li / cols, li % cols);
  });
}

Var gather_rows(Var a, std::vector<int> idx) {
  Tape& t = tape_of(a);
  Mat y(static_cast<Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < a.rows(), "gather_rows: index out of range");
    y.row(static_cast<Index>(i)) = a.val().row(idx[i]);
  }
  int pa = a.id();
  return t.emit(std::move(y), {pa}, [pa, idx = std::move(idx)](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    Mat& pg = t.grad_mutable(pa);
    for (std::size_t i = 0; i < idx.size(); ++i) pg.row(idx[i]) += g.row(static_cast<Index>(i));
  });
}

Var repeat_rows(Var a, Index n) {
  Tape& t = tape_of(a);
  require(a.rows() == 1, "repeat_rows: input must be a single row");
  Mat y = a.val().replicate(n, 1);
  int pa = a.id();
  return t.emit(std::move(y), {pa}, [pa](Tape& t, int self) {
    t.accumulate(pa, t.grad_of(self).colwise().sum());
  });
}

Var group_colwise_max(Var a, std::vector<Index> offsets) {
  Tape& t = tape_of(a);
  require(offsets.size() >= 2 && offsets.front() == 0 && offsets.back() == a.rows(),
          "group_colwise_max: bad offsets");
  Index groups = static_cast<Index>(offsets.size()) - 1;
  Mat y(groups, a.cols());
  Eigen::MatrixXi amax(groups, a.cols());
  const Mat& x = a.val();
  for (Index g = 0; g < groups; ++g) {
    Index b = offsets[static_cast<std::size_t>(g)], e = offsets[static_cast<std::size_t>(g) + 1];
    require(e > b, "group_colwise_max: empty group");
    for (Index c = 0; c < x.cols(); ++c) {
      Index best = b;
      double bv = x(b, c);
      for (Index r = b + 1; r < e; ++r)
        if (x(r, c) > bv) {
          bv = x(r, c);
          best = r;
        }
      y(g, c) = bv;
      amax(g, c) = static_cast<int>(best);
    }
  }
  int pa = a.id();
  return t.emit(std::move(y), {pa}, [pa, amax = std::move(amax)](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    Mat& pg = t.grad_mutable(pa);
    for (Index gi = 0; gi < g.rows(); ++gi)
      for (Index c = 0; c < g.cols(); ++c) pg(amax(gi, c), c) += g(gi, c);
  });
}

Var batchnorm(Var x, CbnState& state, bool training, double eps) {
  Tape& t = tape_of(x);
  require(state.mean.size() == x.cols() && state.var.size() == x.cols(),
          "batchnorm: state width mismatch");
  int pa = x.id();
  const Mat& xv = x.val();
  if (!training) {
    Eigen::ArrayXd istd = 1.0 / (state.var.array() + eps).sqrt();
    Mat y = ((xv.array().rowwise() - state.mean.transpose().array()).rowwise() *
             istd.transpose())
                .matrix();
    Vec istd_v = istd.matrix();
    return t.emit(std::move(y), {pa}, [pa, istd_v](Tape& t, int self) {
      t.accumulate(pa,
                   (t.grad_of(self).array().rowwise() * istd_v.transpose().array()).matrix());
    });
  }
  Index B = xv.rows();
  require(B >= 2, "batchnorm: training mode requires batch size >= 2");
  Eigen::RowVectorXd mu = xv.colwise().mean();
  Mat xc = xv.rowwise() - mu;
  Eigen::RowVectorXd var = xc.array().square().colwise().mean();
  Eigen::RowVectorXd istd = 1.0 / (var.array() + eps).sqrt();
  Mat y = (xc.array().rowwise() * istd.array()).matrix();
  double m = state.momentum;
  state.mean = m * state.mean + (1.0 - m) * mu.transpose();
  state.var = m * state.var + (1.0 - m) * var.transpose();
  Vec istd_v = istd.transpose();
  return t.emit(std::move(y), {pa}, [pa, istd_v](Tape& t, int self) {
    const Mat& y = t.val(self);
    const Mat& g = t.grad_of(self);
    double B = static_cast<double>(y.rows());
    Eigen::RowVectorXd gsum = g.colwise().sum();
    Eigen::RowVectorXd gysum = (g.array() * y.array()).colwise().sum();
    Mat dx = ((g.array().rowwise() - gsum.array() / B -
               y.array().rowwise() * (gysum.array() / B))
                  .rowwise() *
              istd_v.transpose().array())
                 .matrix();
    t.accumulate(pa, dx);
  });
}

// --- affine stacks ---

Var affine_mul(Var a, Var b) {
  Tape& t = tape_of(a);
  same_tape(a, b);
  require(a.cols() == 12 && b.cols() == 12, "affine_mul: stacks must have 12 columns");
  Index K = std::max(a.rows(), b.rows());
  require((a.rows() == K || a.rows() == 1) && (b.rows() == K || b.rows() == 1),
          "affine_mul: row counts incompatible");
  const Mat& av = a.val();
  const Mat& bv = b.val();
  Mat y(K, 12);
  for (Index r = 0; r < K; ++r) {
    Index ra = a.rows() == 1 ? 0 : r, rb = b.rows() == 1 ? 0 : r;
    Mat3 Ra = rot_at(av, ra), Rb = rot_at(bv, rb);
    Vec3 ta = trans_at(av, ra), tb = trans_at(bv, rb);
    Mat3 Rc = Ra * Rb;
    Vec3 tc = Ra * tb + ta;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) y(r, 3 * i + j) = Rc(i, j);
    y(r, 9) = tc[0];
    y(r, 10) = tc[1];
    y(r, 11) = tc[2];
  }
  int pa = a.id(), pb = b.id();
  return t.emit(std::move(y), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& av = t.val(pa);
    const Mat& bv = t.val(pb);
    Mat& ga = t.grad_mutable(pa);
    Mat& gb = t.grad_mutable(pb);
    for (Index r = 0; r < g.rows(); ++r) {
      Index ra = av.rows() == 1 ? 0 : r, rb = bv.rows() == 1 ? 0 : r;
      Mat3 Ra = rot_at(av, ra), Rb = rot_at(bv, rb);
      Vec3 tb = trans_at(bv, rb);
      Mat3 gR = rot_at(g, r);
      Vec3 gt = trans_at(g, r);
      add_rot(ga, ra, gR * Rb.transpose() + gt * tb.transpose());
      add_trans(ga, ra, gt);
      add_rot(gb, rb, Ra.transpose() * gR);
      add_trans(gb, rb, Ra.transpose() * gt);
    }
  });
}

Var affine_inverse_rigid(Var a) {
  Tape& t = tape_of(a);
  require(a.cols() == 12, "affine_inverse_rigid: stack must have 12 columns");
  const Mat& av = a.val();
  Mat y(a.rows(), 12);
  for (Index r = 0; r < a.rows(); ++r) {
    Mat3 R = rot_at(av, r);
    Vec3 tr = trans_at(av, r);
    Mat3 S = R.transpose();
    Vec3 u = -(S * tr);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) y(r, 3 * i + j) = S(i, j);
    y(r, 9) = u[0];
    y(r, 10) = u[1];
    y(r, 11) = u[2];
  }
  int pa = a.id();
  return t.emit(std::move(y), {pa}, [pa](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& av = t.val(pa);
    Mat& ga = t.grad_mutable(pa);
    for (Index r = 0; r < g.rows(); ++r) {
      Mat3 R = rot_at(av, r);
      Vec3 tr = trans_at(av, r);
      Mat3 gS = rot_at(g, r);
      Vec3 gu = trans_at(g, r);
      add_rot(ga, r, gS.transpose() - tr * gu.transpose());
      add_trans(ga, r, -(R * gu));
    }
  });
}

Var affine_apply(Var tr, Var pts) {
  Tape& t = tape_of(tr);
  same_tape(tr, pts);
  require(tr.cols() == 12 && pts.cols() == 3, "affine_apply: bad shapes");
  require(tr.rows() == pts.rows() || tr.rows() == 1, "affine_apply: row counts incompatible");
  const Mat& tv = tr.val();
  const Mat& pv = pts.val();
  Mat y(pv.rows(), 3);
  for (Index r = 0; r < pv.rows(); ++r) {
    Index rt = tv.rows() == 1 ? 0 : r;
    y.row(r) = (rot_at(tv, rt) * Vec3(pv.row(r)) + trans_at(tv, rt)).transpose();
  }
  int pt = tr.id(), pp = pts.id();
  return t.emit(std::move(y), {pt, pp}, [pt, pp](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& tv = t.val(pt);
    const Mat& pv = t.val(pp);
    Mat& gt = t.grad_mutable(pt);
    Mat& gp = t.grad_mutable(pp);
    for (Index r = 0; r < g.rows(); ++r) {
      Index rt = tv.rows() == 1 ? 0 : r;
      Vec3 gr = g.row(r);
      Vec3 x = pv.row(r);
      add_rot(gt, rt, gr * x.transpose());
      add_trans(gt, rt, gr);
      gp.row(r) += (rot_at(tv, rt).transpose() * gr).transpose();
    }
  });
}

Var canonicalize_points(Var w, Var stack, Var pts, double det_eps, std::vector<int>* fallback) {
  Tape& t = tape_of(w);
  same_tape(w, stack);
  same_tape(w, pts);
  require(w.cols() == stack.rows(), "canonicalize_points: weight/stack mismatch");
  require(stack.cols() == 12 && pts.cols() == 3 && w.rows() == pts.rows(),
          "canonicalize_points: bad shapes");
  const Mat& wv = w.val();
  const Mat& sv = stack.val();
  const Mat& pv = pts.val();
  Index P = pv.rows();
  Mat mixed;
  mixed.noalias() = wv * sv;
  Mat y(P, 3);
  std::vector<Mat3> inv(static_cast<std::size_t>(P));
  std::vector<int> fb(static_cast<std::size_t>(P), -1);
  for (Index p = 0; p < P; ++p) {
    Mat3 A = rot_at(mixed, p);
    Vec3 tr = trans_at(mixed, p);
    if (std::abs(A.determinant()) < det_eps) {
      Index best;
      wv.row(p).maxCoeff(&best);
      fb[static_cast<std::size_t>(p)] = static_cast<int>(best);
      A = rot_at(sv, best);
      tr = trans_at(sv, best);
      if (std::abs(A.determinant()) < det_eps)
        fail("canonicalize_points: fallback transform is singular too");
    }
    Mat3 Ai = A.inverse();
    inv[static_cast<std::size_t>(p)] = Ai;
    y.row(p) = (Ai * (Vec3(pv.row(p)) - tr)).transpose();
  }
  if (fallback) *fallback = fb;
  int pw = w.id(), ps = stack.id(), pp = pts.id();
  return t.emit(std::move(y), {pw, ps, pp},
                [pw, ps, pp, inv = std::move(inv), fb = std::move(fb)](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& y = t.val(self);
    const Mat& wv = t.val(pw);
    const Mat& sv = t.val(ps);
    Index P = g.rows();
    Mat Gm = Mat::Zero(P, 12);  // d loss / d mixed transform, zero rows for fallbacks
    Mat gp = Mat::Zero(P, 3);
    Mat gs_direct = Mat::Zero(sv.rows(), 12);
    for (Index p = 0; p < P; ++p) {
      Vec3 gr = g.row(p);
      Vec3 yr = y.row(p);
      Vec3 gx = inv[static_cast<std::size_t>(p)].transpose() * gr;
      gp.row(p) = gx.transpose();
      Mat3 dA = -gx * yr.transpose();
      int bone = fb[static_cast<std::size_t>(p)];
      if (bone < 0) {
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) Gm(p, 3 * i + j) = dA(i, j);
        Gm(p, 9) = -gx[0];
        Gm(p, 10) = -gx[1];
        Gm(p, 11) = -gx[2];
      } else {
        add_rot(gs_direct, bone, dA);
        add_trans(gs_direct, bone, -gx);
      }
    }
    t.accumulate(pp, gp);
    t.accumulate(pw, Gm * sv.transpose());
    t.accumulate(ps, wv.transpose() * Gm + gs_direct);
  });
}

Var pose_project(Var stack, Var t0) {
  Tape& t = tape_of(stack);
  same_tape(stack, t0);
  require(stack.cols() == 12 && t0.rows() == 1 && t0.cols() == 3, "pose_project: bad shapes");
  const Mat& sv = stack.val();
  Vec3 root = t0.val().row(0);
  Index K = sv.rows();
  Mat y(1, 3 * K);
  for (Index k = 0; k < K; ++k) {
    Vec3 v = rot_at(sv, k).transpose() * (root - trans_at(sv, k));
    y(0, 3 * k) = v[0];
    y(0, 3 * k + 1) = v[1];
    y(0, 3 * k + 2) = v[2];
  }
  int ps = stack.id(), pt = t0.id();
  return t.emit(std::move(y), {ps, pt}, [ps, pt](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& sv = t.val(ps);
    Vec3 root = t.val(pt).row(0);
    Mat& gs = t.grad_mutable(ps);
    Vec3 gt0 = Vec3::Zero();
    for (Index k = 0; k < sv.rows(); ++k) {
      Vec3 gk(g(0, 3 * k), g(0, 3 * k + 1), g(0, 3 * k + 2));
      Mat3 R = rot_at(sv, k);
      Vec3 d = root - trans_at(sv, k);
      Vec3 Rg = R * gk;
      add_rot(gs, k, d * gk.transpose());
      add_trans(gs, k, -Rg);
      gt0 += Rg;
    }
    t.accumulate(pt, gt0.transpose());
  });
}

}  // namespace leap
