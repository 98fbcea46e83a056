#pragma once

#include <memory>

#include <map>

#include "leap/common.hpp"

namespace leap {

// Reverse-mode autodiff over f64 matrices. A Tape records define-by-run ops;
// backward() replays them in reverse creation order with deterministic
// accumulation. Vars are cheap handles (tape pointer + node id). Semantic
// vectors are 1 x n rows; batches are rows x features; scalars are 1 x 1.

class Tape;
class ParameterStore;

class Var {
 public:
  Var() = default;
  const Mat& val() const;
  Index rows() const { return val().rows(); }
  Index cols() const { return val().cols(); }
  bool defined() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

struct ParamEntry {
  std::string name;
  Mat value;
  Mat grad;
  Mat m, v;  // Adam moments
  std::int64_t steps = 0;
  bool frozen = false;
};

class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  int add(const std::string& name, Mat init);
  int find(const std::string& name) const;  // -1 when absent
  int require_id(const std::string& name) const;
  ParamEntry& entry(int id) { return entries_[static_cast<std::size_t>(id)]; }
  const ParamEntry& entry(int id) const { return entries_[static_cast<std::size_t>(id)]; }
  int size() const { return static_cast<int>(entries_.size()); }
  std::size_t scalar_count() const;

  void zero_grad();
  // frozen entries are skipped (their gradients are discarded); aborts on any
  // non-finite gradient, naming the parameter. All gradients are zeroed after
  // the step.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void set_frozen(const std::string& prefix, bool frozen);

 private:
  std::vector<ParamEntry> entries_;
  std::map<std::string, int> by_name_;
};

// Running statistics for one conditional-batch-norm layer.
struct CbnState {
  Vec mean, var;
  double momentum = 0.9;
  void init(Index features) {
    mean = Vec::Zero(features);
    var = Vec::Ones(features);
  }
};

class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat v);
  Var leaf(Mat v);  // differentiable input
  Var param(ParameterStore& ps, int id);
  Var param(ParameterStore& ps, const std::string& name) { return param(ps, ps.require_id(name)); }

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  void backward(Var root);
  Mat grad(Var v) const;  // valid after backward; zeros if the node was never touched
  void clear();

  // --- internals used by op builders ---
  using BackFn = std::function<void(Tape&, int)>;
  Var emit(Mat value, const std::vector<int>& parents, BackFn back);
  const Mat& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  const Mat& grad_of(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  template <typename Expr>
  void accumulate(int id, const Expr& e) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = e;
    else
      n.grad += e;
  }

  void grad_block_add(int id, Index r0, Index c0, const Mat& g);
  Mat& grad_mutable(int id);  // zero-initialized on first use

 private:
  friend class Var;
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    BackFn back;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;
};

// --- ops ---
Var matmul(Var a, Var b);
// y = x * W^T (+ b row-broadcast); W is [out x in], b is [1 x out] or undefined
Var linear(Var x, Var W, Var b);
Var add(Var a, Var b);  // same shape, or b is [1 x C] broadcast over rows
Var sub(Var a, Var b);
Var cmul(Var a, Var b);  // elementwise, same shape or b row-broadcast
Var scale(Var a, double s);
Var add_scalar(Var a, double c);
Var relu(Var a);
Var sigmoid(Var a);
Var abs_val(Var a);
Var square(Var a);
Var clamp_unit(Var a);  // min(max(a, 0), 1); zero gradient in both clamped regimes
Var sum_all(Var a);
Var mean_all(Var a);
Var rowwise_sum(Var a);  // [R x C] -> [R x 1]
Var softmax_rows(Var a);
Var concat_cols(const std::vector<Var>& vs);
Var concat_rows(const std::vector<Var>& vs);
Var slice_cols(Var a, Index begin, Index len);
Var slice_rows(Var a, Index begin, Index len);
Var reshape_rowmajor(Var a, Index rows, Index cols);
Var gather_rows(Var a, std::vector<int> idx);
Var repeat_rows(Var a, Index n);  // a is [1 x C]
// colwise max over row groups; offsets has G+1 entries, group g = [off[g], off[g+1])
Var group_colwise_max(Var a, std::vector<Index> offsets);

// Batch normalization with running statistics. Training mode normalizes by
// biased batch moments (batch size >= 2 required) and updates `state`; eval
// mode uses the stored statistics.
Var batchnorm(Var x, CbnState& state, bool training, double eps = 1e-5);

// --- affine stacks: rows are [r00..r22, t0, t1, t2] (rotation row-major, then
// translation), each row one rigid/affine transform ---
Var affine_mul(Var a, Var b);          // rowwise compose; either side may be [1 x 12]
Var affine_inverse_rigid(Var a);       // assumes orthonormal rotation blocks
Var affine_apply(Var t, Var pts);      // t: [P x 12] or [1 x 12], pts: [P x 3]
// x_canonical = (sum_k w_k T_k)^-1 x, per point; if |det| < det_eps the mix is
// replaced by the single transform with the largest weight (fallback indices
// reported via out param when non-null)
Var canonicalize_points(Var w, Var stack, Var pts, double det_eps = 1e-8,
                        std::vector<int>* fallback = nullptr);
Var pose_project(Var stack, Var t0);   // [K x 12], [1 x 3] -> [1 x 3K], rows R_k^T (t0 - t_k)

}  // namespace leap
