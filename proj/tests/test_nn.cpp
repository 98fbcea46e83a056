#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "leap/encoders.hpp"
#include "leap/nn.hpp"

using namespace leap;
using leap::test::max_grad_error;
using leap::test::random_mat;

TEST_CASE("linear layer matches the plain affine map") {
  Rng rng(3);
  ParameterStore ps;
  Linear lin(ps, rng, "lin", 4, 6);
  Mat x = random_mat(rng, 5, 4);

  Tape t(false);
  Mat y = lin(t, t.constant(x)).val();
  Mat w = ps.entry(ps.find("lin.w")).value;
  Mat b = ps.entry(ps.find("lin.b")).value;
  Mat expect = x * w.transpose() + Mat::Ones(5, 1) * b;
  CHECK((y - expect).cwiseAbs().maxCoeff() < 1e-12);

  auto f = [&](Tape& t, const std::vector<Var>& v) { return sum_all(square(lin(t, v[0]))); };
  CHECK(max_grad_error(f, {x}) < 1e-6);
}

TEST_CASE("conditional batch norm starts as plain normalization") {
  Rng rng(5);
  ParameterStore ps;
  StatsStore ss;
  Cbn bn(ps, ss, "bn", 6, 3);
  Mat x = random_mat(rng, 32, 6, 2.0);
  Mat cond = random_mat(rng, 32, 3);

  Tape t(false);
  Mat y = bn(t, t.constant(x), t.constant(cond), true).val();
  // constant-initialized maps: gamma = 1 and beta = 0 whatever the condition
  Vec mu = y.colwise().mean();
  CHECK(mu.cwiseAbs().maxCoeff() < 1e-12);
  Vec var = (y.rowwise() - y.colwise().mean()).array().square().colwise().mean();
  CHECK((var.array() - 1.0).abs().maxCoeff() < 1e-3);
}

TEST_CASE("conditional batch norm gradients, train and eval mode") {
  Rng rng(7);
  ParameterStore ps;
  StatsStore ss;
  Cbn bn(ps, ss, "bn", 5, 3);
  // give the scale/offset maps nonzero weights so the condition matters
  ps.entry(ps.find("bn.gamma.w")).value = random_mat(rng, 5, 3, 0.3);
  ps.entry(ps.find("bn.beta.w")).value = random_mat(rng, 5, 3, 0.3);
  Mat x = random_mat(rng, 12, 5, 1.5);
  Mat cond = random_mat(rng, 12, 3);

  for (bool training : {true, false}) {
    auto f = [&](Tape& t, const std::vector<Var>& v) {
      return sum_all(square(bn(t, v[0], v[1], training)));
    };
    CHECK(max_grad_error(f, {x, cond}, 1e-6, 1e-5) < 1e-4);
  }
}

TEST_CASE("point encoder pools per group and ignores point order") {
  Rng rng(11);
  ParameterStore ps;
  PointNet pn(ps, rng, "pn", 3, 16, 8, 2);
  Mat pts = random_mat(rng, 20, 3);
  std::vector<Index> offsets{0, 12, 20};

  Tape t(false);
  Mat y = pn(t, t.constant(pts), offsets).val();
  REQUIRE(y.rows() == 2);
  REQUIRE(y.cols() == 8);

  // shuffle inside each group
  std::vector<Index> perm(20);
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng shuffle_rng(99);
  for (Index g = 0; g < 2; ++g) {
    Index lo = offsets[static_cast<std::size_t>(g)], hi = offsets[static_cast<std::size_t>(g) + 1];
    for (Index i = hi - 1; i > lo; --i)
      std::swap(perm[static_cast<std::size_t>(i)],
                perm[static_cast<std::size_t>(lo + static_cast<Index>(shuffle_rng.index(
                         static_cast<std::size_t>(i - lo + 1))))]);
  }
  Mat shuffled(20, 3);
  for (Index i = 0; i < 20; ++i) shuffled.row(i) = pts.row(perm[static_cast<std::size_t>(i)]);
  Tape t2(false);
  Mat y2 = pn(t2, t2.constant(shuffled), offsets).val();
  CHECK((y - y2).cwiseAbs().maxCoeff() < 1e-14);

  // a group is unaffected by edits to the other group
  Mat edited = pts;
  edited.bottomRows(8).array() += 0.37;
  Tape t3(false);
  Mat y3 = pn(t3, t3.constant(edited), offsets).val();
  CHECK((y3.row(0) - y.row(0)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((y3.row(1) - y.row(1)).cwiseAbs().maxCoeff() > 1e-6);

  auto f = [&](Tape& t, const std::vector<Var>& v) {
    return sum_all(square(pn(t, v[0], offsets)));
  };
  CHECK(max_grad_error(f, {pts}) < 1e-5);
}

TEST_CASE("conditioned decoder shapes and gradients") {
  Rng rng(13);
  ParameterStore ps;
  StatsStore ss;
  CondMlp mlp(ps, ss, rng, "mlp", 3, 24, 7, 5, 2);
  Mat x = random_mat(rng, 10, 3);
  Mat cond = random_mat(rng, 10, 5);

  Tape t(false);
  Mat y = mlp(t, t.constant(x), t.constant(cond), true).val();
  REQUIRE(y.rows() == 10);
  REQUIRE(y.cols() == 7);

  auto f = [&](Tape& t, const std::vector<Var>& v) {
    return sum_all(square(mlp(t, v[0], v[1], true)));
  };
  CHECK(max_grad_error(f, {x, cond}, 1e-6, 1e-5) < 1e-4);

  // eval mode consumes stored statistics and is deterministic
  Tape t2(false), t3(false);
  Mat e1 = mlp(t2, t2.constant(x), t2.constant(cond), false).val();
  Mat e2 = mlp(t3, t3.constant(x), t3.constant(cond), false).val();
  CHECK(e1 == e2);
}

TEST_CASE("structure encoder respects the kinematic hierarchy") {
  BodyModel body = leap::test::tiny_body();
  Index k = body.n_joints();
  Rng rng(17);
  ParameterStore ps;
  StructureEncoder enc(ps, rng, "enc", k, body.parent);

  Mat node_feats = random_mat(rng, k, 13);
  Mat root_feats = random_mat(rng, 1, 12 * k);

  Tape t(false);
  Mat code = enc(t, node_feats, root_feats).val();
  REQUIRE(code.rows() == 1);
  REQUIRE(code.cols() == StructureEncoder::kCodeDim * k);

  // find a leaf: a joint nobody lists as parent
  Index leaf = -1;
  for (Index j = k - 1; j >= 0; --j) {
    bool is_parent = false;
    for (int p : body.parent) is_parent |= p == j;
    if (!is_parent) {
      leaf = j;
      break;
    }
  }
  REQUIRE(leaf >= 0);

  Mat edited = node_feats;
  edited.row(leaf).array() += 0.5;
  Tape t2(false);
  Mat code2 = enc(t2, edited, root_feats).val();
  Index d = StructureEncoder::kCodeDim;
  for (Index j = 0; j < k; ++j) {
    double delta = (code2.middleCols(j * d, d) - code.middleCols(j * d, d)).cwiseAbs().maxCoeff();
    if (j == leaf)
      CHECK(delta > 1e-9);
    else
      CHECK(delta == 0.0);
  }

  // the root slot feeds every node
  Mat edited_root = root_feats;
  edited_root.array() += 0.25;
  Tape t3(false);
  Mat code3 = enc(t3, node_feats, edited_root).val();
  for (Index j = 0; j < k; ++j)
    CHECK((code3.middleCols(j * d, d) - code.middleCols(j * d, d)).cwiseAbs().maxCoeff() > 1e-12);
}
