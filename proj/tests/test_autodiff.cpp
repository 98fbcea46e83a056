#include "doctest.h"
#include "helpers.hpp"
#include "leap/autodiff.hpp"
#include "leap/body.hpp"
#include "leap/skinning.hpp"

using namespace leap;
using leap::test::max_grad_error;
using leap::test::random_mat;

namespace {

// scalar probe: random fixed weights keep the loss linear in the op output
Var probe(Tape& t, Var v, std::uint64_t seed) {
  Rng rng(seed);
  return sum_all(cmul(v, t.constant(random_mat(rng, v.rows(), v.cols()))));
}

Mat away_from(Mat m, double gap) {
  for (Index i = 0; i < m.size(); ++i)
    if (std::abs(m.data()[i]) < gap) m.data()[i] += (m.data()[i] >= 0 ? gap : -gap);
  return m;
}

Mat rigid_rows(Rng& rng, Index k) {
  Mat rows(k, 12);
  for (Index i = 0; i < k; ++i) {
    Mat3 r = rodrigues(0.7 * rng.normal3());
    for (Index a = 0; a < 3; ++a)
      for (Index b = 0; b < 3; ++b) rows(i, 3 * a + b) = r(a, b);
    rows.block<1, 3>(i, 9) = rng.normal3().transpose();
  }
  return rows;
}

}  // namespace

TEST_CASE("elementwise and reduction op gradients match finite differences") {
  Rng rng(11);
  Mat a = random_mat(rng, 4, 5), b = random_mat(rng, 4, 5), row = random_mat(rng, 1, 5);

  auto one = [&](const char* name, const leap::test::LossFn& f, std::vector<Mat> ins) {
    INFO(name);
    CHECK(max_grad_error(f, ins) < 1e-5);
  };

  one("add", [](Tape& t, const std::vector<Var>& v) { return probe(t, add(v[0], v[1]), 1); },
      {a, b});
  one("add broadcast",
      [](Tape& t, const std::vector<Var>& v) { return probe(t, add(v[0], v[1]), 2); }, {a, row});
  one("sub", [](Tape& t, const std::vector<Var>& v) { return probe(t, sub(v[0], v[1]), 3); },
      {a, b});
  one("cmul", [](Tape& t, const std::vector<Var>& v) { return probe(t, cmul(v[0], v[1]), 4); },
      {a, b});
  one("cmul broadcast",
      [](Tape& t, const std::vector<Var>& v) { return probe(t, cmul(v[0], v[1]), 5); }, {a, row});
  one("scale", [](Tape& t, const std::vector<Var>& v) { return probe(t, scale(v[0], -2.5), 6); },
      {a});
  one("add_scalar",
      [](Tape& t, const std::vector<Var>& v) { return probe(t, add_scalar(v[0], 0.75), 7); }, {a});
  one("relu", [](Tape& t, const std::vector<Var>& v) { return probe(t, relu(v[0]), 8); },
      {away_from(a, 0.05)});
  one("sigmoid", [](Tape& t, const std::vector<Var>& v) { return probe(t, sigmoid(v[0]), 9); },
      {a});
  one("abs", [](Tape& t, const std::vector<Var>& v) { return probe(t, abs_val(v[0]), 10); },
      {away_from(a, 0.05)});
  one("square", [](Tape& t, const std::vector<Var>& v) { return probe(t, square(v[0]), 11); },
      {a});
  one("clamp_unit",
      [](Tape& t, const std::vector<Var>& v) { return probe(t, clamp_unit(v[0]), 12); },
      {away_from(away_from(a, 0.05), 0.05)});
  one("sum_all", [](Tape& t, const std::vector<Var>& v) { return sum_all(square(v[0])); }, {a});
  one("mean_all", [](Tape& t, const std::vector<Var>& v) { return mean_all(square(v[0])); }, {a});
  one("rowwise_sum",
      [](Tape& t, const std::vector<Var>& v) { return probe(t, rowwise_sum(square(v[0])), 13); },
      {a});
  one("softmax",
      [](Tape& t, const std::vector<Var>& v) { return probe(t, softmax_rows(v[0]), 14); }, {a});
}

TEST_CASE("matmul and linear gradients match finite differences") {
  Rng rng(21);
  Mat x = random_mat(rng, 5, 3), w = random_mat(rng, 4, 3), bias = random_mat(rng, 1, 4);
  Mat m = random_mat(rng, 3, 6);

  CHECK(max_grad_error(
            [](Tape& t, const std::vector<Var>& v) { return probe(t, matmul(v[0], v[1]), 1); },
            {x, m}) < 1e-5);
  CHECK(max_grad_error(
            [](Tape& t, const std::vector<Var>& v) {
              return probe(t, linear(v[0], v[1], v[2]), 2);
            },
            {x, w, bias}) < 1e-5);
  CHECK(max_grad_error(
            [](Tape& t, const std::vector<Var>& v) {
              return probe(t, linear(v[0], v[1], Var()), 3);
            },
            {x, w}) < 1e-5);
}

TEST_CASE("shape ops route gradients to the right slots") {
  Rng rng(31);
  Mat a = random_mat(rng, 3, 4), b = random_mat(rng, 3, 2), c = random_mat(rng, 2, 4);
  Mat one_row = random_mat(rng, 1, 4);

  auto ok = [&](const char* name, const leap::test::LossFn& f, std::vector<Mat> ins) {
    INFO(name);
    CHECK(max_grad_error(f, ins) < 1e-5);
  };

  ok("concat_cols",
     [](Tape& t, const std::vector<Var>& v) {
       return probe(t, concat_cols({v[0], v[1]}), 1);
     },
     {a, b});
  ok("concat_rows",
     [](Tape& t, const std::vector<Var>& v) {
       return probe(t, concat_rows({v[0], v[1]}), 2);
     },
     {a, c});
  ok("slice_cols",
     [](Tape& t, const std::vector<Var>& v) { return probe(t, slice_cols(v[0], 1, 2), 3); }, {a});
  ok("slice_rows",
     [](Tape& t, const std::vector<Var>& v) { return probe(t, slice_rows(v[0], 1, 2), 4); }, {a});
  ok("reshape",
     [](Tape& t, const std::vector<Var>& v) { return probe(t, reshape_rowmajor(v[0], 4, 3), 5); },
     {a});
  ok("gather dup rows",
     [](Tape& t, const std::vector<Var>& v) {
       return probe(t, gather_rows(v[0], {2, 0, 2, 1}), 6);
     },
     {a});
  ok("repeat_rows",
     [](Tape& t, const std::vector<Var>& v) { return probe(t, repeat_rows(v[0], 5), 7); },
     {one_row});

  // gather duplicates must accumulate: d/dx of (x2 + x2) picks up both rows
  Tape t(true);
  Var x = t.leaf(a);
  t.backward(sum_all(gather_rows(x, {2, 2})));
  CHECK(t.grad(x).row(2).isApprox(Mat::Ones(1, 4).row(0).array().matrix() * 2.0));
  CHECK(t.grad(x).row(0).isZero());
}

TEST_CASE("group max takes per-group column maxima and routes gradients to the argmax") {
  Mat a(5, 2);
  a << 1, 9, 4, 2, 3, 7, 10, 1, 2, 5;
  Tape t(true);
  Var x = t.leaf(a);
  Var g = group_colwise_max(x, {0, 3, 5});
  CHECK(g.rows() == 2);
  CHECK(g.val()(0, 0) == 4);
  CHECK(g.val()(0, 1) == 9);
  CHECK(g.val()(1, 0) == 10);
  CHECK(g.val()(1, 1) == 5);
  t.backward(sum_all(g));
  Mat expect = Mat::Zero(5, 2);
  expect(1, 0) = 1;  // argmax rows per column per group
  expect(0, 1) = 1;
  expect(3, 0) = 1;
  expect(4, 1) = 1;
  CHECK(t.grad(x) == expect);

  Rng rng(41);
  CHECK(max_grad_error(
            [](Tape& t2, const std::vector<Var>& v) {
              return probe(t2, group_colwise_max(v[0], {0, 3, 5}), 8);
            },
            {random_mat(rng, 5, 4)}) < 1e-5);
}

TEST_CASE("batch norm training normalizes, updates statistics and backpropagates") {
  Rng rng(51);
  Mat x = random_mat(rng, 16, 3, 2.0);
  x.array().rowwise() += Eigen::RowVector3d(1.0, -2.0, 0.5).array();

  CbnState state;
  state.init(3);
  Tape t(true);
  Var y = batchnorm(t.leaf(x), state, true);
  CHECK(y.val().colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
  Mat centered = y.val().rowwise() - y.val().colwise().mean();
  Vec var = centered.array().square().colwise().mean().transpose();
  CHECK((var.array() - 1.0).abs().maxCoeff() < 1e-3);  // biased variance, eps shrinks it

  Vec mu = x.colwise().mean().transpose();
  CHECK(state.mean.isApprox(0.1 * mu, 1e-12));  // momentum 0.9 from zero init

  CbnState fresh;
  fresh.init(3);
  CHECK(max_grad_error(
            [&](Tape& t2, const std::vector<Var>& v) {
              CbnState s = fresh;
              return probe(t2, batchnorm(v[0], s, true), 9);
            },
            {x}) < 1e-5);
}

TEST_CASE("batch norm eval mode uses the stored statistics") {
  CbnState state;
  state.init(2);
  state.mean << 1.0, -1.0;
  state.var << 4.0, 0.25;
  Mat x(2, 2);
  x << 3.0, 0.0, 1.0, -2.0;
  Tape t(false);
  Var y = batchnorm(t.constant(x), state, false);
  CHECK(y.val()(0, 0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(y.val()(0, 1) == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(y.val()(1, 0) == doctest::Approx(0.0));
  CHECK(y.val()(1, 1) == doctest::Approx(-2.0).epsilon(1e-4));
  CHECK(state.mean(0) == 1.0);  // eval must not touch the stats

  CbnState s2 = state;
  CHECK(max_grad_error(
            [&](Tape& t2, const std::vector<Var>& v) {
              return probe(t2, batchnorm(v[0], s2, false), 10);
            },
            {x}) < 1e-5);
}

TEST_CASE("affine stack ops match the plain helpers and finite differences") {
  Rng rng(61);
  Mat a = rigid_rows(rng, 4), b = rigid_rows(rng, 4), single = rigid_rows(rng, 1);
  Mat pts = random_mat(rng, 4, 3);

  Tape t(false);
  Var ab = affine_mul(t.constant(a), t.constant(b));
  for (Index i = 0; i < 4; ++i)
    CHECK(ab.val().row(i).transpose().isApprox(affine_row_compose(a.row(i), b.row(i)), 1e-12));
  Var inv = affine_inverse_rigid(t.constant(a));
  for (Index i = 0; i < 4; ++i)
    CHECK(inv.val().row(i).transpose().isApprox(affine_row_invert_rigid(a.row(i)), 1e-12));
  Var ap = affine_apply(t.constant(a), t.constant(pts));
  for (Index i = 0; i < 4; ++i)
    CHECK(ap.val().row(i).transpose().isApprox(affine_row_apply(a.row(i), pts.row(i)), 1e-12));

  auto ok = [&](const char* name, const leap::test::LossFn& f, std::vector<Mat> ins) {
    INFO(name);
    CHECK(max_grad_error(f, ins, 1e-6) < 1e-5);
  };
  ok("affine_mul",
     [](Tape& t2, const std::vector<Var>& v) { return probe(t2, affine_mul(v[0], v[1]), 1); },
     {a, b});
  ok("affine_mul broadcast",
     [](Tape& t2, const std::vector<Var>& v) { return probe(t2, affine_mul(v[0], v[1]), 2); },
     {single, b});
  ok("affine_apply",
     [](Tape& t2, const std::vector<Var>& v) { return probe(t2, affine_apply(v[0], v[1]), 3); },
     {a, pts});
  ok("affine_apply broadcast",
     [](Tape& t2, const std::vector<Var>& v) { return probe(t2, affine_apply(v[0], v[1]), 4); },
     {single, pts});
  // the inverse backward assumes orthonormal rotation blocks, so directions
  // off the rigid manifold disagree with plain finite differences; probe it
  // through a composition that stays rigid instead
  ok("affine_inverse via translation",
     [&](Tape& t2, const std::vector<Var>& v) {
       Var rows = affine_mul(t2.constant(a), affine_inverse_rigid(affine_mul(t2.constant(b), v[0])));
       return probe(t2, rows, 5);
     },
     {Mat(affine_row_identity().transpose())});
}

TEST_CASE("point canonicalization matches the plain solver and its gradients check out") {
  Rng rng(71);
  Index k = 5, n = 6;
  Mat stack = rigid_rows(rng, k);
  Mat w = random_mat(rng, n, k).array().abs().matrix();
  for (Index i = 0; i < n; ++i) w.row(i) /= w.row(i).sum();
  Mat pts = random_mat(rng, n, 3);

  Tape t(false);
  Var out = canonicalize_points(t.constant(w), t.constant(stack), t.constant(pts));
  CHECK(out.val().isApprox(canonicalize_plain(w, stack, pts), 1e-10));

  CHECK(max_grad_error(
            [&](Tape& t2, const std::vector<Var>& v) {
              return probe(t2, canonicalize_points(v[0], v[1], v[2]), 1);
            },
            {w, stack, pts}, 1e-6) < 2e-5);
}

TEST_CASE("canonicalization falls back to the dominant bone when the blend is singular") {
  // two opposing quarter-turns blend to diag(1, 0, 0): determinant 0
  Mat stack(2, 12);
  Mat3 r = rodrigues(Vec3(M_PI / 2, 0, 0));
  for (Index j = 0; j < 2; ++j) {
    Mat3 rot = (j == 0) ? r : Mat3(r.transpose());
    for (Index a = 0; a < 3; ++a)
      for (Index b = 0; b < 3; ++b) stack(j, 3 * a + b) = rot(a, b);
    stack.block<1, 3>(j, 9).setZero();
  }
  Mat w(1, 2);
  w << 0.5 + 1e-12, 0.5 - 1e-12;
  Mat pts(1, 3);
  pts << 0.3, -0.2, 0.9;

  Tape t(false);
  std::vector<int> fallback;
  Var out = canonicalize_points(t.constant(w), t.constant(stack), t.constant(pts), 1e-8, &fallback);
  REQUIRE(fallback.size() == 1);
  CHECK(fallback[0] == 0);
  Vec expect = affine_row_invert_rigid(stack.row(0));
  CHECK(out.val().row(0).transpose().isApprox(affine_row_apply(expect, pts.row(0)), 1e-10));
}

TEST_CASE("pose projection matches the plain helper with gradients") {
  Rng rng(81);
  Mat stack = rigid_rows(rng, 6);
  Mat t0 = random_mat(rng, 1, 3);

  Tape t(false);
  Var out = pose_project(t.constant(stack), t.constant(t0));
  CHECK(out.val().isApprox(projected_root(stack, t0.row(0).transpose()), 1e-12));

  CHECK(max_grad_error(
            [](Tape& t2, const std::vector<Var>& v) {
              return probe(t2, pose_project(v[0], v[1]), 1);
            },
            {stack, t0}, 1e-6) < 1e-5);
}

TEST_CASE("adam takes the textbook first step and respects freezing") {
  ParameterStore ps;
  int id = ps.add("w", Mat::Constant(1, 2, 1.0));
  ps.entry(id).grad << 0.3, -0.02;
  ps.adam_step(0.01);
  // bias-corrected first step is lr * g / (|g| + eps): one lr step toward zero
  CHECK(ps.entry(id).value(0, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(ps.entry(id).value(0, 1) == doctest::Approx(1.0 + 0.01).epsilon(1e-6));
  CHECK(ps.entry(id).grad.isZero());
  CHECK(ps.entry(id).steps == 1);

  ps.set_frozen("w", true);
  Mat before = ps.entry(id).value;
  ps.entry(id).grad << 1.0, 1.0;
  ps.adam_step(0.01);
  CHECK(ps.entry(id).value == before);
  CHECK(ps.entry(id).grad.isZero());
  ps.set_frozen("", false);

  ps.entry(id).grad << std::nan(""), 0.0;
  CHECK_THROWS_WITH_AS(ps.adam_step(0.01), doctest::Contains("w"), std::exception);
}

TEST_CASE("parameters accumulate gradients through the tape") {
  ParameterStore ps;
  int id = ps.add("p", Mat::Constant(2, 2, 0.5));
  Tape t(true);
  Var p = t.param(ps, "p");
  t.backward(sum_all(square(p)));
  CHECK(ps.entry(id).grad.isApprox(Mat::Constant(2, 2, 1.0)));

  // grad-disabled tapes read parameters as constants and refuse backward
  ps.zero_grad();
  Tape t2(false);
  Var loss = sum_all(square(t2.param(ps, id)));
  CHECK_THROWS(t2.backward(loss));
  CHECK(ps.entry(id).grad.isZero());

  // frozen parameters enter any tape as constants
  ps.set_frozen("p", true);
  Tape t3(true);
  t3.backward(sum_all(square(t3.param(ps, id))));
  CHECK(ps.entry(id).grad.isZero());
  ps.set_frozen("", false);
}
