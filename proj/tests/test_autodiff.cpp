#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lgmatch/autodiff.hpp"
#include "lgmatch/rng.hpp"

using namespace lgmatch;
using ad::Tape;
using ad::Var;

namespace {

Mat random_mat(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (auto& x : m.data()) x = scale * rng.normal();
  return m;
}

// Central finite differences of a scalar-valued tape program with respect to
// one input matrix.
double max_rel_err_wrt_input(const std::function<Var(Tape&, Var)>& program, const Mat& x0,
                             double h = 1e-6) {
  Mat x = x0;
  Tape t;
  Var xin = t.input(x);
  Var y = program(t, xin);
  t.backward(y);
  const Mat analytic = t.grad_of(xin);

  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Mat xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    Tape tp(false), tm(false);
    const double lp = tp.scalar(program(tp, tp.input(xp)));
    const double lm = tm.scalar(program(tm, tm.input(xm)));
    const double fd = (lp - lm) / (2.0 * h);
    const double an = analytic.data()[i];
    const double rel = std::fabs(an - fd) / std::max({1e-8, std::fabs(an), std::fabs(fd)});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul values and gradients") {
  Rng rng(3);
  const Mat a = random_mat(3, 4, rng);
  const Mat b = random_mat(4, 5, rng);
  Tape t;
  Var va = t.input(a), vb = t.input(b);
  Var c = t.matmul(va, vb);
  // value check against an explicit loop
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      CHECK(t.val(c)(i, j) == doctest::Approx(s).epsilon(1e-12));
    }

  auto prog = [&b](Tape& tp, Var x) { return tp.sum_all(tp.matmul(x, tp.constant(b))); };
  CHECK(max_rel_err_wrt_input(prog, a) < 1e-6);
}

TEST_CASE("elementwise op gradients") {
  Rng rng(5);
  const Mat x0 = random_mat(4, 3, rng);

  auto check = [&](const std::function<Var(Tape&, Var)>& f) {
    CHECK(max_rel_err_wrt_input(f, x0) < 1e-5);
  };
  check([](Tape& t, Var x) { return t.sum_all(t.tanh_(x)); });
  check([](Tape& t, Var x) { return t.sum_all(t.exp_(t.scale(x, 0.3))); });
  check([](Tape& t, Var x) { return t.sum_all(t.hadamard(x, x)); });
  check([](Tape& t, Var x) { return t.dot(x, t.add_scalar(t.scale(x, 2.0), 1.0)); });
  // relu away from the kink
  check([](Tape& t, Var x) { return t.sum_all(t.relu(t.add_scalar(x, 5.0))); });
}

TEST_CASE("softmax rows sum to one and gradient matches") {
  Rng rng(7);
  const Mat x0 = random_mat(3, 6, rng);
  Tape t;
  Var s = t.row_softmax(t.input(x0));
  for (std::size_t i = 0; i < 3; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 6; ++j) sum += t.val(s)(i, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  auto prog = [](Tape& tp, Var x) {
    Var sm = tp.row_softmax(x);
    return tp.dot(sm, tp.exp_(tp.scale(sm, 0.5)));
  };
  CHECK(max_rel_err_wrt_input(prog, x0) < 1e-5);
}

TEST_CASE("logsumexp rows/cols gradients") {
  Rng rng(9);
  const Mat x0 = random_mat(4, 5, rng, 2.0);
  CHECK(max_rel_err_wrt_input(
            [](Tape& t, Var x) { return t.sum_all(t.row_logsumexp(x)); }, x0) < 1e-6);
  CHECK(max_rel_err_wrt_input(
            [](Tape& t, Var x) { return t.sum_all(t.col_logsumexp(x)); }, x0) < 1e-6);
}

TEST_CASE("broadcast, concat, slice, select gradients") {
  Rng rng(11);
  const Mat row = random_mat(1, 4, rng);
  CHECK(max_rel_err_wrt_input(
            [](Tape& t, Var x) {
              Var b = t.broadcast_row(x, 5);
              return t.dot(b, b);
            },
            row) < 1e-6);
  const Mat col = random_mat(6, 1, rng);
  CHECK(max_rel_err_wrt_input(
            [](Tape& t, Var x) {
              Var b = t.broadcast_col(x, 3);
              return t.sum_all(t.tanh_(b));
            },
            col) < 1e-6);
  const Mat m = random_mat(3, 6, rng);
  CHECK(max_rel_err_wrt_input(
            [](Tape& t, Var x) {
              Var c = t.concat_cols(t.slice_cols(x, 0, 2), t.slice_cols(x, 3, 6));
              return t.add(t.sum_all(t.hadamard(c, c)), t.select_entry(x, 1, 4));
            },
            m) < 1e-6);
}

TEST_CASE("mean_rows and transpose gradients") {
  Rng rng(13);
  const Mat m = random_mat(5, 3, rng);
  CHECK(max_rel_err_wrt_input(
            [](Tape& t, Var x) {
              Var mu = t.mean_rows(x);
              return t.dot(mu, mu);
            },
            m) < 1e-6);
  CHECK(max_rel_err_wrt_input(
            [](Tape& t, Var x) { return t.sum_all(t.matmul(x, t.transpose(x))); }, m) < 1e-6);
  CHECK(max_rel_err_wrt_input(
            [](Tape& t, Var x) { return t.sum_all(t.tanh_(t.matmul_nt(x, x))); }, m) < 1e-6);
}

TEST_CASE("l2 row normalization") {
  Rng rng(15);
  const Mat m = random_mat(4, 5, rng);
  Tape t;
  Var y = t.l2_normalize_rows(t.input(m));
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) s += t.val(y)(i, j) * t.val(y)(i, j);
    CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(max_rel_err_wrt_input(
            [](Tape& tp, Var x) {
              Var n = tp.l2_normalize_rows(x);
              return tp.dot(n, tp.tanh_(n));
            },
            m) < 1e-5);

  // zero row maps to zero with zero gradient
  Mat z(2, 3);
  z(1, 0) = 1.0;
  Tape tz;
  Var vz = tz.input(z);
  Var nz = tz.l2_normalize_rows(vz);
  CHECK(tz.val(nz)(0, 0) == 0.0);
  CHECK(tz.val(nz)(0, 1) == 0.0);
  tz.backward(tz.sum_all(nz));
  CHECK(tz.grad_of(vz)(0, 0) == 0.0);
}

TEST_CASE("layer norm gradients for input, gamma and beta") {
  Rng rng(17);
  const Mat x0 = random_mat(3, 6, rng);
  const Mat g0 = random_mat(1, 6, rng, 0.5);
  const Mat b0 = random_mat(1, 6, rng, 0.5);

  CHECK(max_rel_err_wrt_input(
            [&](Tape& t, Var x) {
              return t.sum_all(
                  t.hadamard(t.layer_norm_rows(x, t.constant(g0), t.constant(b0)), x));
            },
            x0) < 1e-5);
  CHECK(max_rel_err_wrt_input(
            [&](Tape& t, Var g) {
              Var y = t.layer_norm_rows(t.constant(x0), g, t.constant(b0));
              return t.dot(y, y);
            },
            g0) < 1e-5);
  CHECK(max_rel_err_wrt_input(
            [&](Tape& t, Var b) {
              Var y = t.layer_norm_rows(t.constant(x0), t.constant(g0), b);
              return t.dot(y, y);
            },
            b0) < 1e-5);
}

TEST_CASE("parameters accumulate gradients across backward calls") {
  ad::Parameter p("w", Mat(2, 2, {1.0, 2.0, 3.0, 4.0}));
  Tape t;
  Var w = t.param(p);
  Var loss = t.dot(w, w);  // d/dw = 2w
  t.backward(loss);
  CHECK(p.grad(0, 0) == doctest::Approx(2.0));
  CHECK(p.grad(1, 1) == doctest::Approx(8.0));

  Tape t2;
  Var w2 = t2.param(p);
  t2.backward(t2.dot(w2, w2));
  CHECK(p.grad(0, 0) == doctest::Approx(4.0));  // accumulated
  p.zero_grad();
  CHECK(p.grad(0, 0) == 0.0);
}

TEST_CASE("non-recording tape computes values and refuses backward") {
  Tape t(false);
  Var a = t.input(Mat(1, 1, {2.0}));
  Var b = t.scale(a, 3.0);
  CHECK(t.scalar(b) == doctest::Approx(6.0));
  CHECK_THROWS_AS(t.backward(b), Error);
}
