#include "lgmatch/autodiff.hpp"

#include <cmath>

namespace lgmatch::ad {

Var Tape::push(Mat value, bool requires_grad, std::function<void(Tape&, int)> back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = recording_ && requires_grad;
  if (n.requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::accum(int idx, const Mat& g) {
  Node& n = node(idx);
  if (!n.requires_grad) return;
  if (n.grad.empty()) n.grad = Mat(n.value.rows(), n.value.cols());
  for (std::size_t i = 0; i < g.size(); ++i) n.grad.data()[i] += g.data()[i];
}

void Tape::accum_row(int idx, std::size_t row, const double* g, std::size_t n) {
  Node& nd = node(idx);
  if (!nd.requires_grad) return;
  if (nd.grad.empty()) nd.grad = Mat(nd.value.rows(), nd.value.cols());
  double* dst = nd.grad.row_ptr(row);
  for (std::size_t j = 0; j < n; ++j) dst[j] += g[j];
}

Var Tape::constant(Mat v) { return push(std::move(v), false, nullptr); }

Var Tape::input(Mat v) { return push(std::move(v), true, nullptr); }

Var Tape::param(Parameter& p) {
  Var out = push(p.value, true, nullptr);
  node(out.idx).bound = &p;
  return out;
}

void Tape::backward(Var root) {
  if (!recording_) throw Error("Tape::backward: tape is not recording");
  if (val(root).size() != 1) throw Error("Tape::backward: root must be scalar");
  Node& r = node(root.idx);
  if (r.grad.empty()) r.grad = Mat(1, 1);
  r.grad(0, 0) = 1.0;
  for (int i = root.idx; i >= 0; --i) {
    Node& n = node(i);
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.back) n.back(*this, i);
    if (n.bound) {
      for (std::size_t k = 0; k < n.grad.size(); ++k)
        n.bound->grad.data()[k] += n.grad.data()[k];
    }
  }
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
  Mat out = lgmatch::matmul(v(a.idx), v(b.idx));
  return push(std::move(out), rg(a) || rg(b), [a, b](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    if (t.rg(a)) t.accum(a.idx, lgmatch::matmul_nt(g, t.v(b.idx)));
    if (t.rg(b)) t.accum(b.idx, lgmatch::matmul_tn(t.v(a.idx), g));
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  Mat out = lgmatch::matmul_nt(v(a.idx), v(b.idx));
  return push(std::move(out), rg(a) || rg(b), [a, b](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    if (t.rg(a)) t.accum(a.idx, lgmatch::matmul(g, t.v(b.idx)));
    if (t.rg(b)) t.accum(b.idx, lgmatch::matmul_tn(g, t.v(a.idx)));
  });
}

Var Tape::transpose(Var a) {
  return push(lgmatch::transpose(v(a.idx)), rg(a), [a](Tape& t, int self) {
    t.accum(a.idx, lgmatch::transpose(t.node(self).grad));
  });
}

Var Tape::add(Var a, Var b) {
  return push(lgmatch::add(v(a.idx), v(b.idx)), rg(a) || rg(b), [a, b](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    t.accum(a.idx, g);
    t.accum(b.idx, g);
  });
}

Var Tape::sub(Var a, Var b) {
  return push(lgmatch::sub(v(a.idx), v(b.idx)), rg(a) || rg(b), [a, b](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    t.accum(a.idx, g);
    if (t.rg(b)) t.accum(b.idx, lgmatch::scale(g, -1.0));
  });
}

Var Tape::hadamard(Var a, Var b) {
  return push(lgmatch::hadamard(v(a.idx), v(b.idx)), rg(a) || rg(b), [a, b](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    if (t.rg(a)) t.accum(a.idx, lgmatch::hadamard(g, t.v(b.idx)));
    if (t.rg(b)) t.accum(b.idx, lgmatch::hadamard(g, t.v(a.idx)));
  });
}

Var Tape::scale(Var a, double s) {
  return push(lgmatch::scale(v(a.idx), s), rg(a), [a, s](Tape& t, int self) {
    t.accum(a.idx, lgmatch::scale(t.node(self).grad, s));
  });
}

Var Tape::add_scalar(Var a, double s) {
  return push(lgmatch::add_scalar(v(a.idx), s), rg(a), [a](Tape& t, int self) {
    t.accum(a.idx, t.node(self).grad);
  });
}

Var Tape::relu(Var a) {
  Mat out = apply(v(a.idx), [](double x) { return x > 0.0 ? x : 0.0; });
  return push(std::move(out), rg(a), [a](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    const Mat& x = t.v(a.idx);
    Mat da(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i)
      da.data()[i] = x.data()[i] > 0.0 ? g.data()[i] : 0.0;
    t.accum(a.idx, da);
  });
}

Var Tape::tanh_(Var a) {
  Mat out = apply(v(a.idx), [](double x) { return std::tanh(x); });
  return push(std::move(out), rg(a), [a](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    const Mat& y = t.v(self);
    Mat da(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.size(); ++i)
      da.data()[i] = g.data()[i] * (1.0 - y.data()[i] * y.data()[i]);
    t.accum(a.idx, da);
  });
}

Var Tape::exp_(Var a) {
  Mat out = apply(v(a.idx), [](double x) { return std::exp(x); });
  return push(std::move(out), rg(a), [a](Tape& t, int self) {
    t.accum(a.idx, lgmatch::hadamard(t.node(self).grad, t.v(self)));
  });
}

Var Tape::row_softmax(Var a) {
  Mat out = lgmatch::row_softmax(v(a.idx));
  return push(std::move(out), rg(a), [a](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    const Mat& s = t.v(self);
    Mat da(s.rows(), s.cols());
    for (std::size_t i = 0; i < s.rows(); ++i) {
      const double* gi = g.row_ptr(i);
      const double* si = s.row_ptr(i);
      double inner = 0.0;
      for (std::size_t j = 0; j < s.cols(); ++j) inner += gi[j] * si[j];
      double* di = da.row_ptr(i);
      for (std::size_t j = 0; j < s.cols(); ++j) di[j] = si[j] * (gi[j] - inner);
    }
    t.accum(a.idx, da);
  });
}

Var Tape::row_logsumexp(Var a) {
  Mat out = lgmatch::row_logsumexp(v(a.idx));
  return push(std::move(out), rg(a), [a](Tape& t, int self) {
    const Mat& g = t.node(self).grad;   // n x 1
    const Mat& x = t.v(a.idx);
    const Mat& l = t.v(self);
    Mat da(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double gi = g(i, 0);
      const double li = l(i, 0);
      const double* xi = x.row_ptr(i);
      double* di = da.row_ptr(i);
      for (std::size_t j = 0; j < x.cols(); ++j) di[j] = gi * std::exp(xi[j] - li);
    }
    t.accum(a.idx, da);
  });
}

Var Tape::col_logsumexp(Var a) {
  Mat out = lgmatch::col_logsumexp(v(a.idx));
  return push(std::move(out), rg(a), [a](Tape& t, int self) {
    const Mat& g = t.node(self).grad;   // 1 x m
    const Mat& x = t.v(a.idx);
    const Mat& l = t.v(self);
    Mat da(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double* xi = x.row_ptr(i);
      double* di = da.row_ptr(i);
      for (std::size_t j = 0; j < x.cols(); ++j)
        di[j] = g(0, j) * std::exp(xi[j] - l(0, j));
    }
    t.accum(a.idx, da);
  });
}

Var Tape::mean_rows(Var a) {
  Mat out = lgmatch::mean_rows(v(a.idx));
  return push(std::move(out), rg(a), [a](Tape& t, int self) {
    const Mat& g = t.node(self).grad;   // 1 x d
    const Mat& x = t.v(a.idx);
    const double inv = 1.0 / static_cast<double>(x.rows());
    Mat da(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) da(i, j) = g(0, j) * inv;
    t.accum(a.idx, da);
  });
}

Var Tape::sum_all(Var a) {
  Mat out(1, 1);
  out(0, 0) = lgmatch::sum_all(v(a.idx));
  return push(std::move(out), rg(a), [a](Tape& t, int self) {
    const double g = t.node(self).grad(0, 0);
    const Mat& x = t.v(a.idx);
    t.accum(a.idx, Mat::full(x.rows(), x.cols(), g));
  });
}

Var Tape::dot(Var a, Var b) {
  Mat out(1, 1);
  out(0, 0) = frobenius_dot(v(a.idx), v(b.idx));
  return push(std::move(out), rg(a) || rg(b), [a, b](Tape& t, int self) {
    const double g = t.node(self).grad(0, 0);
    if (t.rg(a)) t.accum(a.idx, lgmatch::scale(t.v(b.idx), g));
    if (t.rg(b)) t.accum(b.idx, lgmatch::scale(t.v(a.idx), g));
  });
}

Var Tape::broadcast_row(Var a, std::size_t n) {
  const Mat& x = v(a.idx);
  if (x.rows() != 1) throw Error("broadcast_row: input must be 1 x d");
  Mat out(n, x.cols());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(0, j);
  return push(std::move(out), rg(a), [a](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    Mat da(1, g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) da(0, j) += g(i, j);
    t.accum(a.idx, da);
  });
}

Var Tape::broadcast_col(Var a, std::size_t m) {
  const Mat& x = v(a.idx);
  if (x.cols() != 1) throw Error("broadcast_col: input must be n x 1");
  Mat out(x.rows(), m);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) = x(i, 0);
  return push(std::move(out), rg(a), [a](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    Mat da(g.rows(), 1);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) da(i, 0) += g(i, j);
    t.accum(a.idx, da);
  });
}

Var Tape::concat_cols(Var a, Var b) {
  Mat out = lgmatch::concat_cols(v(a.idx), v(b.idx));
  const std::size_t ca = v(a.idx).cols();
  return push(std::move(out), rg(a) || rg(b), [a, b, ca](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    if (t.rg(a)) t.accum(a.idx, lgmatch::slice_cols(g, 0, ca));
    if (t.rg(b)) t.accum(b.idx, lgmatch::slice_cols(g, ca, g.cols()));
  });
}

Var Tape::slice_cols(Var a, std::size_t from, std::size_t to) {
  Mat out = lgmatch::slice_cols(v(a.idx), from, to);
  return push(std::move(out), rg(a), [a, from, to](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    const Mat& x = t.v(a.idx);
    Mat da(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = from; j < to; ++j) da(i, j) = g(i, j - from);
    t.accum(a.idx, da);
  });
}

Var Tape::select_entry(Var a, std::size_t i, std::size_t j) {
  Mat out(1, 1);
  out(0, 0) = v(a.idx)(i, j);
  return push(std::move(out), rg(a), [a, i, j](Tape& t, int self) {
    const double g = t.node(self).grad(0, 0);
    const Mat& x = t.v(a.idx);
    Mat da(x.rows(), x.cols());
    da(i, j) = g;
    t.accum(a.idx, da);
  });
}

Var Tape::l2_normalize_rows(Var a) {
  Mat out = lgmatch::l2_normalize_rows(v(a.idx));
  return push(std::move(out), rg(a), [a](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    const Mat& x = t.v(a.idx);
    const Mat& y = t.v(self);
    Mat da(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double* xi = x.row_ptr(i);
      const double* yi = y.row_ptr(i);
      const double* gi = g.row_ptr(i);
      double nrm2 = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j) nrm2 += xi[j] * xi[j];
      if (nrm2 == 0.0) continue;  // zero row maps to zero with zero gradient
      const double inv = 1.0 / std::sqrt(nrm2);
      double gy = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j) gy += gi[j] * yi[j];
      double* di = da.row_ptr(i);
      for (std::size_t j = 0; j < x.cols(); ++j) di[j] = inv * (gi[j] - gy * yi[j]);
    }
    t.accum(a.idx, da);
  });
}

Var Tape::layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  const Mat& xv = v(x.idx);
  const Mat& gv = v(gamma.idx);
  const Mat& bv = v(beta.idx);
  if (gv.rows() != 1 || bv.rows() != 1 || gv.cols() != xv.cols() || bv.cols() != xv.cols())
    throw Error("layer_norm_rows: gamma/beta must be 1 x d");
  const std::size_t n = xv.rows(), d = xv.cols();
  Mat out(n, d);
  // xhat and inv_std are recomputed in backward from the input; cheap at
  // these sizes and keeps the node payload small.
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = xv.row_ptr(i);
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(d);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    double* oi = out.row_ptr(i);
    for (std::size_t j = 0; j < d; ++j)
      oi[j] = (xi[j] - mean) * inv_std * gv(0, j) + bv(0, j);
  }
  return push(std::move(out), rg(x) || rg(gamma) || rg(beta),
              [x, gamma, beta, eps](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    const Mat& xv = t.v(x.idx);
    const Mat& gv = t.v(gamma.idx);
    const std::size_t n = xv.rows(), d = xv.cols();
    Mat dx(n, d), dgamma(1, d), dbeta(1, d);
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = xv.row_ptr(i);
      const double* gi = g.row_ptr(i);
      double mean = 0.0;
      for (std::size_t j = 0; j < d; ++j) mean += xi[j];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
      var /= static_cast<double>(d);
      const double inv_std = 1.0 / std::sqrt(var + eps);
      // dxhat = g * gamma; dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double xhat = (xi[j] - mean) * inv_std;
        const double dxhat = gi[j] * gv(0, j);
        m1 += dxhat;
        m2 += dxhat * xhat;
        dgamma(0, j) += gi[j] * xhat;
        dbeta(0, j) += gi[j];
      }
      m1 /= static_cast<double>(d);
      m2 /= static_cast<double>(d);
      double* di = dx.row_ptr(i);
      for (std::size_t j = 0; j < d; ++j) {
        const double xhat = (xi[j] - mean) * inv_std;
        const double dxhat = gi[j] * gv(0, j);
        di[j] = inv_std * (dxhat - m1 - xhat * m2);
      }
    }
    if (t.rg(x)) t.accum(x.idx, dx);
    if (t.rg(gamma)) t.accum(gamma.idx, dgamma);
    if (t.rg(beta)) t.accum(beta.idx, dbeta);
  });
}

}  // namespace lgmatch::ad
