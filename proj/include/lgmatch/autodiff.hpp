#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lgmatch/mat.hpp"

namespace lgmatch::ad {

// Named learnable tensor. Gradients from one or more tapes accumulate into
// `grad` until zero_grad() is called by the optimizer.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter() = default;
  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) {
    grad = Mat(value.rows(), value.cols());
  }
  void zero_grad() { grad = Mat(value.rows(), value.cols()); }
};

struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode tape over dense matrices. Nodes are created in forward
// execution order; backward() sweeps them in reverse. A tape constructed
// with recording=false computes values only (cheap inference mode).
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t node_count() const { return nodes_.size(); }

  const Mat& val(Var v) const { return nodes_[static_cast<std::size_t>(v.idx)].value; }
  const Mat& grad_of(Var v) const { return nodes_[static_cast<std::size_t>(v.idx)].grad; }
  double scalar(Var v) const {
    const Mat& m = val(v);
    if (m.size() != 1) throw Error("Tape::scalar: var is not 1x1");
    return m.data()[0];
  }

  // Leaves ---------------------------------------------------------------
  Var constant(Mat v);             // never differentiated
  Var input(Mat v);                // differentiated leaf (for input-gradient checks)
  Var param(Parameter& p);         // leaf bound to an external Parameter

  // Ops ------------------------------------------------------------------
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);     // a * b^T
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var relu(Var a);
  Var tanh_(Var a);
  Var exp_(Var a);
  Var row_softmax(Var a);
  Var row_logsumexp(Var a);        // n x m -> n x 1
  Var col_logsumexp(Var a);        // n x m -> 1 x m
  Var mean_rows(Var a);            // n x d -> 1 x d
  Var sum_all(Var a);              // -> 1 x 1
  Var dot(Var a, Var b);           // frobenius inner product -> 1 x 1
  Var broadcast_row(Var a, std::size_t n);   // 1 x d -> n x d
  Var broadcast_col(Var a, std::size_t m);   // n x 1 -> n x m
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, std::size_t from, std::size_t to);
  Var select_entry(Var a, std::size_t i, std::size_t j);  // -> 1 x 1
  Var l2_normalize_rows(Var a);    // zero rows stay zero
  Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);

  // Runs reverse accumulation from a 1x1 root; scatters leaf gradients into
  // bound Parameters.
  void backward(Var root);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void(Tape&, int)> back;  // (tape, self index)
    Parameter* bound = nullptr;
  };

  std::vector<Node> nodes_;
  bool recording_ = true;

  Node& node(int i) { return nodes_[static_cast<std::size_t>(i)]; }
  const Mat& v(int i) const { return nodes_[static_cast<std::size_t>(i)].value; }
  bool rg(Var a) const { return nodes_[static_cast<std::size_t>(a.idx)].requires_grad; }

  Var push(Mat value, bool requires_grad, std::function<void(Tape&, int)> back);
  void accum(int idx, const Mat& g);
  // Adds g into the i-th row of node idx's grad.
  void accum_row(int idx, std::size_t row, const double* g, std::size_t n);

  friend struct BackCtx;
};

}  // namespace lgmatch::ad
