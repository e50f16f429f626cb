#pragma once

#include <vector>

#include "lgmatch/autodiff.hpp"
#include "lgmatch/mat.hpp"

namespace lgmatch::ot {

// C(i,j) = 1 - cosine(a_i, b_j); zero-norm rows score cosine 0 (cost 1).
Mat cosine_cost(const Mat& a, const Mat& b);

// Taped version built from row normalization + matmul, so gradients flow
// into both token sets.
ad::Var cosine_cost_var(ad::Tape& t, ad::Var a, ad::Var b);

struct TransportPlan {
  Mat plan;                // N_s x N_f, total mass 1
  std::vector<double> mu;  // row marginals
  std::vector<double> nu;  // column marginals
  double epsilon = 0.1;
  std::size_t iters = 80;
};

std::vector<double> uniform_marginal(std::size_t n);

// Log-domain Sinkhorn: `iters` rounds of a row scaling followed by a column
// scaling of K = exp(-C/eps); the returned plan has exact column marginals
// and row marginals within the convergence tolerance of the budget.
TransportPlan sinkhorn(const Mat& cost, const std::vector<double>& mu,
                       const std::vector<double>& nu, double epsilon, std::size_t iters);

// Same iteration built on the tape; gradients flow through every unrolled
// scaling step.
ad::Var sinkhorn_var(ad::Tape& t, ad::Var cost, const std::vector<double>& mu,
                     const std::vector<double>& nu, double epsilon, std::size_t iters);

// S_OT = -<T, C>; L_OT = <T, C>.
double ot_similarity(const Mat& plan, const Mat& cost);
double ot_loss(const Mat& plan, const Mat& cost);

// Entropic objective <T, C> - eps * H(T), H(T) = -sum T log T.
double entropic_objective(const Mat& plan, const Mat& cost, double epsilon);

}  // namespace lgmatch::ot
