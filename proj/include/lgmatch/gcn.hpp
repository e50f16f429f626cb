#pragma once

#include "lgmatch/autodiff.hpp"
#include "lgmatch/knn_graph.hpp"
#include "lgmatch/mat.hpp"

namespace lgmatch::gcn {

// Symmetrically normalized adjacency with self-loops:
// A_hat = D^{-1/2} (A_sym + I) D^{-1/2}, where A_sym treats an edge as
// present if either direction is, and D are the degrees of A_sym + I.
Mat normalize_adjacency(const std::vector<graph::Edge>& edges, std::size_t n);

// H^(0) = X, H^(l+1) = sigma(A_hat H^(l) W^(l)). ReLU on every layer; the
// final activation can be switched off.
ad::Var gcn_forward(ad::Tape& t, ad::Var x, ad::Var a_hat, const std::vector<ad::Var>& weights,
                    bool relu_last = true);

ad::Var global_mean_pool(ad::Tape& t, ad::Var h);

// Token i = [H_i || f_global]; also exposes the pooled fused vector
// [z || f_global] via pooled_fused() for logging/projection.
ad::Var build_tokens(ad::Tape& t, ad::Var h, ad::Var f_global);
ad::Var pooled_fused(ad::Tape& t, ad::Var h, ad::Var f_global);

// Plain (value-only) convenience wrappers around the taped ops.
Mat gcn_forward_plain(const Mat& x, const Mat& a_hat, const std::vector<Mat>& weights,
                      bool relu_last = true);
Mat global_mean_pool_plain(const Mat& h);

}  // namespace lgmatch::gcn
