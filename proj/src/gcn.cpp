#include "lgmatch/gcn.hpp"

#include <cmath>

namespace lgmatch::gcn {

Mat normalize_adjacency(const std::vector<graph::Edge>& edges, std::size_t n) {
  Mat a(n, n);
  for (const auto& [s, d] : edges) {
    if (s >= n || d >= n) throw Error("normalize_adjacency: edge endpoint out of range");
    if (s == d) continue;
    a(s, d) = 1.0;
    a(d, s) = 1.0;
  }
  for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += a(i, j);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
  return a;
}

ad::Var gcn_forward(ad::Tape& t, ad::Var x, ad::Var a_hat, const std::vector<ad::Var>& weights,
                    bool relu_last) {
  if (weights.empty()) throw Error("gcn_forward: no layers");
  ad::Var h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    h = t.matmul(t.matmul(a_hat, h), weights[l]);
    if (l + 1 < weights.size() || relu_last) h = t.relu(h);
  }
  return h;
}

ad::Var global_mean_pool(ad::Tape& t, ad::Var h) {
  if (t.val(h).rows() == 0) throw Error("global_mean_pool: empty input");
  return t.mean_rows(h);
}

ad::Var build_tokens(ad::Tape& t, ad::Var h, ad::Var f_global) {
  const std::size_t n = t.val(h).rows();
  return t.concat_cols(h, t.broadcast_row(f_global, n));
}

ad::Var pooled_fused(ad::Tape& t, ad::Var h, ad::Var f_global) {
  return t.concat_cols(global_mean_pool(t, h), f_global);
}

Mat gcn_forward_plain(const Mat& x, const Mat& a_hat, const std::vector<Mat>& weights,
                      bool relu_last) {
  ad::Tape t(false);
  std::vector<ad::Var> ws;
  ws.reserve(weights.size());
  for (const Mat& w : weights) ws.push_back(t.constant(w));
  return t.val(gcn_forward(t, t.constant(x), t.constant(a_hat), ws, relu_last));
}

Mat global_mean_pool_plain(const Mat& h) {
  if (h.rows() == 0) throw Error("global_mean_pool: empty input");
  return mean_rows(h);
}

}  // namespace lgmatch::gcn
