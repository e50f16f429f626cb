#include "lgmatch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "lgmatch/rng.hpp"

namespace lgmatch::eval {

RankedRetrieval score_gallery(const model::PreparedSample& query,
                              const std::vector<model::PreparedSample>& gallery,
                              model::ModelParams& params, const model::ModelConfig& mc,
                              double beta) {
  if (gallery.empty()) throw Error("score_gallery: empty gallery");
  struct Entry { double score; std::string id; };
  std::vector<Entry> entries;
  entries.reserve(gallery.size());
  for (const auto& g : gallery)
    entries.push_back({model::pair_score(query, g, params, mc, beta), g.id});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  RankedRetrieval r;
  r.query_id = query.id;
  for (const auto& e : entries) {
    r.gallery_ids.push_back(e.id);
    r.scores.push_back(e.score);
  }
  return r;
}

namespace {

// 1-based rank of the relevant item, or 0 if absent.
std::size_t rank_of(const RankedRetrieval& r, const std::map<std::string, std::string>& truth) {
  auto it = truth.find(r.query_id);
  if (it == truth.end()) throw Error("missing ground truth for query '" + r.query_id + "'");
  for (std::size_t i = 0; i < r.gallery_ids.size(); ++i)
    if (r.gallery_ids[i] == it->second) return i + 1;
  return 0;
}

}  // namespace

double recall_at_k(const std::vector<RankedRetrieval>& rankings,
                   const std::map<std::string, std::string>& truth, std::size_t k) {
  if (rankings.empty()) throw Error("recall_at_k: no rankings");
  double hits = 0.0;
  for (const auto& r : rankings) {
    const std::size_t rank = rank_of(r, truth);
    if (rank >= 1 && rank <= k) hits += 1.0;
  }
  return hits / static_cast<double>(rankings.size());
}

double map_at_k(const std::vector<RankedRetrieval>& rankings,
                const std::map<std::string, std::string>& truth, std::size_t k) {
  if (rankings.empty()) throw Error("map_at_k: no rankings");
  double s = 0.0;
  for (const auto& r : rankings) {
    const std::size_t rank = rank_of(r, truth);
    if (rank >= 1 && rank <= k) s += 1.0 / static_cast<double>(rank);
  }
  return s / static_cast<double>(rankings.size());
}

MetricReport compute_metrics(const std::vector<RankedRetrieval>& rankings,
                             const std::map<std::string, std::string>& truth,
                             const std::vector<std::size_t>& ks) {
  MetricReport rep;
  rep.ks = ks;
  rep.query_count = rankings.size();
  for (std::size_t k : ks) {
    rep.recall.push_back(recall_at_k(rankings, truth, k));
    rep.map.push_back(map_at_k(rankings, truth, k));
  }
  return rep;
}

std::string format_report(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  if (rows.empty()) return "";
  std::ostringstream out;
  const auto& ks = rows.front().second.ks;
  out << "gallery   queries";
  for (std::size_t k : ks) out << "  R@" << k;
  for (std::size_t k : ks) out << "  mAP@" << k;
  out << "\n";
  for (const auto& [label, rep] : rows) {
    char buf[32];
    out << label;
    for (std::size_t i = label.size(); i < 10; ++i) out << ' ';
    std::snprintf(buf, sizeof(buf), "%6zu", rep.query_count);
    out << buf;
    for (std::size_t i = 0; i < rep.ks.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "  %.4f", rep.recall[i]);
      out << buf;
    }
    for (std::size_t i = 0; i < rep.ks.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "  %.4f", rep.map[i]);
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

namespace {

// Leading principal eigenvector of a symmetric matrix by power iteration.
std::pair<Mat, double> power_iterate(const Mat& cov, Rng& rng) {
  const std::size_t d = cov.rows();
  Mat v(d, 1);
  for (auto& x : v.data()) x = rng.normal();
  double lambda = 0.0;
  for (int it = 0; it < 1000; ++it) {
    Mat w = matmul(cov, v);
    const double nrm = vec_norm(w);
    if (nrm < 1e-300) return {Mat(d, 1), 0.0};
    for (auto& x : w.data()) x /= nrm;
    const double delta = std::min(max_abs_diff(w, v), max_abs_diff(scale(w, -1.0), v));
    v = std::move(w);
    lambda = nrm;
    if (delta < 1e-14) break;
  }
  // Rayleigh quotient for the eigenvalue (v is unit).
  lambda = frobenius_dot(v, matmul(cov, v));
  // Sign convention: first loading with magnitude above threshold is positive.
  for (std::size_t i = 0; i < d; ++i) {
    if (std::fabs(v(i, 0)) > 1e-12) {
      if (v(i, 0) < 0.0)
        for (auto& x : v.data()) x = -x;
      break;
    }
  }
  return {v, lambda};
}

}  // namespace

Mat pca_project(const Mat& embeddings, std::uint64_t seed, bool* degenerate,
                double* explained_1, double* explained_2) {
  const std::size_t m = embeddings.rows(), d = embeddings.cols();
  if (m < 2) throw Error("pca_project: need at least 2 rows");
  Mat centered = embeddings;
  Mat mean = mean_rows(embeddings);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) centered(i, j) -= mean(0, j);

  Mat cov = matmul_tn(centered, centered);
  for (auto& x : cov.data()) x /= static_cast<double>(m);
  if (degenerate) *degenerate = false;
  if (max_abs(cov) < 1e-30) {
    if (degenerate) *degenerate = true;
    if (explained_1) *explained_1 = 0.0;
    if (explained_2) *explained_2 = 0.0;
    return Mat(m, 2);
  }

  Rng rng = Rng::derive(seed, 0x9CA);
  auto [v1, l1] = power_iterate(cov, rng);
  // Deflate and repeat for the second axis.
  Mat cov2 = cov;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) cov2(i, j) -= l1 * v1(i, 0) * v1(j, 0);
  auto [v2, l2] = power_iterate(cov2, rng);
  if (explained_1) *explained_1 = l1;
  if (explained_2) *explained_2 = l2;

  Mat out(m, 2);
  for (std::size_t i = 0; i < m; ++i) {
    double c1 = 0.0, c2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      c1 += centered(i, j) * v1(j, 0);
      c2 += centered(i, j) * v2(j, 0);
    }
    out(i, 0) = c1;
    out(i, 1) = c2;
  }
  return out;
}

}  // namespace lgmatch::eval
