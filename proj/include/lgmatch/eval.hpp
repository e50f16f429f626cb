#pragma once

#include <map>
#include <string>
#include <vector>

#include "lgmatch/model.hpp"

namespace lgmatch::eval {

struct RankedRetrieval {
  std::string query_id;
  std::vector<std::string> gallery_ids;  // descending score, ties by id
  std::vector<double> scores;
};

// Scores one query against every gallery item with the combined similarity.
RankedRetrieval score_gallery(const model::PreparedSample& query,
                              const std::vector<model::PreparedSample>& gallery,
                              model::ModelParams& params, const model::ModelConfig& mc,
                              double beta);

// truth maps query id -> the single relevant gallery id.
double recall_at_k(const std::vector<RankedRetrieval>& rankings,
                   const std::map<std::string, std::string>& truth, std::size_t k);

// Single-relevant mAP@K: AP = 1/rank if rank <= K else 0.
double map_at_k(const std::vector<RankedRetrieval>& rankings,
                const std::map<std::string, std::string>& truth, std::size_t k);

struct MetricReport {
  std::vector<std::size_t> ks;
  std::vector<double> recall;
  std::vector<double> map;
  std::size_t query_count = 0;
};

MetricReport compute_metrics(const std::vector<RankedRetrieval>& rankings,
                             const std::map<std::string, std::string>& truth,
                             const std::vector<std::size_t>& ks);

// Table with one row per label ("front", "side", "merged").
std::string format_report(const std::vector<std::pair<std::string, MetricReport>>& rows);

// Mean-centered projection onto the top-2 principal directions, computed by
// power iteration with deflation. Sign convention: the first nonzero loading
// of each axis is positive. Rank-0 input (all rows identical) yields all-zero
// coordinates and sets *degenerate.
Mat pca_project(const Mat& embeddings, std::uint64_t seed = 1, bool* degenerate = nullptr,
                double* explained_1 = nullptr, double* explained_2 = nullptr);

}  // namespace lgmatch::eval
