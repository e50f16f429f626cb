#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lgmatch/patch.hpp"
#include "lgmatch/types.hpp"

namespace lgmatch::graph {

using Edge = std::pair<std::uint32_t, std::uint32_t>;  // directed (src, dst)

// Node feature matrix X (N x (2 + d_feat)) plus directed kNN edges.
struct LandmarkGraph {
  Mat x;
  std::vector<Edge> edges;
  std::size_t n = 0;
  std::size_t k = 0;
};

// Directed edges from each node to its k nearest neighbours by Euclidean
// distance in the 2D landmark plane; self excluded, ties broken by lower
// index. points is N x 2.
std::vector<Edge> knn_edges(const Mat& points, std::size_t k);

struct BuildGraphOptions {
  std::size_t k = 4;
  // Divide coordinates by image width/height before placing them in node
  // features (edges always use raw coordinates; kNN is scale-invariant).
  bool normalize_coords = true;
  double width = 0.0;   // bounds used for normalization
  double height = 0.0;
};

// Assembles node features [x_i, y_i, f_i] and kNN edges. Invisible
// landmarks keep their annotated coordinates and get a zero feature block.
// features is N x d_feat (externally supplied, e.g. file-ingested or toy
// extractor output).
LandmarkGraph build_graph(const std::vector<Landmark>& landmarks, const Mat& features,
                          const BuildGraphOptions& opts);

// Convenience path: extract patches from an image and run the toy encoder
// for visible landmarks, then assemble as above.
LandmarkGraph build_graph_from_image(const std::vector<Landmark>& landmarks, const Mat& image,
                                     const PatchConfig& patch_cfg, BuildGraphOptions opts);

// Graph cache: "LGC1", u32 count, then per graph: u32 id length, id bytes,
// u32 k, CFV1-encoded X, u32 edge count, u32 (src, dst) pairs.
void write_graph_cache(const std::vector<std::pair<std::string, LandmarkGraph>>& graphs,
                       const std::string& path);
std::vector<std::pair<std::string, LandmarkGraph>> read_graph_cache(const std::string& path);

}  // namespace lgmatch::graph
