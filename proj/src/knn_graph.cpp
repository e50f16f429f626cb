#include "lgmatch/knn_graph.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "lgmatch/feature_io.hpp"

namespace lgmatch::graph {

std::vector<Edge> knn_edges(const Mat& points, std::size_t k) {
  const std::size_t n = points.rows();
  if (points.cols() != 2) throw Error("knn_edges: points must be N x 2");
  if (n < 2) throw Error("knn_edges: need at least 2 points");
  if (k < 1 || k > n - 1)
    throw Error("knn_edges: k out of range (k=" + std::to_string(k) +
                ", N=" + std::to_string(n) + ")");
  std::vector<Edge> edges;
  edges.reserve(n * k);
  std::vector<std::pair<double, std::uint32_t>> cand(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = points(i, 0) - points(j, 0);
      const double dy = points(i, 1) - points(j, 1);
      cand[m++] = {dx * dx + dy * dy, static_cast<std::uint32_t>(j)};
    }
    std::sort(cand.begin(), cand.end());  // pair order = (distance, lower index)
    for (std::size_t t = 0; t < k; ++t)
      edges.emplace_back(static_cast<std::uint32_t>(i), cand[t].second);
  }
  return edges;
}

LandmarkGraph build_graph(const std::vector<Landmark>& landmarks, const Mat& features,
                          const BuildGraphOptions& opts) {
  const std::size_t n = landmarks.size();
  if (n < 2) throw Error("build_graph: need at least 2 landmarks");
  if (features.rows() != n)
    throw Error("build_graph: feature rows (" + std::to_string(features.rows()) +
                ") do not match landmark count (" + std::to_string(n) + ")");
  const std::size_t d_feat = features.cols();

  Mat points(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    points(i, 0) = landmarks[i].x;
    points(i, 1) = landmarks[i].y;
  }

  double sx = 1.0, sy = 1.0;
  if (opts.normalize_coords) {
    if (opts.width <= 0.0 || opts.height <= 0.0)
      throw Error("build_graph: coordinate normalization requires image bounds");
    sx = 1.0 / opts.width;
    sy = 1.0 / opts.height;
  }

  LandmarkGraph g;
  g.n = n;
  g.k = opts.k;
  g.x = Mat(n, 2 + d_feat);
  for (std::size_t i = 0; i < n; ++i) {
    g.x(i, 0) = landmarks[i].x * sx;
    g.x(i, 1) = landmarks[i].y * sy;
    if (landmarks[i].v == 1) {
      for (std::size_t j = 0; j < d_feat; ++j) g.x(i, 2 + j) = features(i, j);
    }
    // v = 0: feature block stays zero, coordinates are kept.
  }
  g.edges = knn_edges(points, opts.k);
  return g;
}

LandmarkGraph build_graph_from_image(const std::vector<Landmark>& landmarks, const Mat& image,
                                     const PatchConfig& patch_cfg, BuildGraphOptions opts) {
  const std::size_t n = landmarks.size();
  Mat features(n, patch_cfg.d_feat);
  for (std::size_t i = 0; i < n; ++i) {
    if (landmarks[i].v != 1) continue;
    const Mat patch = extract_patch(image, landmarks[i], patch_cfg.half_size);
    const Mat f = toy_patch_features(patch, patch_cfg.d_feat);
    for (std::size_t j = 0; j < patch_cfg.d_feat; ++j) features(i, j) = f(0, j);
  }
  if (opts.normalize_coords && (opts.width <= 0.0 || opts.height <= 0.0)) {
    opts.width = static_cast<double>(image.cols());
    opts.height = static_cast<double>(image.rows());
  }
  return build_graph(landmarks, features, opts);
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(std::string(what) + ": truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

constexpr char kCacheMagic[4] = {'L', 'G', 'C', '1'};

}  // namespace

void write_graph_cache(const std::vector<std::pair<std::string, LandmarkGraph>>& graphs,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write graph cache '" + path + "'");
  out.write(kCacheMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(graphs.size()));
  for (const auto& [id, g] : graphs) {
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    put_u32(out, static_cast<std::uint32_t>(g.k));
    io::write_cfv1(g.x, out);
    put_u32(out, static_cast<std::uint32_t>(g.edges.size()));
    for (const auto& [s, d] : g.edges) {
      put_u32(out, s);
      put_u32(out, d);
    }
  }
  if (!out) throw Error("write failure on graph cache '" + path + "'");
}

std::vector<std::pair<std::string, LandmarkGraph>> read_graph_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open graph cache '" + path + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCacheMagic, 4) != 0)
    throw Error("graph cache '" + path + "': bad magic");
  const std::uint32_t count = get_u32(in, "graph cache");
  std::vector<std::pair<std::string, LandmarkGraph>> graphs;
  graphs.reserve(count);
  for (std::uint32_t g = 0; g < count; ++g) {
    const std::uint32_t id_len = get_u32(in, "graph cache");
    std::string id(id_len, '\0');
    if (!in.read(id.data(), id_len)) throw Error("graph cache '" + path + "': truncated id");
    LandmarkGraph lg;
    lg.k = get_u32(in, "graph cache");
    lg.x = io::read_cfv1(in, "graph cache '" + path + "'");
    lg.n = lg.x.rows();
    const std::uint32_t ec = get_u32(in, "graph cache");
    lg.edges.reserve(ec);
    for (std::uint32_t e = 0; e < ec; ++e) {
      const std::uint32_t s = get_u32(in, "graph cache");
      const std::uint32_t d = get_u32(in, "graph cache");
      if (s >= lg.n || d >= lg.n) throw Error("graph cache '" + path + "': edge out of range");
      lg.edges.emplace_back(s, d);
    }
    graphs.emplace_back(std::move(id), std::move(lg));
  }
  return graphs;
}

}  // namespace lgmatch::graph
