#include "lgmatch/patch.hpp"

#include <cmath>

#include "lgmatch/rng.hpp"

namespace lgmatch::graph {

namespace {

constexpr std::size_t kGrid = 8;

// Area-average pooling onto a kGrid x kGrid grid. Cells cover contiguous
// pixel ranges; for inputs smaller than the grid, cells share pixels.
Mat pool_to_grid(const Mat& img) {
  if (img.empty()) throw Error("pool_to_grid: empty input");
  Mat g(kGrid, kGrid);
  const std::size_t h = img.rows(), w = img.cols();
  for (std::size_t r = 0; r < kGrid; ++r) {
    std::size_t r0 = r * h / kGrid;
    std::size_t r1 = (r + 1) * h / kGrid;
    if (r0 >= h) r0 = h - 1;
    if (r1 <= r0) r1 = r0 + 1;
    for (std::size_t c = 0; c < kGrid; ++c) {
      std::size_t c0 = c * w / kGrid;
      std::size_t c1 = (c + 1) * w / kGrid;
      if (c0 >= w) c0 = w - 1;
      if (c1 <= c0) c1 = c0 + 1;
      double s = 0.0;
      for (std::size_t i = r0; i < r1; ++i)
        for (std::size_t j = c0; j < c1; ++j) s += img(i, j);
      g(r, c) = s / static_cast<double>((r1 - r0) * (c1 - c0));
    }
  }
  return g;
}

// Fixed seeded Gaussian projection (grid^2 x d); one per (purpose, d) pair,
// never dependent on user seeds, so feature extraction is a pure function.
Mat projection_matrix(std::uint64_t purpose, std::size_t d) {
  Mat p(kGrid * kGrid, d);
  Rng rng = Rng::derive(0x70726F6A65637431ull, purpose * 1000003ull + d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(kGrid * kGrid));
  for (auto& x : p.data()) x = scale * rng.normal();
  return p;
}

Mat project_and_normalize(const Mat& img, std::uint64_t purpose, std::size_t d) {
  if (d == 0) throw Error("feature dimensionality must be > 0");
  const Mat grid = pool_to_grid(img);
  Mat flat(1, kGrid * kGrid, std::vector<double>(grid.data()));
  Mat feat = matmul(flat, projection_matrix(purpose, d));
  return l2_normalize_rows(feat);  // zero input stays zero
}

}  // namespace

Mat extract_patch(const Mat& image, const Landmark& lm, std::size_t half_size) {
  if (lm.v != 1) throw Error("extract_patch: landmark is not visible");
  if (half_size == 0) throw Error("extract_patch: half_size must be > 0");
  const long p = static_cast<long>(half_size);
  const long cx = static_cast<long>(std::llround(lm.x));
  const long cy = static_cast<long>(std::llround(lm.y));
  Mat patch(2 * half_size, 2 * half_size);
  for (long i = 0; i < 2 * p; ++i) {
    const long y = cy - p + i;
    if (y < 0 || y >= static_cast<long>(image.rows())) continue;
    for (long j = 0; j < 2 * p; ++j) {
      const long x = cx - p + j;
      if (x < 0 || x >= static_cast<long>(image.cols())) continue;
      patch(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
          image(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    }
  }
  return patch;
}

Mat toy_patch_features(const Mat& patch, std::size_t d_feat) {
  return project_and_normalize(patch, 1, d_feat);
}

Mat toy_global_feature(const Mat& image, std::size_t d_global) {
  return project_and_normalize(image, 2, d_global);
}

}  // namespace lgmatch::graph
