#pragma once

#include "lgmatch/mat.hpp"
#include "lgmatch/types.hpp"

namespace lgmatch::graph {

struct PatchConfig {
  std::size_t half_size = 16;  // patch spans 2*half_size per side
  std::size_t d_feat = 16;
};

// Extracts the 2P x 2P sub-image around a visible landmark; regions outside
// the image are zero-padded. Throws if the landmark is invisible (callers
// branch on v before extraction).
Mat extract_patch(const Mat& image, const Landmark& lm, std::size_t half_size);

// Deterministic stand-in for a pretrained patch encoder: area-average the
// patch to a fixed 8x8 grid, flatten, apply a fixed seeded random
// projection to d_feat dims, L2-normalize. The zero patch maps to the zero
// vector.
Mat toy_patch_features(const Mat& patch, std::size_t d_feat);

// Same construction applied to the whole image, for the global feature.
Mat toy_global_feature(const Mat& image, std::size_t d_global);

}  // namespace lgmatch::graph
