#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lgmatch/types.hpp"

namespace lgmatch::io {

// Deterministic paired-modality dataset: each identity owns one latent
// landmark layout and latent feature vectors; modality A and B records are
// derived from the same latent through fixed per-modality affine feature
// maps plus independent additive noise of scale cross_modal_noise.
struct SyntheticSpec {
  std::size_t n_identities = 8;   // train identities
  std::size_t n_val = 0;          // extra held-out identities
  std::size_t n_test = 0;
  std::size_t n_landmarks = 18;
  std::size_t d_feat = 16;
  std::size_t d_global = 0;       // 0 means "use d_feat"
  std::uint64_t seed = 1;
  double cross_modal_noise = 0.05;
  bool identity_feature_maps = false;  // use identity affine maps (testing)
};

struct SyntheticPaths {
  std::vector<std::string> manifests;  // one per (split, modality) actually written
  std::string feature_dir;
};

SyntheticPaths generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir);

// Canvas size used for synthetic landmark coordinates.
inline constexpr double kSyntheticCanvas = 640.0;

}  // namespace lgmatch::io
