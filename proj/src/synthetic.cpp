#include "lgmatch/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "lgmatch/feature_io.hpp"
#include "lgmatch/manifest.hpp"
#include "lgmatch/rng.hpp"

namespace lgmatch::io {

namespace {

namespace fs = std::filesystem;

// Random orthonormal square matrix via Gram-Schmidt on a Gaussian draw.
Mat random_orthonormal(std::size_t n, Rng& rng) {
  Mat q(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    for (std::size_t k = 0; k < i; ++k) {
      double d = 0.0;
      for (std::size_t j = 0; j < n; ++j) d += v[j] * q(k, j);
      for (std::size_t j = 0; j < n; ++j) v[j] -= d * q(k, j);
    }
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm < 1e-12) {  // retry direction aligned with basis vector
      std::fill(v.begin(), v.end(), 0.0);
      v[i % n] = 1.0;
      nrm = 1.0;
    }
    for (std::size_t j = 0; j < n; ++j) q(i, j) = v[j] / nrm;
  }
  return q;
}

struct ModalityMaps {
  Mat feat_map, feat_bias;    // d_feat x d_feat, 1 x d_feat
  Mat glob_map, glob_bias;    // d_g x d_g, 1 x d_g
};

}  // namespace

SyntheticPaths generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
  if (spec.n_identities < 2) throw Error("generate_synthetic: need at least 2 identities");
  if (spec.n_landmarks < 2) throw Error("generate_synthetic: need at least 2 landmarks");
  if (spec.cross_modal_noise < 0.0) throw Error("generate_synthetic: noise must be >= 0");
  const std::size_t d_feat = spec.d_feat;
  const std::size_t d_glob = spec.d_global == 0 ? spec.d_feat : spec.d_global;
  if (d_feat == 0 || d_glob == 0) throw Error("generate_synthetic: feature dims must be > 0");

  fs::create_directories(out_dir);
  const fs::path feature_dir = fs::path(out_dir) / "features";
  fs::create_directories(feature_dir);

  // Fixed per-modality affine maps, drawn before any identity data.
  Rng map_rng = Rng::derive(spec.seed, 0xA11F);
  ModalityMaps maps[2];
  for (int m = 0; m < 2; ++m) {
    if (spec.identity_feature_maps) {
      maps[m].feat_map = Mat::identity(d_feat);
      maps[m].feat_bias = Mat(1, d_feat);
      maps[m].glob_map = Mat::identity(d_glob);
      maps[m].glob_bias = Mat(1, d_glob);
    } else {
      maps[m].feat_map = random_orthonormal(d_feat, map_rng);
      maps[m].feat_bias = Mat(1, d_feat);
      for (auto& x : maps[m].feat_bias.data()) x = 0.2 * map_rng.normal();
      maps[m].glob_map = random_orthonormal(d_glob, map_rng);
      maps[m].glob_bias = Mat(1, d_glob);
      for (auto& x : maps[m].glob_bias.data()) x = 0.2 * map_rng.normal();
    }
  }

  // Base landmark layout shared across identities: ellipse on the canvas.
  const double cx = kSyntheticCanvas / 2.0, cy = kSyntheticCanvas / 2.0;
  const double rx = kSyntheticCanvas * 0.32, ry = kSyntheticCanvas * 0.40;
  std::vector<std::pair<double, double>> base(spec.n_landmarks);
  for (std::size_t i = 0; i < spec.n_landmarks; ++i) {
    const double t = 6.283185307179586 * static_cast<double>(i) /
                     static_cast<double>(spec.n_landmarks);
    base[i] = {cx + rx * std::cos(t), cy + ry * std::sin(t)};
  }

  const double coord_jitter = kSyntheticCanvas * 0.04;             // identity geometry
  const double coord_noise = spec.cross_modal_noise * kSyntheticCanvas * 0.1;
  const double sigma = spec.cross_modal_noise;

  Rng data_rng = Rng::derive(spec.seed, 0xDA7A);

  struct SplitPlan { Split split; std::size_t count; };
  const SplitPlan plan[3] = {{Split::Train, spec.n_identities},
                             {Split::Val, spec.n_val},
                             {Split::Test, spec.n_test}};

  SyntheticPaths out_paths;
  out_paths.feature_dir = feature_dir.string();

  std::size_t id_counter = 0;
  for (const auto& sp : plan) {
    if (sp.count == 0) continue;
    DatasetManifest man_a, man_b;
    man_a.split = man_b.split = sp.split;
    for (std::size_t n = 0; n < sp.count; ++n, ++id_counter) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "id%04zu", id_counter);
      const std::string id(buf);

      // Identity latents.
      std::vector<std::pair<double, double>> layout(spec.n_landmarks);
      for (std::size_t i = 0; i < spec.n_landmarks; ++i)
        layout[i] = {base[i].first + coord_jitter * data_rng.normal(),
                     base[i].second + coord_jitter * data_rng.normal()};
      Mat z(spec.n_landmarks, d_feat);
      for (auto& x : z.data()) x = data_rng.normal();
      Mat u(1, d_glob);
      for (auto& x : u.data()) x = data_rng.normal();

      for (int m = 0; m < 2; ++m) {
        const Modality mod = m == 0 ? Modality::A : Modality::B;
        SampleRecord r;
        r.id = id;
        r.modality = mod;
        r.view = View::Front;
        r.split = sp.split;
        r.width = kSyntheticCanvas;
        r.height = kSyntheticCanvas;
        for (std::size_t i = 0; i < spec.n_landmarks; ++i) {
          Landmark l;
          l.x = std::clamp(layout[i].first + coord_noise * data_rng.normal(), 0.0,
                           kSyntheticCanvas);
          l.y = std::clamp(layout[i].second + coord_noise * data_rng.normal(), 0.0,
                           kSyntheticCanvas);
          l.v = 1;
          r.landmarks.push_back(l);
        }

        Mat feats = matmul(z, maps[m].feat_map);
        for (std::size_t i = 0; i < feats.rows(); ++i)
          for (std::size_t j = 0; j < feats.cols(); ++j)
            feats(i, j) += maps[m].feat_bias(0, j) + sigma * data_rng.normal();
        feats = l2_normalize_rows(feats);

        Mat glob = matmul(u, maps[m].glob_map);
        for (std::size_t j = 0; j < glob.cols(); ++j)
          glob(0, j) += maps[m].glob_bias(0, j) + sigma * data_rng.normal();
        glob = l2_normalize_rows(glob);

        const std::string mod_tag = to_string(mod);
        const std::string patch_rel = "features/" + id + "_" + mod_tag + "_patch.cfv1";
        const std::string glob_rel = "features/" + id + "_" + mod_tag + "_glob.cfv1";
        write_feature_file(feats, (fs::path(out_dir) / patch_rel).string());
        write_feature_file(glob, (fs::path(out_dir) / glob_rel).string());
        r.patch_features_ref = patch_rel;
        r.global_feature_ref = glob_rel;

        (mod == Modality::A ? man_a : man_b).records.push_back(std::move(r));
      }
    }
    const std::string tag = to_string(sp.split);
    const std::string path_a = (fs::path(out_dir) / (tag + "_A.jsonl")).string();
    const std::string path_b = (fs::path(out_dir) / (tag + "_B.jsonl")).string();
    save_manifest(man_a, path_a);
    save_manifest(man_b, path_b);
    out_paths.manifests.push_back(path_a);
    out_paths.manifests.push_back(path_b);
  }
  return out_paths;
}

}  // namespace lgmatch::io
