#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lgmatch/mat.hpp"

namespace lgmatch {

enum class Modality { A, B };  // A = query domain (skull/sketch), B = face gallery
enum class View { Front, Side };
enum class Split { Train, Val, Test };

std::string to_string(Modality m);
std::string to_string(View v);
std::string to_string(Split s);
Modality modality_from_string(const std::string& s);
View view_from_string(const std::string& s);
Split split_from_string(const std::string& s);

// One annotated keypoint: pixel coordinates plus visibility flag.
struct Landmark {
  double x = 0.0;
  double y = 0.0;
  int v = 1;
};

struct SampleRecord {
  std::string id;
  Modality modality = Modality::A;
  View view = View::Front;
  Split split = Split::Train;
  std::vector<Landmark> landmarks;
  // Declared image bounds; needed to validate visible landmarks and to
  // normalize coordinates when no image file is present.
  double width = 0.0;
  double height = 0.0;
  std::optional<std::string> image_ref;
  std::optional<std::string> patch_features_ref;
  std::optional<std::string> global_feature_ref;
};

struct DatasetManifest {
  std::vector<SampleRecord> records;
  std::size_t n_landmarks_front = 0;
  std::size_t n_landmarks_side = 0;
  Split split = Split::Train;
};

}  // namespace lgmatch
