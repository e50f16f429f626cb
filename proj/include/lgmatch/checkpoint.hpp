#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lgmatch/mat.hpp"

namespace lgmatch::io {

// Checkpoint contents: a textual header (format version, config echo, named
// tensor list with shapes) followed by the tensors' f32-le blobs in header
// order.
struct Checkpoint {
  std::map<std::string, std::string> config;                // key -> value echo
  std::vector<std::pair<std::string, Mat>> tensors;         // in header order

  const Mat& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lgmatch::io
