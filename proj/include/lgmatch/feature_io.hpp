#pragma once

#include <string>

#include "lgmatch/mat.hpp"

namespace lgmatch::io {

// CFV1 feature file: magic "CFV1", u32-le rows, u32-le dim, then rows*dim
// f32-le values in row-major order. Values must be finite.
Mat load_feature_file(const std::string& path);
void write_feature_file(const Mat& m, const std::string& path);

// Stream variants used by the graph-cache container.
Mat read_cfv1(std::istream& in, const std::string& what);
void write_cfv1(const Mat& m, std::ostream& out);

}  // namespace lgmatch::io
