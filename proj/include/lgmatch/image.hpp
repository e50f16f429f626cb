#pragma once

#include <string>

#include "lgmatch/mat.hpp"

namespace lgmatch::io {

// Loads a grayscale PGM image (binary P5 or ASCII P2) as an H x W matrix
// with values scaled to [0, 1].
Mat load_pgm(const std::string& path);

void write_pgm(const Mat& img, const std::string& path);

}  // namespace lgmatch::io
