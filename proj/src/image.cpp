#include "lgmatch/image.hpp"

#include <algorithm>
#include <fstream>
#include <string>

namespace lgmatch::io {

namespace {

// Skips whitespace and '#' comment lines, then reads one token.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
    } else if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      while ((c = in.peek()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(in.get()));
      return tok;
    }
  }
  return tok;
}

}  // namespace

Mat load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image '" + path + "'");
  const std::string magic = next_token(in);
  if (magic != "P5" && magic != "P2") throw Error("image '" + path + "': not a PGM (P5/P2) file");
  const std::size_t w = std::stoul(next_token(in));
  const std::size_t h = std::stoul(next_token(in));
  const unsigned long maxval = std::stoul(next_token(in));
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535)
    throw Error("image '" + path + "': bad dimensions or maxval");
  Mat img(h, w);
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    const int bytes = maxval > 255 ? 2 : 1;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        unsigned long v = 0;
        for (int b = 0; b < bytes; ++b) {
          const int c = in.get();
          if (c == EOF) throw Error("image '" + path + "': truncated pixel data");
          v = (v << 8) | static_cast<unsigned long>(c);
        }
        img(i, j) = static_cast<double>(v) / static_cast<double>(maxval);
      }
  } else {
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const std::string tok = next_token(in);
        if (tok.empty()) throw Error("image '" + path + "': truncated pixel data");
        img(i, j) = static_cast<double>(std::stoul(tok)) / static_cast<double>(maxval);
      }
  }
  return img;
}

void write_pgm(const Mat& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write image '" + path + "'");
  out << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  for (double v : img.data()) {
    const int p = std::clamp(static_cast<int>(v * 255.0 + 0.5), 0, 255);
    out.put(static_cast<char>(p));
  }
}

}  // namespace lgmatch::io
