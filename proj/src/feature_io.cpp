#include "lgmatch/feature_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace lgmatch::io {

namespace {

constexpr char kMagic[4] = {'C', 'F', 'V', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

void put_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

bool get_f32(std::istream& in, float& f) {
  std::uint32_t bits;
  if (!get_u32(in, bits)) return false;
  std::memcpy(&f, &bits, 4);
  return true;
}

}  // namespace

Mat read_cfv1(std::istream& in, const std::string& what) {
  char magic[4];
  if (!in.read(magic, 4)) throw Error(what + ": truncated (missing magic)");
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error(what + ": bad magic");
  std::uint32_t rows = 0, dim = 0;
  if (!get_u32(in, rows) || !get_u32(in, dim)) throw Error(what + ": truncated header");
  Mat m(rows, dim);
  for (std::size_t i = 0; i < m.size(); ++i) {
    float f;
    if (!get_f32(in, f)) throw Error(what + ": truncated payload");
    if (!std::isfinite(f)) throw Error(what + ": non-finite value at index " + std::to_string(i));
    m.data()[i] = static_cast<double>(f);
  }
  return m;
}

void write_cfv1(const Mat& m, std::ostream& out) {
  if (!all_finite(m)) throw Error("write_cfv1: non-finite value");
  out.write(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) put_f32(out, static_cast<float>(v));
}

Mat load_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open feature file '" + path + "'");
  return read_cfv1(in, "feature file '" + path + "'");
}

void write_feature_file(const Mat& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write feature file '" + path + "'");
  write_cfv1(m, out);
  if (!out) throw Error("write failure on feature file '" + path + "'");
}

}  // namespace lgmatch::io
