#include "lgmatch/checkpoint.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lgmatch::io {

namespace {

constexpr const char* kHeaderTag = "lgmatch-checkpoint";
constexpr int kVersion = 1;

void put_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                        static_cast<unsigned char>((bits >> 8) & 0xff),
                        static_cast<unsigned char>((bits >> 16) & 0xff),
                        static_cast<unsigned char>((bits >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_f32(std::istream& in, float& f) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                       (static_cast<std::uint32_t>(b[1]) << 8) |
                       (static_cast<std::uint32_t>(b[2]) << 16) |
                       (static_cast<std::uint32_t>(b[3]) << 24);
  std::memcpy(&f, &bits, 4);
  return true;
}

}  // namespace

const Mat& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw Error("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return true;
  return false;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  for (const auto& [name, m] : c.tensors)
    if (!all_finite(m)) throw Error("checkpoint tensor '" + name + "' has non-finite values");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out << kHeaderTag << " " << kVersion << "\n";
  for (const auto& [k, v] : c.config) out << "config " << k << " " << v << "\n";
  for (const auto& [name, m] : c.tensors)
    out << "tensor " << name << " " << m.rows() << " " << m.cols() << "\n";
  out << "end\n";
  for (const auto& [name, m] : c.tensors)
    for (double v : m.data()) put_f32(out, static_cast<float>(v));
  if (!out) throw Error("write failure on checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error("checkpoint '" + path + "': empty file");
  {
    std::istringstream ss(line);
    std::string tag;
    int version = -1;
    ss >> tag >> version;
    if (tag != kHeaderTag) throw Error("checkpoint '" + path + "': bad magic");
    if (version != kVersion)
      throw Error("checkpoint '" + path + "': version mismatch (got " +
                  std::to_string(version) + ", expected " + std::to_string(kVersion) + ")");
  }
  Checkpoint c;
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> shapes;
  while (std::getline(in, line)) {
    if (line == "end") break;
    std::istringstream ss(line);
    std::string kind;
    ss >> kind;
    if (kind == "config") {
      std::string key;
      ss >> key;
      std::string value;
      std::getline(ss, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      c.config[key] = value;
    } else if (kind == "tensor") {
      std::string name;
      std::size_t r = 0, cl = 0;
      ss >> name >> r >> cl;
      if (ss.fail()) throw Error("checkpoint '" + path + "': malformed tensor line");
      shapes.emplace_back(name, std::make_pair(r, cl));
    } else {
      throw Error("checkpoint '" + path + "': unexpected header line '" + line + "'");
    }
  }
  if (line != "end") throw Error("checkpoint '" + path + "': missing end marker");
  for (const auto& [name, shape] : shapes) {
    Mat m(shape.first, shape.second);
    for (std::size_t i = 0; i < m.size(); ++i) {
      float f;
      if (!get_f32(in, f))
        throw Error("checkpoint '" + path + "': truncated blob for tensor '" + name + "'");
      if (!std::isfinite(f))
        throw Error("checkpoint '" + path + "': non-finite value in tensor '" + name + "'");
      m.data()[i] = static_cast<double>(f);
    }
    c.tensors.emplace_back(name, std::move(m));
  }
  return c;
}

}  // namespace lgmatch::io
