#include "lgmatch/manifest.hpp"

#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

namespace lgmatch {

std::string to_string(Modality m) { return m == Modality::A ? "A" : "B"; }
std::string to_string(View v) { return v == View::Front ? "front" : "side"; }
std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    default: return "test";
  }
}

Modality modality_from_string(const std::string& s) {
  if (s == "A") return Modality::A;
  if (s == "B") return Modality::B;
  throw Error("unknown modality '" + s + "' (expected A or B)");
}

View view_from_string(const std::string& s) {
  if (s == "front") return View::Front;
  if (s == "side") return View::Side;
  throw Error("unknown view '" + s + "' (expected front or side)");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw Error("unknown split '" + s + "' (expected train, val or test)");
}

}  // namespace lgmatch

namespace lgmatch::io {

using nlohmann::ordered_json;

namespace {

SampleRecord parse_record(const ordered_json& j) {
  SampleRecord r;
  r.id = j.at("id").get<std::string>();
  r.modality = modality_from_string(j.at("modality").get<std::string>());
  r.view = view_from_string(j.at("view").get<std::string>());
  if (j.contains("split")) r.split = split_from_string(j.at("split").get<std::string>());
  r.width = j.value("width", 0.0);
  r.height = j.value("height", 0.0);
  for (const auto& lm : j.at("landmarks")) {
    if (!lm.is_array() || lm.size() != 3)
      throw Error("landmark entry must be a [x, y, v] triple");
    Landmark l;
    l.x = lm[0].get<double>();
    l.y = lm[1].get<double>();
    l.v = lm[2].get<int>();
    if (l.v != 0 && l.v != 1) throw Error("visibility flag must be 0 or 1");
    if (l.x < 0.0 || l.y < 0.0) throw Error("landmark coordinates must be non-negative");
    if (l.v == 1 && r.width > 0.0 && r.height > 0.0 &&
        (l.x > r.width || l.y > r.height))
      throw Error("visible landmark outside declared image bounds");
    r.landmarks.push_back(l);
  }
  if (r.landmarks.empty()) throw Error("record has no landmarks");
  if (j.contains("image_ref")) r.image_ref = j.at("image_ref").get<std::string>();
  if (j.contains("patch_features_ref"))
    r.patch_features_ref = j.at("patch_features_ref").get<std::string>();
  if (j.contains("global_feature_ref"))
    r.global_feature_ref = j.at("global_feature_ref").get<std::string>();
  return r;
}

ordered_json record_to_json(const SampleRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["modality"] = to_string(r.modality);
  j["view"] = to_string(r.view);
  j["split"] = to_string(r.split);
  j["width"] = r.width;
  j["height"] = r.height;
  ordered_json lms = ordered_json::array();
  for (const auto& l : r.landmarks) lms.push_back({l.x, l.y, l.v});
  j["landmarks"] = lms;
  if (r.image_ref) j["image_ref"] = *r.image_ref;
  if (r.patch_features_ref) j["patch_features_ref"] = *r.patch_features_ref;
  if (r.global_feature_ref) j["global_feature_ref"] = *r.global_feature_ref;
  return j;
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest '" + path + "'");
  DatasetManifest m;
  std::map<std::pair<std::string, std::string>, std::size_t> counts;  // (modality, view) -> N
  std::set<std::string> seen;  // modality|view|id
  std::string line;
  std::size_t line_no = 0;
  bool split_set = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    SampleRecord r;
    try {
      r = parse_record(ordered_json::parse(line));
    } catch (const std::exception& e) {
      throw Error("manifest '" + path + "' line " + std::to_string(line_no) + ": " + e.what());
    }
    const auto key = std::make_pair(to_string(r.modality), to_string(r.view));
    auto it = counts.find(key);
    if (it == counts.end()) {
      counts[key] = r.landmarks.size();
    } else if (it->second != r.landmarks.size()) {
      throw Error("manifest '" + path + "' line " + std::to_string(line_no) +
                  ": inconsistent landmark count (" + std::to_string(r.landmarks.size()) +
                  " vs " + std::to_string(it->second) + " for modality " + key.first +
                  ", view " + key.second + ")");
    }
    const std::string id_key = key.first + "|" + key.second + "|" + r.id;
    if (!seen.insert(id_key).second)
      throw Error("manifest '" + path + "' line " + std::to_string(line_no) +
                  ": duplicate id '" + r.id + "' within modality " + key.first + ", view " +
                  key.second);
    if (!split_set) {
      m.split = r.split;
      split_set = true;
    } else if (m.split != r.split) {
      throw Error("manifest '" + path + "' line " + std::to_string(line_no) +
                  ": mixed split values in one manifest");
    }
    if (r.view == View::Front) m.n_landmarks_front = r.landmarks.size();
    else m.n_landmarks_side = r.landmarks.size();
    m.records.push_back(std::move(r));
  }
  if (m.records.empty()) throw Error("empty manifest '" + path + "'");
  return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest '" + path + "'");
  for (const auto& r : m.records) out << record_to_json(r).dump() << "\n";
  if (!out) throw Error("write failure on manifest '" + path + "'");
}

void check_paired_identities(const DatasetManifest& m) {
  std::map<std::string, std::set<std::string>> ids_a, ids_b;  // view -> ids
  for (const auto& r : m.records) {
    auto& dst = (r.modality == Modality::A) ? ids_a : ids_b;
    dst[to_string(r.view)].insert(r.id);
  }
  for (const auto& [view, ids] : ids_a) {
    for (const auto& id : ids)
      if (!ids_b[view].count(id))
        throw Error("id '" + id + "' (view " + view + ") present in modality A but not B");
  }
  for (const auto& [view, ids] : ids_b) {
    for (const auto& id : ids)
      if (!ids_a[view].count(id))
        throw Error("id '" + id + "' (view " + view + ") present in modality B but not A");
  }
}

}  // namespace lgmatch::io
