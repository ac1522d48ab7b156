#include "gcamo/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "gcamo/error.hpp"

namespace gcamo {

using nlohmann::json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ValidationError("unknown split '" + std::string(name) +
                        "' (expected train, val, or test)");
}

std::vector<ManifestRecord> Manifest::split(Split s) const {
  std::vector<ManifestRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [s](const ManifestRecord& r) { return r.split == s; });
  return out;
}

int Manifest::num_classes() const {
  int k = 0;
  for (const auto& r : records) k = std::max(k, r.label + 1);
  return k;
}

void Manifest::validate_wells() const {
  std::set<std::string> train_wells;
  for (const auto& r : records) {
    if (r.split == Split::kTrain) train_wells.insert(r.well);
  }
  for (const auto& r : records) {
    if (r.split != Split::kTrain && train_wells.count(r.well)) {
      throw ValidationError("well " + r.well + " appears in both train and " +
                            std::string(split_name(r.split)) + " splits");
    }
  }
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IoError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_array()) throw ValidationError("manifest " + path.string() + " must be a JSON array");

  Manifest m;
  m.base_dir = path.parent_path();
  std::set<std::string> ids;
  for (const auto& j : doc) {
    ManifestRecord r;
    try {
      r.cell_id = j.at("cell_id").get<std::string>();
      r.crop_path = j.at("crop_path").get<std::string>();
      r.mask_path = j.at("mask_path").get<std::string>();
      r.label = j.at("label").get<int>();
      r.well = j.at("well").get<std::string>();
      r.site = j.at("site").get<int>();
      r.split = parse_split(j.at("split").get<std::string>());
    } catch (const json::exception& e) {
      throw ValidationError("manifest " + path.string() + ": malformed record: " + e.what());
    }
    if (r.label < 0) throw ValidationError("manifest record " + r.cell_id + " has a negative label");
    if (!ids.insert(r.cell_id).second) {
      throw ValidationError("manifest has duplicate cell id " + r.cell_id);
    }
    for (const auto* p : {&r.crop_path, &r.mask_path}) {
      if (!std::filesystem::exists(m.resolve(*p))) {
        throw IoError("manifest " + path.string() + " references missing file " + *p);
      }
    }
    m.records.push_back(std::move(r));
  }
  m.validate_wells();
  return m;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  json doc = json::array();
  for (const auto& r : manifest.records) {
    doc.push_back({{"cell_id", r.cell_id},
                   {"crop_path", r.crop_path},
                   {"mask_path", r.mask_path},
                   {"label", r.label},
                   {"well", r.well},
                   {"site", r.site},
                   {"split", std::string(split_name(r.split))}});
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << doc.dump(1) << '\n';
}

}  // namespace gcamo
