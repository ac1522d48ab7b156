#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gcamo {

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split s);
/// Throws ValidationError for anything but "train", "val", "test".
Split parse_split(std::string_view name);

struct ManifestRecord {
  std::string cell_id;
  std::string crop_path;  // relative to the manifest file
  std::string mask_path;
  int label = 0;
  std::string well;
  int site = 0;
  Split split = Split::kTrain;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// Dataset index. On disk a JSON array of records; paths are relative to the
/// manifest's directory.
struct Manifest {
  std::vector<ManifestRecord> records;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& relative) const {
    return base_dir / relative;
  }
  std::vector<ManifestRecord> split(Split s) const;
  int num_classes() const;

  /// A well assigned to train must not appear in val or test. Val and test
  /// may share a held-out well (they are then separated by site).
  void validate_wells() const;

  friend bool operator==(const Manifest& a, const Manifest& b) {
    return a.records == b.records;
  }
};

/// Parses, validates wells, and checks that every referenced file exists.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

}  // namespace gcamo
