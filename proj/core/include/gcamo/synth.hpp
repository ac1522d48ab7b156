#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gcamo/manifest.hpp"
#include "gcamo/volume.hpp"

namespace gcamo::synth {

struct SynthConfig {
  int n_doses = 6;
  int wells_per_dose = 2;
  int sites_per_well = 4;
  int cells_per_site = 15;
  int channels = 3;  // nucleus, cytoplasm, organelle (extra channels repeat cytoplasm)
  Extent3 volume{192, 192, 16};
  double confound_strength = 0.0;  // gamma in [0, 1]
  double neighbor_density = 0.5;   // 0 = sparse, 1 = cells may touch
  std::uint64_t seed = 0;

  double radius_min = 11.5;
  double radius_max = 14.5;
  double noise_sigma = 0.02;
  // Scales how strongly dose moves nucleus size and the nuclear
  // cytoplasm-to-nucleus intensity ratio (1 = nucleus fraction 0.3 -> 0.7).
  double dose_effect = 1.0;
  // Peak amplitude of the dose-keyed background wave at gamma = 1, relative
  // to a cell peak of about 1.
  double confound_amplitude = 0.10;

  // Used by describe() to count cells that survive crop extraction.
  CropOptions crop{};

  void validate() const;
};

struct StackInfo {
  std::string id;
  int dose = 0;
  std::string well;
  int well_index = 0;
  int site = 0;
  Split split = Split::kTrain;
  int placed = 0;
};

struct SynthDataset {
  std::vector<ZStack> stacks;
  std::vector<SegmentationMask> masks;
  std::vector<StackInfo> info;
  /// One record per stack: crop_path -> stacks/<id>.tbf, mask_path ->
  /// masks/<id>.tbf, relative to the dataset root.
  Manifest manifest;
};

/// Well name for a dose/well pair, e.g. dose 0 -> "B02", "B03".
std::string well_name(int dose, int well_index);

/// Held-out assignment: with two wells per dose, well 0 trains and well 1 is
/// split by site into val (first half) and test; with three or more wells the
/// last two wells are val and test.
Split assign_split(const SynthConfig& config, int well_index, int site);

SynthDataset generate(const SynthConfig& config);

/// Writes stacks/, masks/, and manifest.json under `root`.
void write_dataset(const SynthDataset& data, const std::filesystem::path& root);

struct SiteCount {
  int dose = 0;
  std::string well;
  int site = 0;
  Split split = Split::kTrain;
  std::size_t placed = 0;
  std::size_t kept = 0;  // after crop extraction (boundary/size drops removed)
};

struct DatasetSummary {
  std::vector<SiteCount> sites;
  std::size_t total_placed() const;
  std::size_t total_kept() const;
  /// Markdown table with one row per dose.
  std::string table() const;
};

DatasetSummary describe(const SynthDataset& data, const CropOptions& crop);
DatasetSummary describe(const SynthConfig& config);

}  // namespace gcamo::synth
