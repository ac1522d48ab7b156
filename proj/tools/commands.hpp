#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace gcamo::cli {

namespace fs = std::filesystem;

struct SynthArgs {
  fs::path out;
  int doses = 6;
  int wells = 2;
  int sites = 4;
  int cells_per_site = 15;
  double gamma = 0.0;
  double density = 0.5;
  std::size_t volume_xy = 192;
  double radius_min = 10.0;
  double radius_max = 13.0;
  double dose_effect = 1.0;
  double confound_amplitude = 0.10;
  std::uint64_t seed = 0;
  bool force = false;
  std::size_t workers = 0;
};

struct CropArgs {
  fs::path stacks;
  fs::path masks;
  fs::path out;
  fs::path manifest;  // empty: <stacks>/../manifest.json
  std::size_t crop_xy = 32;
  std::size_t min_voxels = 200;
  bool force = false;
  std::size_t workers = 0;
};

struct TrainArgs {
  fs::path manifest;
  fs::path out;
  std::size_t epochs = 10;
  double lr = 3e-4;
  std::size_t batch = 8;
  double lambda = 0.0;
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  bool no_augment = false;
  std::string input = "64,64,16";
  std::size_t workers = 0;
};

struct ScoreArgs {
  fs::path model;
  fs::path manifest;
  std::string split = "test";
  double cutoff = 0.25;
  fs::path out;
  fs::path maps;
  std::size_t workers = 0;
};

struct FeaturesArgs {
  fs::path model;
  fs::path manifest;
  std::string split = "test";
  std::optional<int> whiten;  // control label
  std::string group_by = "none";
  fs::path scores;  // optional Grad-CAMO filter
  double cutoff = 0.25;
  fs::path out;
  fs::path pca2;
  std::size_t workers = 0;
};

struct ReportArgs {
  fs::path scores;
  fs::path features;
  fs::path out;
  double cutoff = 0.25;
};

void cmd_synth(const SynthArgs& a);
void cmd_crop(const CropArgs& a);
void cmd_train(const TrainArgs& a);
void cmd_score(const ScoreArgs& a);
void cmd_features(const FeaturesArgs& a);
void cmd_report(const ReportArgs& a);

}  // namespace gcamo::cli
