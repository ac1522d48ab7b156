#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "gcamo/manifest.hpp"
#include "gcamo/model.hpp"
#include "gcamo/volume.hpp"

namespace gcamo {

struct TrainConfig {
  double lr = 3e-4;
  std::size_t batch = 8;
  std::size_t epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t patience = 3;  // epochs without val improvement; 0 disables
  double lambda = 0.0;
  std::uint64_t seed = 0;
  bool augment = true;
  std::size_t workers = 0;

  void validate() const;
};

/// Adam with bias correction; state is one first/second moment per parameter.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps);

  void step(std::vector<TensorF>& params, const std::vector<TensorF>& grads);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_acc = 0.0;
  double val_acc = 0.0;
  double loss = 0.0;
  double mean_gradcamo = 0.0;  // only meaningful when lambda > 0
};

struct TrainResult {
  TrainedModel trained;  // weights of the best validation epoch
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  double final_val_acc = 0.0;  // of the last epoch's weights
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Loads a split's crops and masks, resizes them to `input`, and rescales
/// each channel to [0,1]. Records keep manifest order.
std::vector<CellCrop> load_split(const Manifest& manifest, Split split, Extent3 input,
                                 std::size_t workers = 0);

/// Trains on crops already passed through load_split. Channel statistics come
/// from the training crops only.
TrainResult train(const ModelSpec& spec, const std::vector<CellCrop>& train_crops,
                  const std::vector<CellCrop>& val_crops, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Convenience overload: loads the train and val splits first.
TrainResult train(const ModelSpec& spec, const Manifest& manifest, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Fraction of preprocessed crops whose prediction matches the label.
double accuracy(const MiniCNN3D<float>& model, const std::vector<CellCrop>& crops,
                std::size_t workers = 0);

/// Applies normalize() with the model's statistics to every rescaled crop.
std::vector<CellCrop> normalize_all(std::vector<CellCrop> crops, const ChannelStats& stats);

/// epoch,train_acc,val_acc,loss,mean_gradcamo (last column empty when lambda is 0)
void write_history_csv(const std::vector<EpochStats>& history, bool with_gradcamo,
                       const std::filesystem::path& path);

}  // namespace gcamo
