#include "gcamo/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "gcamo/csv.hpp"
#include "gcamo/error.hpp"
#include "gcamo/gradcamo.hpp"
#include "gcamo/parallel.hpp"
#include "gcamo/rng.hpp"
#include "gcamo/tbf.hpp"

namespace gcamo {

namespace {

// Stream keys for derive_seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kAugmentStream = 3;

void check_finite(const MiniCNN3D<float>& model, std::size_t epoch) {
  const auto& params = model.params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (float v : params[p].data()) {
      if (!std::isfinite(v)) {
        throw ValidationError(std::string("parameter ") + MiniCNN3D<float>::param_name(p) +
                              " is not finite after epoch " + std::to_string(epoch));
      }
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ValidationError("learning rate must be > 0");
  if (batch < 1) throw ValidationError("batch size must be >= 1");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ValidationError("Adam epsilon must be > 0");
  if (!(lambda >= 0.0)) throw ValidationError("regularizer weight lambda must be >= 0");
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::vector<TensorF>& params, const std::vector<TensorF>& grads) {
  if (params.size() != grads.size()) throw ValidationError("Adam: params and grads differ in count");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = m_[k];
    auto& v = v_[k];
    const auto& g = grads[k];
    auto& p = params[k];
    if (g.size() != p.size()) throw ShapeError("Adam: gradient shape does not match parameter");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] = static_cast<float>(p[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

std::vector<CellCrop> load_split(const Manifest& manifest, Split split, Extent3 input,
                                 std::size_t workers) {
  const auto records = manifest.split(split);
  if (records.empty()) {
    throw ValidationError("manifest has no " + std::string(split_name(split)) + " records");
  }
  std::vector<CellCrop> crops(records.size());
  parallel_for(
      records.size(),
      [&](std::size_t i) {
        const ManifestRecord& r = records[i];
        CellCrop c;
        c.cell_id = r.cell_id;
        c.label = r.label;
        c.well = r.well;
        c.site = r.site;
        c.volume = tbf::load_as<float>(manifest.resolve(r.crop_path));
        c.mask = tbf::load_as<float>(manifest.resolve(r.mask_path));
        if (c.volume.rank() != 4 || c.mask.rank() != 3 || !(c.volume.spatial() == c.mask.spatial())) {
          throw ShapeError("crop " + r.cell_id + ": volume " + shape_to_string(c.volume.shape()) +
                           " and mask " + shape_to_string(c.mask.shape()) + " do not match");
        }
        crops[i] = rescale_unit(resize_crop(std::move(c), input));
      },
      workers);
  return crops;
}

std::vector<CellCrop> normalize_all(std::vector<CellCrop> crops, const ChannelStats& stats) {
  for (auto& c : crops) c = normalize(std::move(c), stats);
  return crops;
}

double accuracy(const MiniCNN3D<float>& model, const std::vector<CellCrop>& crops,
                std::size_t workers) {
  if (crops.empty()) return 0.0;
  std::vector<char> hit(crops.size(), 0);
  parallel_for(
      crops.size(),
      [&](std::size_t i) {
        hit[i] = static_cast<int>(predict(model, crops[i].volume).label) == crops[i].label;
      },
      workers);
  const auto n = std::count(hit.begin(), hit.end(), char{1});
  return static_cast<double>(n) / static_cast<double>(crops.size());
}

TrainResult train(const ModelSpec& spec, const std::vector<CellCrop>& train_crops,
                  const std::vector<CellCrop>& val_crops, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  spec.validate();
  if (train_crops.empty()) throw ValidationError("training split is empty");
  if (val_crops.empty()) throw ValidationError("validation split is empty");
  for (const auto& c : train_crops) {
    if (c.label < 0 || static_cast<std::size_t>(c.label) >= spec.num_classes) {
      throw ValidationError("label " + std::to_string(c.label) + " of cell " + c.cell_id +
                            " is outside [0, " + std::to_string(spec.num_classes) + ")");
    }
  }

  const ChannelStats stats = compute_channel_stats(train_crops);
  const std::vector<CellCrop> val = normalize_all(val_crops, stats);

  MiniCNN3D<float> model(spec, derive_seed(config.seed, {kInitStream}), HeadInit::kZero);
  Adam adam(config.lr, config.beta1, config.beta2, config.adam_eps);

  TrainResult result;
  result.trained = {model, stats};
  result.best_val_acc = -1.0;
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train_crops.size());
  std::vector<Example<float>> batch;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(config.seed, {kShuffleStream, epoch}));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0, gradcamo_sum = 0.0;
    std::size_t correct = 0, batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t n = std::min(config.batch, order.size() - start);
      batch.assign(n, {});
      parallel_for(
          n,
          [&](std::size_t j) {
            const std::size_t idx = order[start + j];
            CellCrop c = train_crops[idx];
            if (config.augment) c = augment(std::move(c), derive_seed(config.seed, {kAugmentStream, epoch, idx}));
            c = normalize(std::move(c), stats);
            batch[j] = {std::move(c.volume), std::move(c.mask), static_cast<std::size_t>(c.label)};
          },
          config.workers);
      const auto out = regularized_loss<float>(model, batch, static_cast<float>(config.lambda),
                                               true, config.workers);
      adam.step(model.params(), out.grads);
      loss_sum += out.loss;
      gradcamo_sum += out.gradcamo;
      correct += out.correct;
      ++batches;
    }
    check_finite(model, epoch);

    EpochStats s;
    s.epoch = epoch;
    s.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    s.val_acc = accuracy(model, val, config.workers);
    s.loss = loss_sum / static_cast<double>(batches);
    s.mean_gradcamo = gradcamo_sum / static_cast<double>(batches);
    result.history.push_back(s);
    result.final_val_acc = s.val_acc;
    if (on_epoch) on_epoch(s);

    if (s.val_acc > result.best_val_acc) {
      result.best_val_acc = s.val_acc;
      result.best_epoch = epoch;
      result.trained.model = model;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

TrainResult train(const ModelSpec& spec, const Manifest& manifest, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  const auto train_crops = load_split(manifest, Split::kTrain, spec.input, config.workers);
  const auto val_crops = load_split(manifest, Split::kVal, spec.input, config.workers);
  return train(spec, train_crops, val_crops, config, on_epoch);
}

void write_history_csv(const std::vector<EpochStats>& history, bool with_gradcamo,
                       const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_acc,val_acc,loss,mean_gradcamo\n";
  for (const auto& s : history) {
    out << s.epoch << ',' << csv::format(s.train_acc) << ',' << csv::format(s.val_acc) << ','
        << csv::format(s.loss) << ',';
    if (with_gradcamo) out << csv::format(s.mean_gradcamo);
    out << '\n';
  }
}

}  // namespace gcamo
