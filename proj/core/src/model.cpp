#include "gcamo/model.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "gcamo/ops.hpp"
#include "gcamo/tbf.hpp"

namespace gcamo {

using nlohmann::json;

void ModelSpec::validate() const {
  if (in_channels == 0 || num_classes < 2) {
    throw ValidationError("model needs >= 1 input channel and >= 2 classes");
  }
  for (std::size_t w : widths) {
    if (w == 0) throw ValidationError("model widths must be >= 1");
  }
  if (input.x % kDownsample || input.y % kDownsample || input.z % kDownsample) {
    throw ValidationError("model input extents must be divisible by " +
                          std::to_string(kDownsample));
  }
}

template <typename T>
MiniCNN3D<T>::MiniCNN3D(ModelSpec spec, std::uint64_t seed, HeadInit head)
    : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  std::size_t in = spec_.in_channels;
  for (std::size_t b = 0; b < 4; ++b) {
    const std::size_t out = spec_.widths[b];
    const double bound = std::sqrt(6.0 / static_cast<double>(in * ops::kTaps));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<T> kernel(Shape{out, in, 3, 3, 3});
    for (T& v : kernel.data()) v = static_cast<T>(dist(rng));
    params_.push_back(std::move(kernel));
    params_.emplace_back(Shape{out});
    in = out;
  }
  const std::size_t d = spec_.feature_dim();
  const std::size_t k = spec_.num_classes;
  Tensor<T> w(Shape{k, d});
  if (head == HeadInit::kRandom) {
    const double bound = std::sqrt(6.0 / static_cast<double>(d + k));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (T& v : w.data()) v = static_cast<T>(dist(rng));
  }
  params_.push_back(std::move(w));
  params_.emplace_back(Shape{k});
}

template <typename T>
MiniCNN3D<T>::MiniCNN3D(ModelSpec spec, std::vector<Tensor<T>> params)
    : spec_(spec), params_(std::move(params)) {
  spec_.validate();
  if (params_.size() != kNumParams) {
    throw ValidationError("MiniCNN3D expects " + std::to_string(kNumParams) +
                          " parameter tensors, got " + std::to_string(params_.size()));
  }
  std::size_t in = spec_.in_channels;
  for (std::size_t b = 0; b < 4; ++b) {
    const Shape ks{spec_.widths[b], in, 3, 3, 3};
    if (params_[2 * b].shape() != ks || params_[2 * b + 1].shape() != Shape{spec_.widths[b]}) {
      throw ShapeError(std::string("parameter ") + param_name(2 * b) + " has shape " +
                       shape_to_string(params_[2 * b].shape()) + ", expected " +
                       shape_to_string(ks));
    }
    in = spec_.widths[b];
  }
  if (params_[kHeadWeight].shape() != Shape{spec_.num_classes, spec_.feature_dim()} ||
      params_[kHeadBias].shape() != Shape{spec_.num_classes}) {
    throw ShapeError("head parameters do not match the model spec");
  }
}

template <typename T>
const char* MiniCNN3D<T>::param_name(std::size_t i) {
  static constexpr const char* kNames[kNumParams] = {
      "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "conv3.weight",
      "conv3.bias",   "conv4.weight", "conv4.bias", "head.weight", "head.bias"};
  return kNames[i];
}

template <typename T>
void MiniCNN3D<T>::check_input(const Shape& s) const {
  if (s.size() != 4 || s[0] != spec_.in_channels) {
    throw ShapeError("model expects a [" + std::to_string(spec_.in_channels) +
                     ",X,Y,Z] volume, got " + shape_to_string(s));
  }
  const std::size_t f = ModelSpec::kDownsample;
  if (s[1] % f || s[2] % f || s[3] % f) {
    throw ShapeError("volume extents " + shape_to_string(s) + " are not divisible by " +
                     std::to_string(f) + "; resize crops to the model input shape first");
  }
}

template <typename T>
typename MiniCNN3D<T>::Graph MiniCNN3D<T>::build(Tape<T>& tape,
                                                 const Tensor<T>& volume) const {
  check_input(volume.shape());
  Graph g;
  g.input = tape.constant(volume);
  for (std::size_t i = 0; i < kNumParams; ++i) g.params[i] = tape.leaf(params_[i]);
  NodeId h = g.input;
  for (std::size_t b = 0; b < 4; ++b) {
    h = tape.relu(tape.conv3d(h, g.params[2 * b], g.params[2 * b + 1]));
    if (b < 3) h = tape.maxpool3d(h);
  }
  g.activation = h;
  g.features = tape.global_avg_pool(h);
  g.logits = tape.linear(g.features, g.params[kHeadWeight], g.params[kHeadBias]);
  return g;
}

template <typename T>
ForwardResult<T> forward(const MiniCNN3D<T>& model, const Tensor<T>& volume) {
  Tape<T> tape(GradMode::kDisabled);
  const auto g = model.build(tape, volume);
  return {tape.value(g.logits), tape.value(g.activation)};
}

namespace {

template <typename T>
Prediction predict_impl(std::span<const T> logits) {
  Prediction p;
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  p.label = best;
  const double m = static_cast<double>(logits[best]);
  double z = 0.0;
  for (T v : logits) {
    p.probabilities.push_back(std::exp(static_cast<double>(v) - m));
    z += p.probabilities.back();
  }
  for (double& v : p.probabilities) v /= z;
  return p;
}

}  // namespace

Prediction predict_from_logits(std::span<const float> logits) { return predict_impl(logits); }
Prediction predict_from_logits(std::span<const double> logits) { return predict_impl(logits); }

void save_model(const TrainedModel& trained, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const ModelSpec& s = trained.model.spec();
  json desc;
  desc["architecture"] = "MiniCNN3D";
  desc["in_channels"] = s.in_channels;
  desc["num_classes"] = s.num_classes;
  desc["widths"] = s.widths;
  desc["input"] = {s.input.x, s.input.y, s.input.z};
  desc["activation_layer"] = "conv4.relu";
  desc["channel_mean"] = trained.stats.mean;
  desc["channel_stddev"] = trained.stats.stddev;
  json files = json::array();
  for (std::size_t i = 0; i < MiniCNN3D<float>::kNumParams; ++i) {
    const std::string file = std::string(MiniCNN3D<float>::param_name(i)) + ".tbf";
    tbf::save(dir / file, trained.model.params()[i]);
    files.push_back(file);
  }
  desc["params"] = files;
  std::ofstream out(dir / "model.json");
  if (!out) throw IoError("cannot write " + (dir / "model.json").string());
  out << desc.dump(2) << '\n';
}

TrainedModel load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw IoError("cannot open " + (dir / "model.json").string());
  json desc;
  try {
    in >> desc;
    if (desc.at("architecture") != "MiniCNN3D") {
      throw ValidationError("unsupported architecture in " + (dir / "model.json").string());
    }
    ModelSpec spec;
    spec.in_channels = desc.at("in_channels");
    spec.num_classes = desc.at("num_classes");
    spec.widths = desc.at("widths").get<std::array<std::size_t, 4>>();
    const auto input = desc.at("input").get<std::array<std::size_t, 3>>();
    spec.input = {input[0], input[1], input[2]};
    std::vector<TensorF> params;
    for (const auto& f : desc.at("params")) {
      params.push_back(tbf::load_as<float>(dir / f.get<std::string>()));
    }
    TrainedModel t{MiniCNN3D<float>(spec, std::move(params)), {}};
    t.stats.mean = desc.at("channel_mean").get<std::vector<double>>();
    t.stats.stddev = desc.at("channel_stddev").get<std::vector<double>>();
    return t;
  } catch (const json::exception& e) {
    throw IoError("malformed model descriptor " + (dir / "model.json").string() + ": " +
                  e.what());
  }
}

template class MiniCNN3D<float>;
template class MiniCNN3D<double>;
template ForwardResult<float> forward(const MiniCNN3D<float>&, const Tensor<float>&);
template ForwardResult<double> forward(const MiniCNN3D<double>&, const Tensor<double>&);

}  // namespace gcamo
