#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "gcamo/error.hpp"
#include "gcamo/train.hpp"
#include "test_util.hpp"

namespace gcamo {
namespace {

TEST(Adam, MatchesHandComputedSteps) {
  std::vector<TensorF> params{TensorF(Shape{2}, std::vector<float>{1.0f, -2.0f})};
  Adam adam(0.1, 0.9, 0.999, 1e-8);
  const double g1[2] = {0.5, -1.0}, g2[2] = {-0.25, 2.0};
  double p[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 2; ++t) {
    const double* g = t == 1 ? g1 : g2;
    std::vector<TensorF> grads{TensorF(Shape{2}, std::vector<float>{float(g[0]), float(g[1])})};
    adam.step(params, grads);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      p[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(params[0][i], p[i], 1e-6) << "step " << t;
    }
  }
  // First step moves every coordinate by lr against the gradient sign.
  EXPECT_EQ(adam.steps(), 2u);
  std::vector<TensorF> wrong{TensorF(Shape{3})};
  EXPECT_THROW(adam.step(params, wrong), ShapeError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.batch = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.lambda = -0.1;
  EXPECT_THROW(c.validate(), ValidationError);
}

ModelSpec toy_spec() { return ModelSpec{2, 2, {4, 4, 4, 4}, {16, 16, 8}}; }

// Class k lights up a central blob in channel k; both channels carry noise.
std::vector<CellCrop> toy_crops(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> noise(0.0f, 0.3f);
  std::vector<CellCrop> out;
  for (std::size_t i = 0; i < n; ++i) {
    CellCrop c;
    c.cell_id = "toy" + std::to_string(seed) + "_" + std::to_string(i);
    c.label = static_cast<int>(i % 2);
    c.well = c.label == 0 ? "B02" : "C02";
    c.volume = TensorF(Shape{2, 16, 16, 8});
    c.mask = TensorF(Shape{16, 16, 8});
    for (auto& v : c.volume.storage()) v = noise(rng);
    for (std::size_t x = 4; x < 12; ++x)
      for (std::size_t y = 4; y < 12; ++y)
        for (std::size_t z = 0; z < 8; ++z) {
          c.volume.at(static_cast<std::size_t>(c.label), x, y, z) += 0.7f;
          c.mask.at(x, y, z) = 1.0f;
        }
    out.push_back(rescale_unit(std::move(c)));
  }
  return out;
}

TrainConfig toy_config() {
  TrainConfig c;
  c.lr = 1e-2;
  c.epochs = 8;
  c.batch = 4;
  c.patience = 0;
  c.seed = 3;
  c.workers = 1;
  return c;
}

TEST(Train, SeparableToyReachesPerfectAccuracy) {
  const auto train_set = toy_crops(16, 1), val_set = toy_crops(8, 2);
  std::vector<EpochStats> seen;
  const TrainResult r =
      train(toy_spec(), train_set, val_set, toy_config(), [&](const EpochStats& s) { seen.push_back(s); });
  EXPECT_EQ(seen.size(), 8u);
  EXPECT_EQ(r.history.size(), 8u);
  EXPECT_EQ(r.best_val_acc, 1.0);
  EXPECT_GE(r.best_val_acc, r.final_val_acc);
  EXPECT_LT(r.history.back().loss, r.history.front().loss);
  const auto val = normalize_all(val_set, r.trained.stats);
  EXPECT_EQ(accuracy(r.trained.model, val), r.best_val_acc);
}

TEST(Train, SameSeedIsBitwiseReproducible) {
  const auto train_set = toy_crops(8, 1), val_set = toy_crops(4, 2);
  TrainConfig c = toy_config();
  c.epochs = 2;
  c.lambda = 0.3;
  const TrainResult a = train(toy_spec(), train_set, val_set, c);
  c.workers = 3;
  const TrainResult b = train(toy_spec(), train_set, val_set, c);
  EXPECT_EQ(a.trained.model.params(), b.trained.model.params());
  EXPECT_EQ(a.history.back().loss, b.history.back().loss);
  EXPECT_GT(a.history.back().mean_gradcamo, 0.0);
  c.seed = 4;
  const TrainResult d = train(toy_spec(), train_set, val_set, c);
  EXPECT_NE(a.trained.model.params(), d.trained.model.params());
}

TEST(Train, EarlyStoppingKeepsBestEpoch) {
  const auto train_set = toy_crops(8, 1), val_set = toy_crops(4, 2);
  TrainConfig c = toy_config();
  c.epochs = 30;
  c.patience = 2;
  const TrainResult r = train(toy_spec(), train_set, val_set, c);
  EXPECT_LT(r.history.size(), 30u);
  EXPECT_EQ(r.history.size(), r.best_epoch + 2);
  EXPECT_GE(r.best_val_acc, r.final_val_acc);
}

TEST(Train, InputErrors) {
  const auto crops = toy_crops(4, 1);
  EXPECT_THROW(train(toy_spec(), {}, crops, toy_config()), ValidationError);
  EXPECT_THROW(train(toy_spec(), crops, {}, toy_config()), ValidationError);
  auto bad = crops;
  bad[0].label = 5;
  EXPECT_THROW(train(toy_spec(), bad, crops, toy_config()), ValidationError);
  Manifest m;
  EXPECT_THROW(load_split(m, Split::kVal, {16, 16, 8}), ValidationError);
}

TEST(Train, HistoryCsvLeavesGradcamoEmptyWithoutRegularizer) {
  testing::TempDir dir("history");
  const std::vector<EpochStats> h{{1, 0.5, 0.25, 1.5, 0.0}, {2, 0.75, 0.5, 1.0, 0.4}};
  write_history_csv(h, false, dir / "plain.csv");
  write_history_csv(h, true, dir / "reg.csv");
  std::ifstream plain(dir / "plain.csv"), reg(dir / "reg.csv");
  std::string line;
  std::getline(plain, line);
  EXPECT_EQ(line, "epoch,train_acc,val_acc,loss,mean_gradcamo");
  std::getline(plain, line);
  EXPECT_EQ(line.back(), ',');
  std::getline(reg, line);
  std::getline(reg, line);
  std::getline(reg, line);
  EXPECT_EQ(line.substr(0, 2), "2,");
  EXPECT_NE(line.back(), ',');
}

}  // namespace
}  // namespace gcamo
