#include <benchmark/benchmark.h>

#include <random>

#include "gcamo/gradcam.hpp"
#include "gcamo/gradcamo.hpp"
#include "gcamo/model.hpp"
#include "gcamo/ops.hpp"

namespace gcamo {
namespace {

TensorF random_tensor(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  TensorF t(shape);
  for (auto& v : t.storage()) v = dist(rng);
  return t;
}

const ModelSpec kSpec{3, 6, {8, 16, 32, 64}, {32, 32, 16}};

void BM_Conv3dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const TensorF in = random_tensor({c, 32, 32, 16}, 1);
  const TensorF k = random_tensor({c, c, 3, 3, 3}, 2);
  const TensorF b = random_tensor({c}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv3d_forward<float>(in, k, b, nullptr));
}
BENCHMARK(BM_Conv3dForward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Conv3dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const TensorF in = random_tensor({c, 32, 32, 16}, 1);
  const TensorF k = random_tensor({c, c, 3, 3, 3}, 2);
  const TensorF b = random_tensor({c}, 3);
  std::vector<float> cols;
  const TensorF out = ops::conv3d_forward(in, k, b, &cols);
  const TensorF g = random_tensor(out.shape(), 4);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv3d_backward(g, in, k, cols, true));
}
BENCHMARK(BM_Conv3dBackward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ModelForward(benchmark::State& state) {
  const MiniCNN3D<float> model(kSpec, 1);
  const TensorF v = random_tensor({3, 32, 32, 16}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(forward(model, v));
}
BENCHMARK(BM_ModelForward)->Unit(benchmark::kMillisecond);

void BM_ModelForwardBackward(benchmark::State& state) {
  const MiniCNN3D<float> model(kSpec, 1);
  const TensorF v = random_tensor({3, 32, 32, 16}, 5);
  for (auto _ : state) {
    Tape<float> tape;
    const auto g = model.build(tape, v);
    tape.backward(tape.softmax_cross_entropy(g.logits, 2));
    benchmark::DoNotOptimize(tape.grad(g.params[0]));
  }
}
BENCHMARK(BM_ModelForwardBackward)->Unit(benchmark::kMillisecond);

void BM_RegularizedBatch(benchmark::State& state) {
  const MiniCNN3D<float> model(kSpec, 1);
  std::vector<Example<float>> batch;
  for (std::size_t i = 0; i < 8; ++i) {
    batch.push_back({random_tensor({3, 32, 32, 16}, 10 + i), TensorF(Shape{32, 32, 16}, 1.0f), i % 6});
  }
  const auto lambda = static_cast<float>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(regularized_loss<float>(model, batch, lambda, true, 1));
  }
}
BENCHMARK(BM_RegularizedBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_GradCam(benchmark::State& state) {
  const MiniCNN3D<float> model(kSpec, 1);
  const TensorF v = random_tensor({3, 32, 32, 16}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(gradcam_for_cell(model, v));
}
BENCHMARK(BM_GradCam)->Unit(benchmark::kMillisecond);

void BM_TrilinearUpsample(benchmark::State& state) {
  const TensorF coarse = random_tensor({4, 4, 2}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(ops::trilinear_resize(coarse, {32, 32, 16}));
}
BENCHMARK(BM_TrilinearUpsample)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace gcamo

BENCHMARK_MAIN();
