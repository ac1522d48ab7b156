// Acceptance run: one PASS/FAIL line per criterion, details on the lines
// that follow. Exit status is non-zero if any criterion fails.
#include <Eigen/Dense>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>

#include "gcamo/gradcam.hpp"
#include "gcamo/gradcamo.hpp"
#include "gcamo/ops.hpp"
#include "gcamo/synth.hpp"
#include "gcamo/train.hpp"
#include "gcamo/whitening.hpp"
#include "test_util.hpp"

namespace gcamo {
namespace {

using testing::random_tensor;
using testing::run;
using testing::tree_hash;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// 1. Finite-difference checks live in the gradcheck suite; run it whole.
Verdict gradient_correctness() {
  const int status = run(std::string(GCAMO_GRADCHECK));
  return {status == 0, "gradcheck suite (20 seeds per op and for the full loss) exit status " +
                           std::to_string(status)};
}

// 2. Grad-CAM of a GAP -> linear network against classical CAM.
Verdict cam_equivalence() {
  const ModelSpec spec{2, 4, {4, 6, 8, 12}, {16, 16, 8}};
  double worst = 0.0;
  int compared = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto model = MiniCNN3D<float>(spec, seed).cast<double>();
    std::mt19937_64 rng(100 + seed);
    const TensorD v = random_tensor<double>({2, 16, 16, 8}, rng);
    const TensorD a = forward(model, v).activation;
    const TensorD& head = model.params()[MiniCNN3D<double>::kHeadWeight];
    const std::size_t c = a.dim(0), n = a.size() / c;
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
      TensorD cam(Shape{a.dim(1), a.dim(2), a.dim(3)});
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < n; ++i) cam[i] += head[k * c + ch] * a[ch * n + i];
      cam = ops::relu_forward(cam);
      const TensorD g = gradcam_for_cell(model, v, k).coarse;
      double cmax = 0.0, gmax = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cmax = std::max(cmax, cam[i]);
        gmax = std::max(gmax, g[i]);
      }
      if (cmax <= 0.0) continue;
      for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(cam[i] / cmax - g[i] / gmax));
      ++compared;
    }
  }
  return {worst < 1e-5 && compared > 0,
          fmt("max abs deviation after max-normalization %.3g over %.0f class maps", worst, compared)};
}

// 3. Grad-CAMO algebra over randomized cases.
Verdict gradcamo_algebra() {
  constexpr int kCases = 2000;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> extent(1, 9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> exponent(-8, 8);
  int failures = 0;
  double worst_scale = 0.0, worst_complement = 0.0;
  for (int i = 0; i < kCases; ++i) {
    const Shape s{extent(rng), extent(rng), extent(rng)};
    TensorD g(s), m(s), mc(s);
    const double p = unit(rng);
    for (std::size_t j = 0; j < g.size(); ++j) {
      g[j] = unit(rng) < 0.2 ? 0.0 : 10.0 * unit(rng);
      m[j] = unit(rng) < p ? 1.0 : 0.0;
      mc[j] = 1.0 - m[j];
    }
    const auto base = gradcamo_score(g, m);
    if (base.score < 0.0 || base.score > 1.0) ++failures;

    TensorD scaled = g;
    const double alpha = std::exp(12.0 * unit(rng) - 6.0);
    for (auto& v : scaled.storage()) v *= alpha;
    const double ds = std::abs(gradcamo_score(scaled, m).score - base.score) /
                      std::max(base.score, 1e-300);
    worst_scale = std::max(worst_scale, ds);
    if (ds > 1e-12) ++failures;

    if (!base.degenerate) {
      const double dc = std::abs(base.score + gradcamo_score(g, mc).score - 1.0);
      worst_complement = std::max(worst_complement, dc);
      if (dc > 1e-9) ++failures;
    }

    TensorD uniform(s, std::ldexp(1.0, exponent(rng)));
    double inside = 0.0;
    for (double v : m.data()) inside += v;
    if (gradcamo_score(uniform, m).score != inside / static_cast<double>(m.size())) ++failures;

    const auto degenerate = gradcamo_score(TensorD(s), m);
    if (degenerate.score != 0.0 || !degenerate.degenerate) ++failures;
  }
  return {failures == 0,
          fmt("%.0f cases x 5 properties, %.0f failures; worst scale rel %.2g, complement %.2g",
              kCases, failures, worst_scale, worst_complement)};
}

// 4. Whitening of correlated controls, and a rank-deficient fit.
Verdict whitening() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = 500, d = 64;
  Eigen::MatrixXd mix(d, d);
  for (Eigen::Index i = 0; i < mix.size(); ++i) mix.data()[i] = normal(rng);
  Matrix x(n, d);
  Eigen::VectorXd z(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) z(i) = normal(rng);
    const Eigen::VectorXd row = mix * z;
    for (std::size_t i = 0; i < d; ++i) x(r, i) = 2.0 + row(i);
  }
  const Matrix y = apply_whitening(fit_whitening(x), x);
  Eigen::MatrixXd ym(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) ym(r, c) = y(r, c);
  const Eigen::MatrixXd centred = ym.rowwise() - ym.colwise().mean();
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n);
  const double err = (cov - Eigen::MatrixXd::Identity(d, d)).norm();

  Matrix low(20, d);
  for (std::size_t r = 0; r < 20; ++r)
    for (std::size_t c = 0; c < d; ++c) low(r, c) = c % 2 ? low(r, c - 1) : normal(rng);
  bool finite = true;
  for (double v : apply_whitening(fit_whitening(low), x).data) finite = finite && std::isfinite(v);
  return {err < 1e-6 && finite,
          fmt("||cov - I||_F = %.3g (N=500, d=64); rank-deficient output finite: %.0f", err,
              finite ? 1.0 : 0.0)};
}

// 5. Trilinear exactness on constants and per-axis ramps.
Verdict trilinear() {
  double const_err = 0.0, ramp_err = 0.0;
  const Extent3 targets[] = {{7, 5, 3}, {16, 12, 9}, {3, 8, 4}};
  for (const Extent3 t : targets) {
    const TensorD c = ops::trilinear_resize(TensorD(Shape{2, 4, 6, 5}, 0.3125), t);
    for (double v : c.data()) const_err = std::max(const_err, std::abs(v - 0.3125));
    const TensorF cf = ops::trilinear_resize(TensorF(Shape{4, 6, 5}, 0.7f), t);
    for (float v : cf.data()) const_err = std::max(const_err, double(std::abs(v - 0.7f)));

    // Align-corners-free sampling: target voxel i maps to (i + 0.5) * in / out - 0.5.
    const Extent3 in{4, 6, 5};
    for (int axis = 0; axis < 3; ++axis) {
      TensorD ramp(Shape{in.x, in.y, in.z});
      for (std::size_t x = 0; x < in.x; ++x)
        for (std::size_t y = 0; y < in.y; ++y)
          for (std::size_t z = 0; z < in.z; ++z)
            ramp.at(x, y, z) = 1.5 + 0.25 * double(axis == 0 ? x : axis == 1 ? y : z);
      const TensorD out = ops::trilinear_resize(ramp, t);
      const double n_in[] = {double(in.x), double(in.y), double(in.z)};
      const double n_out[] = {double(t.x), double(t.y), double(t.z)};
      for (std::size_t x = 0; x < t.x; ++x)
        for (std::size_t y = 0; y < t.y; ++y)
          for (std::size_t z = 0; z < t.z; ++z) {
            const double i = double(axis == 0 ? x : axis == 1 ? y : z);
            const double src = (i + 0.5) * n_in[axis] / n_out[axis] - 0.5;
            if (src < 0.0 || src > n_in[axis] - 1.0) continue;  // clamped border
            ramp_err = std::max(ramp_err, std::abs(out.at(x, y, z) - (1.5 + 0.25 * src)));
          }
    }
  }
  return {const_err == 0.0 && ramp_err < 1e-6,
          fmt("constant max error %.3g, interior ramp max error %.3g", const_err, ramp_err)};
}

// End-to-end protocol: synth -> crops -> train -> audit of the test split.
struct RunResult {
  double val_acc = 0.0;
  double test_acc = 0.0;
  double gradcamo = 0.0;
  std::size_t cells = 0;
  std::size_t epochs = 0;
};

struct Prepared {
  ModelSpec spec;
  std::vector<CellCrop> split[3];
  std::size_t cells = 0;
};

Prepared prepare(std::uint64_t seed, double gamma) {
  synth::SynthConfig sc;
  sc.seed = seed;
  sc.confound_strength = gamma;
  const synth::SynthDataset data = synth::generate(sc);

  Prepared p;
  p.spec = ModelSpec{static_cast<std::size_t>(sc.channels), static_cast<std::size_t>(sc.n_doses)};
  for (std::size_t s = 0; s < data.stacks.size(); ++s) {
    const auto& info = data.info[s];
    for (CellCrop& c : extract_crops(data.stacks[s], data.masks[s], sc.crop)) {
      c.cell_id = info.id + "_c" + std::to_string(c.instance);
      c.label = info.dose;
      c.well = info.well;
      c.site = info.site;
      p.split[static_cast<int>(info.split)].push_back(
          rescale_unit(resize_crop(std::move(c), p.spec.input)));
      ++p.cells;
    }
  }
  return p;
}

RunResult protocol(const Prepared& p, std::uint64_t seed, double lambda) {
  TrainConfig tc;
  tc.seed = seed;
  tc.lambda = lambda;
  const TrainResult trained = train(p.spec, p.split[0], p.split[1], tc);
  const auto test = normalize_all(p.split[2], trained.trained.stats);
  const AuditResult audit_result = audit(trained.trained.model, test);
  RunResult r;
  r.cells = p.cells;
  r.val_acc = trained.best_val_acc;
  r.test_acc = audit_result.summary.accuracy;
  r.gradcamo = audit_result.summary.overall.mean;
  r.epochs = trained.history.size();
  return r;
}

std::string describe(const char* tag, std::uint64_t seed, const RunResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "    %s seed %llu: %zu cells, %zu epochs, val acc %.3f, test acc %.3f, "
                "mean test Grad-CAMO %.3f",
                tag, static_cast<unsigned long long>(seed), r.cells, r.epochs, r.val_acc, r.test_acc,
                r.gradcamo);
  return buf;
}

// 9. Reruns of synth, train (lambda = 0) and score are byte-identical.
Verdict determinism() {
  testing::TempDir dir("acceptance_determinism");
  const std::string cli = GCAMO_CLI;
  std::uint64_t hashes[2][3];
  bool ok = true;
  for (int rep = 0; rep < 2; ++rep) {
    const auto root = dir.path() / ("run" + std::to_string(rep));
    const auto q = [](const std::filesystem::path& p) { return "'" + p.string() + "'"; };
    ok = ok && run(cli + " synth --out " + q(root / "synth") +
                   " --doses 3 --sites 2 --cells-per-site 4 --volume-xy 96 --gamma 1 --seed 9") == 0;
    ok = ok && run(cli + " crop --stacks " + q(root / "synth/stacks") + " --masks " +
                   q(root / "synth/masks") + " --out " + q(root / "crops")) == 0;
    ok = ok && run(cli + " train --manifest " + q(root / "crops/manifest.json") + " --out " +
                   q(root / "model") + " --epochs 2 --seed 9") == 0;
    ok = ok && run(cli + " score --model " + q(root / "model") + " --manifest " +
                   q(root / "crops/manifest.json") + " --out " + q(root / "scores/scores.csv")) == 0;
    if (!ok) return {false, "a CLI step failed"};
    const std::vector<std::string> skip{"config.json", "scores.config.json"};
    hashes[rep][0] = tree_hash(root / "synth", skip);
    hashes[rep][1] = tree_hash(root / "model", skip);
    hashes[rep][2] = tree_hash(root / "scores", skip);
  }
  const bool same = hashes[0][0] == hashes[1][0] && hashes[0][1] == hashes[1][1] &&
                    hashes[0][2] == hashes[1][2];
  char buf[160];
  std::snprintf(buf, sizeof buf, "synth %016llx, train %016llx, score %016llx (%s)",
                static_cast<unsigned long long>(hashes[0][0]),
                static_cast<unsigned long long>(hashes[0][1]),
                static_cast<unsigned long long>(hashes[0][2]), same ? "identical" : "differ");
  return {same, buf};
}

int report(int id, const Verdict& v) {
  std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << "\n    " << v.detail
            << std::endl;
  return v.pass ? 0 : 1;
}

}  // namespace
}  // namespace gcamo

int main() {
  using namespace gcamo;
  const auto start = std::chrono::steady_clock::now();
  int failed = 0;
  failed += report(1, gradient_correctness());
  failed += report(2, cam_equivalence());
  failed += report(3, gradcamo_algebra());
  failed += report(4, whitening());
  failed += report(5, trilinear());

  const std::uint64_t seeds[] = {1, 2, 3};
  RunResult clean[3], confounded[3], regularized[3];
  std::string log;
  for (int i = 0; i < 3; ++i) {
    clean[i] = protocol(prepare(seeds[i], 0.0), seeds[i], 0.0);
    const Prepared confounded_data = prepare(seeds[i], 1.0);
    confounded[i] = protocol(confounded_data, seeds[i], 0.0);
    regularized[i] = protocol(confounded_data, seeds[i], kRecommendedLambda);
    log += describe("gamma=0         ", seeds[i], clean[i]) + "\n";
    log += describe("gamma=1         ", seeds[i], confounded[i]) + "\n";
    log += describe("gamma=1, lambda>0", seeds[i], regularized[i]) + "\n";
  }
  std::cout << "end-to-end runs (lambda = " << kRecommendedLambda << "):\n" << log;

  const RunResult& c0 = clean[0];
  failed += report(6, {c0.val_acc >= 0.80 && c0.gradcamo >= 0.5,
                       fmt("seed 1: val acc %.3f (>= 0.80), mean test Grad-CAMO %.3f (>= 0.5)",
                           c0.val_acc, c0.gradcamo)});

  int margin_ok = 0, reg_ok = 0;
  std::string drops, gains;
  for (int i = 0; i < 3; ++i) {
    const double drop = clean[i].gradcamo - confounded[i].gradcamo;
    margin_ok += drop >= 0.1 && confounded[i].test_acc >= 0.80;
    reg_ok += regularized[i].gradcamo >= confounded[i].gradcamo;
    drops += fmt(" %.3f (acc %.3f)", drop, confounded[i].test_acc);
    gains += fmt(" %+.3f", regularized[i].gradcamo - confounded[i].gradcamo);
  }
  failed += report(7, {margin_ok >= 2, "Grad-CAMO drop gamma 0 -> 1 per seed:" + drops +
                                           "; " + std::to_string(margin_ok) + "/3 meet the margin"});
  failed += report(8, {reg_ok >= 2, "Grad-CAMO change from the regularizer per seed:" + gains +
                                        "; " + std::to_string(reg_ok) + "/3 non-negative"});
  failed += report(9, determinism());

  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  std::cout << "acceptance: " << (9 - failed) << "/9 criteria passed in "
            << fmt("%.1f", minutes) << " min" << std::endl;
  return failed == 0 ? 0 : 1;
}
