#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>
#include <sys/wait.h>
#include <unistd.h>

#include "gcamo/tensor.hpp"

namespace gcamo::testing {

template <typename T = double>
Tensor<T> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                        double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(shape);
  for (auto& v : t.storage()) v = static_cast<T>(dist(rng));
  return t;
}

/// ||a - b|| / max(||a||, ||b||, tiny).
inline double relative_error(const TensorD& a, const TensorD& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / scale;
}

/// Central differences of f with respect to every entry of x (or `max_entries`
/// evenly spaced ones; unsampled entries copy `analytic` so they do not count).
inline TensorD numeric_gradient(const std::function<double(const TensorD&)>& f, TensorD x,
                                const TensorD& analytic, double h = 1e-5,
                                std::size_t max_entries = 0) {
  TensorD g = analytic;
  const std::size_t stride =
      max_entries == 0 || x.size() <= max_entries ? 1 : x.size() / max_entries;
  for (std::size_t i = 0; i < x.size(); i += stride) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Unique scratch directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    path_ = std::filesystem::temp_directory_path() /
            ("gcamo_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace gcamo::testing

namespace gcamo::testing {

/// FNV-1a over a file's bytes.
inline std::uint64_t file_hash(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

/// Hash of every regular file under `dir` (relative path and content), in
/// sorted path order. Files named in `skip` are ignored.
inline std::uint64_t tree_hash(const std::filesystem::path& dir,
                               const std::vector<std::string>& skip = {}) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    if (std::find(skip.begin(), skip.end(), e.path().filename().string()) != skip.end()) continue;
    files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& f : files) {
    for (char ch : std::filesystem::relative(f, dir).generic_string()) {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
    h ^= file_hash(f);
    h *= 1099511628211ull;
  }
  return h;
}

/// Runs a shell command, returning its exit status.
inline int run(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace gcamo::testing
