#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <variant>

#include "gcamo/tensor.hpp"

// Tensor blob format: "GCMO", u32 LE version, u8 dtype code, u8 rank,
// rank x u64 LE extents, then row-major little-endian data.
namespace gcamo::tbf {

inline constexpr std::uint32_t kVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kU8 = 1, kF64 = 2 };

using AnyTensor = std::variant<Tensor<float>, Tensor<std::uint8_t>, Tensor<double>>;

void write(std::ostream& out, const Tensor<float>& t);
void write(std::ostream& out, const Tensor<std::uint8_t>& t);
void write(std::ostream& out, const Tensor<double>& t);
AnyTensor read(std::istream& in);

template <typename T>
void save(const std::filesystem::path& path, const Tensor<T>& t);
AnyTensor load(const std::filesystem::path& path);

/// Loads any stored dtype and converts to T.
template <typename T>
Tensor<T> load_as(const std::filesystem::path& path) {
  return std::visit([](const auto& t) { return t.template cast<T>(); }, load(path));
}

}  // namespace gcamo::tbf
