#include "gcamo/tbf.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace gcamo::tbf {
namespace {

static_assert(std::endian::native == std::endian::little,
              "TBF I/O assumes a little-endian host");

constexpr std::array<char, 4> kMagic = {'G', 'C', 'M', 'O'};

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::kF32;
  else if constexpr (std::is_same_v<T, std::uint8_t>) return DType::kU8;
  else return DType::kF64;
}

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw IoError("TBF: truncated header");
  return v;
}

template <typename T>
void write_impl(std::ostream& out, const Tensor<T>& t) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_of<T>()));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (std::size_t e : t.shape()) put<std::uint64_t>(out, e);
  out.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!out) throw IoError("TBF: write failed");
}

template <typename T>
Tensor<T> read_payload(std::istream& in, Shape shape) {
  std::vector<T> data(shape_product(shape));
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(T)));
  if (!in) throw IoError("TBF: truncated payload");
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace

void write(std::ostream& out, const Tensor<float>& t) { write_impl(out, t); }
void write(std::ostream& out, const Tensor<std::uint8_t>& t) { write_impl(out, t); }
void write(std::ostream& out, const Tensor<double>& t) { write_impl(out, t); }

AnyTensor read(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IoError("TBF: bad magic");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) {
    throw IoError("TBF: unsupported version " + std::to_string(version));
  }
  const auto code = get<std::uint8_t>(in);
  const auto rank = get<std::uint8_t>(in);
  if (rank == 0) throw IoError("TBF: rank must be >= 1");
  Shape shape(rank);
  for (auto& e : shape) {
    e = static_cast<std::size_t>(get<std::uint64_t>(in));
    if (e == 0) throw IoError("TBF: zero extent");
  }
  switch (static_cast<DType>(code)) {
    case DType::kF32: return read_payload<float>(in, std::move(shape));
    case DType::kU8: return read_payload<std::uint8_t>(in, std::move(shape));
    case DType::kF64: return read_payload<double>(in, std::move(shape));
  }
  throw IoError("TBF: unknown dtype code " + std::to_string(code));
}

template <typename T>
void save(const std::filesystem::path& path, const Tensor<T>& t) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write(out, t);
}

AnyTensor load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

template void save(const std::filesystem::path&, const Tensor<float>&);
template void save(const std::filesystem::path&, const Tensor<std::uint8_t>&);
template void save(const std::filesystem::path&, const Tensor<double>&);

}  // namespace gcamo::tbf
