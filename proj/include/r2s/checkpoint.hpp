#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "r2s/common.hpp"
#include "r2s/tensor.hpp"

namespace r2s {

// Checkpoint layout: magic "R2SNN01", then little-endian
//   u32 tensor count
//   per tensor: u16 name length, UTF-8 name, u8 rank, u32 dims..., raw f32 data
inline constexpr char kCheckpointMagic[] = "R2SNN01";

namespace detail {

template <typename I>
void write_le(std::ostream& os, I value) {
  unsigned char bytes[sizeof(I)];
  for (std::size_t i = 0; i < sizeof(I); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(bytes), sizeof(I));
}

template <typename I>
I read_le(std::istream& is) {
  unsigned char bytes[sizeof(I)];
  is.read(reinterpret_cast<char*>(bytes), sizeof(I));
  I value = 0;
  for (std::size_t i = 0; i < sizeof(I); ++i) value |= static_cast<I>(bytes[i]) << (8 * i);
  return value;
}

inline void write_f32(std::ostream& os, float value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, sizeof(bits));
  write_le<std::uint32_t>(os, bits);
}

inline float read_f32(std::istream& is) {
  std::uint32_t bits = read_le<std::uint32_t>(is);
  float value;
  std::memcpy(&value, &bits, sizeof(value));
  return value;
}

}  // namespace detail

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, 7);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    detail::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(tensor.rank()));
    for (int d = 0; d < tensor.rank(); ++d) detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensor.dim(d)));
    for (std::int64_t i = 0; i < tensor.size(); ++i) detail::write_f32(os, tensor[i]);
  }
  if (!os) throw IoError("checkpoint write failed: " + path);
}

inline NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[7];
  is.read(magic, 7);
  if (!is || std::memcmp(magic, kCheckpointMagic, 7) != 0) throw IoError("bad checkpoint magic: " + path);
  const std::uint32_t count = detail::read_le<std::uint32_t>(is);
  NamedTensors tensors;
  tensors.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint16_t name_len = detail::read_le<std::uint16_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const int rank = static_cast<unsigned char>(is.get());
    std::vector<int> shape(static_cast<std::size_t>(rank));
    for (int d = 0; d < rank; ++d) shape[static_cast<std::size_t>(d)] = static_cast<int>(detail::read_le<std::uint32_t>(is));
    Tensor tensor(shape);
    for (std::int64_t i = 0; i < tensor.size(); ++i) tensor[i] = detail::read_f32(is);
    if (!is) throw IoError("truncated checkpoint: " + path);
    tensors.emplace_back(std::move(name), std::move(tensor));
  }
  return tensors;
}

}  // namespace r2s
