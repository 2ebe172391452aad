#pragma once

// VMTB binary tensor format, little-endian regardless of host:
//
//   offset  size       field
//   0       4          magic "VMTB"
//   4       4          u32 version (1)
//   8       1          u8 dtype (0 = f32, 1 = f64)
//   9       4          u32 rank (>= 1)
//   13      8 * rank   u64 extents
//   ...                payload, row-major scalars

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "vmamba/tensor.hpp"

namespace vmamba {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kVmtbVersion = 1;

using AnyTensor = std::variant<Tensor, Tensor64>;

std::size_t vmtb_header_size(std::size_t rank);

template <typename T>
std::vector<std::byte> serialize(const BasicTensor<T>& t);

AnyTensor deserialize(std::span<const std::byte> bytes);

/// Deserializes and requires the stored dtype to match T.
template <typename T>
BasicTensor<T> deserialize_as(std::span<const std::byte> bytes);

template <typename T>
void save_tensor(const std::filesystem::path& path, const BasicTensor<T>& t);

AnyTensor load_tensor(const std::filesystem::path& path);

template <typename T>
BasicTensor<T> load_tensor_as(const std::filesystem::path& path);

/// Loads a tensor of either dtype and converts it to T.
template <typename T>
BasicTensor<T> load_tensor_converting(const std::filesystem::path& path);

}  // namespace vmamba
