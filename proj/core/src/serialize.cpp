#include "vmamba/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace vmamba {

namespace {

constexpr std::byte kMagic[4] = {std::byte{'V'}, std::byte{'M'}, std::byte{'T'}, std::byte{'B'}};

template <typename U>
void put_le(std::vector<std::byte>& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::byte>((value >> (8 * i)) & 0xFFu));
  }
}

template <typename U>
U get_le(std::span<const std::byte> bytes, std::size_t& offset) {
  if (offset + sizeof(U) > bytes.size()) throw FormatError("VMTB stream truncated in header");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(std::to_integer<std::uint8_t>(bytes[offset + i])) << (8 * i);
  }
  offset += sizeof(U);
  return value;
}

template <typename T>
using UintOf = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

template <typename T>
BasicTensor<T> read_payload(std::span<const std::byte> bytes, std::size_t offset, Shape shape) {
  const std::size_t n = shape_numel(shape);
  if (bytes.size() - offset < n * sizeof(T)) throw FormatError("VMTB payload truncated");
  if (bytes.size() - offset > n * sizeof(T)) throw FormatError("VMTB stream has trailing bytes");
  std::vector<T> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = std::bit_cast<T>(get_le<UintOf<T>>(bytes, offset));
  }
  return BasicTensor<T>(std::move(shape), std::move(data));
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  std::memcpy(bytes.data(), raw.data(), raw.size());
  return bytes;
}

}  // namespace

std::size_t vmtb_header_size(std::size_t rank) { return 4 + 4 + 1 + 4 + 8 * rank; }

template <typename T>
std::vector<std::byte> serialize(const BasicTensor<T>& t) {
  std::vector<std::byte> out;
  out.reserve(vmtb_header_size(t.rank()) + t.size() * sizeof(T));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kVmtbVersion);
  out.push_back(static_cast<std::byte>(BasicTensor<T>::dtype()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put_le<std::uint64_t>(out, e);
  for (auto v : t.data()) put_le<UintOf<T>>(out, std::bit_cast<UintOf<T>>(v));
  return out;
}

AnyTensor deserialize(std::span<const std::byte> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad VMTB magic");
  }
  std::size_t offset = 4;
  const auto version = get_le<std::uint32_t>(bytes, offset);
  if (version != kVmtbVersion) {
    throw FormatError("unknown VMTB version " + std::to_string(version));
  }
  if (offset >= bytes.size()) throw FormatError("VMTB stream truncated in header");
  const auto dtype = std::to_integer<std::uint8_t>(bytes[offset++]);
  const auto rank = get_le<std::uint32_t>(bytes, offset);
  if (rank == 0) throw FormatError("VMTB rank must be at least 1");
  Shape shape(rank);
  for (auto& e : shape) {
    const auto extent = get_le<std::uint64_t>(bytes, offset);
    if (extent == 0) throw FormatError("VMTB extent of zero");
    e = static_cast<std::size_t>(extent);
  }
  switch (dtype) {
    case static_cast<std::uint8_t>(DType::kF32):
      return read_payload<float>(bytes, offset, std::move(shape));
    case static_cast<std::uint8_t>(DType::kF64):
      return read_payload<double>(bytes, offset, std::move(shape));
    default:
      throw FormatError("unknown VMTB dtype " + std::to_string(dtype));
  }
}

template <typename T>
BasicTensor<T> deserialize_as(std::span<const std::byte> bytes) {
  AnyTensor any = deserialize(bytes);
  if (auto* t = std::get_if<BasicTensor<T>>(&any)) return std::move(*t);
  throw FormatError("VMTB dtype does not match the requested tensor type");
}

template <typename T>
void save_tensor(const std::filesystem::path& path, const BasicTensor<T>& t) {
  const auto bytes = serialize(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

AnyTensor load_tensor(const std::filesystem::path& path) { return deserialize(read_file(path)); }

template <typename T>
BasicTensor<T> load_tensor_as(const std::filesystem::path& path) {
  return deserialize_as<T>(read_file(path));
}

template <typename T>
BasicTensor<T> load_tensor_converting(const std::filesystem::path& path) {
  return std::visit([](auto&& t) { return t.template cast<T>(); }, load_tensor(path));
}

template std::vector<std::byte> serialize(const BasicTensor<float>&);
template std::vector<std::byte> serialize(const BasicTensor<double>&);
template BasicTensor<float> deserialize_as(std::span<const std::byte>);
template BasicTensor<double> deserialize_as(std::span<const std::byte>);
template void save_tensor(const std::filesystem::path&, const BasicTensor<float>&);
template void save_tensor(const std::filesystem::path&, const BasicTensor<double>&);
template BasicTensor<float> load_tensor_as(const std::filesystem::path&);
template BasicTensor<double> load_tensor_as(const std::filesystem::path&);
template BasicTensor<float> load_tensor_converting(const std::filesystem::path&);
template BasicTensor<double> load_tensor_converting(const std::filesystem::path&);

}  // namespace vmamba
