#pragma once

// OTEN binary tensor container:
//   "OTEN" | version u8 (=1) | dtype u8 | ndim u8 | pad u8 (=0)
//   dims: ndim x u64 little-endian | payload: row-major, little-endian.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "loc/error.hpp"

namespace loc::io {

enum class DType : std::uint8_t { F32 = 1, F64 = 2, U16 = 3, U8 = 4 };

inline std::size_t element_size(DType t) {
  switch (t) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U16: return 2;
    case DType::U8: return 1;
  }
  throw ValidationError("OTEN: unknown dtype");
}

template <typename T> constexpr DType dtype_of();
template <> constexpr DType dtype_of<float>() { return DType::F32; }
template <> constexpr DType dtype_of<double>() { return DType::F64; }
template <> constexpr DType dtype_of<std::uint16_t>() { return DType::U16; }
template <> constexpr DType dtype_of<std::uint8_t>() { return DType::U8; }

namespace detail {

inline void swap_bytes_inplace(std::uint8_t* p, std::size_t n, std::size_t width) {
  if constexpr (std::endian::native == std::endian::little) {
    (void)p, (void)n, (void)width;
  } else {
    for (std::size_t i = 0; i < n; i += width) std::reverse(p + i, p + i + width);
  }
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

inline std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return v;
}

}  // namespace detail

/// Type-erased tensor; payload bytes are kept in little-endian order.
struct OtenTensor {
  DType dtype = DType::F32;
  std::vector<std::uint64_t> dims;
  std::vector<std::uint8_t> payload;

  std::uint64_t element_count() const {
    return std::accumulate(dims.begin(), dims.end(), std::uint64_t{1}, std::multiplies<>());
  }

  template <typename T>
  static OtenTensor from(std::span<const T> values, std::vector<std::uint64_t> dims) {
    OtenTensor t;
    t.dtype = dtype_of<T>();
    t.dims = std::move(dims);
    require(t.element_count() == values.size(), "OTEN: dims do not match value count");
    t.payload.resize(values.size() * sizeof(T));
    if (!values.empty()) std::memcpy(t.payload.data(), values.data(), t.payload.size());
    detail::swap_bytes_inplace(t.payload.data(), t.payload.size(), sizeof(T));
    return t;
  }

  template <typename T>
  static OtenTensor from(const std::vector<T>& values, std::vector<std::uint64_t> dims) {
    return from(std::span<const T>(values), std::move(dims));
  }

  /// Values as T; dtype must match exactly.
  template <typename T>
  std::vector<T> values() const {
    require(dtype == dtype_of<T>(), "OTEN: dtype mismatch on read");
    std::vector<std::uint8_t> bytes = payload;
    detail::swap_bytes_inplace(bytes.data(), bytes.size(), sizeof(T));
    std::vector<T> out(bytes.size() / sizeof(T));
    if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
  }

  /// Numeric values widened to double regardless of stored dtype.
  std::vector<double> as_double() const {
    switch (dtype) {
      case DType::F32: { auto v = values<float>(); return {v.begin(), v.end()}; }
      case DType::F64: return values<double>();
      case DType::U16: { auto v = values<std::uint16_t>(); return {v.begin(), v.end()}; }
      case DType::U8: { auto v = values<std::uint8_t>(); return {v.begin(), v.end()}; }
    }
    throw ValidationError("OTEN: unknown dtype");
  }

  friend bool operator==(const OtenTensor&, const OtenTensor&) = default;
};

inline std::vector<std::uint8_t> encode(const OtenTensor& t) {
  require(t.dims.size() <= 255, "OTEN: too many dimensions");
  require(t.payload.size() == t.element_count() * element_size(t.dtype),
          "OTEN: payload length does not match dims");
  std::vector<std::uint8_t> out = {'O', 'T', 'E', 'N', 1, static_cast<std::uint8_t>(t.dtype),
                                   static_cast<std::uint8_t>(t.dims.size()), 0};
  for (auto d : t.dims) detail::put_u64(out, d);
  out.insert(out.end(), t.payload.begin(), t.payload.end());
  return out;
}

inline OtenTensor decode(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 8, "OTEN: truncated header");
  require(std::memcmp(bytes.data(), "OTEN", 4) == 0, "OTEN: bad magic");
  require(bytes[4] == 1, "OTEN: unsupported version");
  const auto code = bytes[5];
  require(code >= 1 && code <= 4, "OTEN: unknown dtype");
  require(bytes[7] == 0, "OTEN: nonzero pad byte");
  OtenTensor t;
  t.dtype = static_cast<DType>(code);
  const std::size_t ndim = bytes[6];
  const std::size_t header = 8 + 8 * ndim;
  require(bytes.size() >= header, "OTEN: truncated dims");
  for (std::size_t d = 0; d < ndim; ++d) t.dims.push_back(detail::get_u64(bytes.data() + 8 + 8 * d));
  require(bytes.size() - header == t.element_count() * element_size(t.dtype),
          "OTEN: payload length does not match dims");
  t.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return t;
}

inline void write_oten(const std::filesystem::path& path, const OtenTensor& t) {
  const auto bytes = encode(t);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ValidationError("OTEN: cannot open for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw ValidationError("OTEN: write failed: " + path.string());
}

inline OtenTensor read_oten(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("OTEN: cannot open: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace loc::io
