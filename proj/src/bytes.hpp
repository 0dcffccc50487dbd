#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <type_traits>
#include <vector>

#include "unir/error.hpp"

namespace unir::detail {

// Little-endian encoding helpers for the binary file formats.
class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bytes_.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
  void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
  void put_f64(double f) { put(std::bit_cast<std::uint64_t>(f)); }
  void put_bytes(const void* p, std::size_t n) {
    auto b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw Error(ErrorCode::ChecksumMismatch, "file truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace unir::detail
