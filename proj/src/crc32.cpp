#include "unir/crc32.hpp"

#include <zlib.h>

namespace unir {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, bytes.size() - off);
    crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace unir
