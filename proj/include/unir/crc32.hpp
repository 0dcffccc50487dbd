#pragma once

#include <cstdint>
#include <span>

namespace unir {

// IEEE 802.3 CRC-32 (zlib polynomial).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace unir
