#pragma once

#include <cstdint>
#include <span>

namespace nearchip {

/// Fletcher-32: 16-bit little-endian words (odd tail zero-padded), both sums
/// modulo 65535, result = sum2 << 16 | sum1.
std::uint32_t fletcher32(std::span<const std::uint8_t> data) noexcept;

}  // namespace nearchip
