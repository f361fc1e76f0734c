#include "nearchip/fletcher.hpp"

#include <algorithm>

namespace nearchip {

std::uint32_t fletcher32(std::span<const std::uint8_t> data) noexcept {
  std::uint32_t sum1 = 0;
  std::uint32_t sum2 = 0;
  std::size_t i = 0;
  const std::size_t n = data.size();
  while (i < n) {
    // 359 words is the largest block for which sum2 cannot overflow 32 bits.
    const std::size_t block_end = std::min(n, i + 2 * 359);
    for (; i < block_end; i += 2) {
      const std::uint32_t lo = data[i];
      const std::uint32_t hi = i + 1 < n ? data[i + 1] : 0;
      sum1 += lo | (hi << 8);
      sum2 += sum1;
    }
    sum1 %= 65535;
    sum2 %= 65535;
  }
  return (sum2 << 16) | sum1;
}

}  // namespace nearchip
