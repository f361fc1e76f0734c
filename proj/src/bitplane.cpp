#include "nearchip/bitplane.hpp"

#include <algorithm>
#include <bit>

#include "nearchip/error.hpp"

namespace nearchip {

BitPlane::BitPlane(int width, int height)
    : width_(width), height_(height), words_per_row_((width + 63) / 64) {
  if (width <= 0 || height <= 0) throw InvalidArgument("BitPlane dimensions must be positive");
  words_.assign(static_cast<std::size_t>(words_per_row_) * height, 0);
}

void BitPlane::assign(int x, int y, bool value) noexcept {
  auto& w = words_[index(y) + (x >> 6)];
  const std::uint64_t mask = std::uint64_t{1} << (x & 63);
  w = value ? (w | mask) : (w & ~mask);
}

void BitPlane::clear() noexcept { std::fill(words_.begin(), words_.end(), 0); }

bool BitPlane::any() const noexcept {
  return std::any_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w != 0; });
}

std::size_t BitPlane::count() const noexcept {
  std::size_t n = 0;
  for (auto w : words_) n += std::popcount(w);
  return n;
}

BitPlane& BitPlane::operator|=(const BitPlane& other) {
  if (other.width_ != width_ || other.height_ != height_)
    throw InvalidArgument("BitPlane size mismatch");
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
  return *this;
}

BitPlane& BitPlane::operator&=(const BitPlane& other) {
  if (other.width_ != width_ || other.height_ != height_)
    throw InvalidArgument("BitPlane size mismatch");
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= other.words_[i];
  return *this;
}

BitPlane operator|(BitPlane a, const BitPlane& b) { return a |= b; }
BitPlane operator&(BitPlane a, const BitPlane& b) { return a &= b; }

bool any_in_range(std::span<const std::uint64_t> row, int lo, int hi) noexcept {
  while (lo < hi) {
    const int word = lo >> 6;
    const int bit = lo & 63;
    const int span = std::min(64 - bit, hi - lo);
    const std::uint64_t mask = (span == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << span) - 1))
                               << bit;
    if (row[word] & mask) return true;
    lo += span;
  }
  return false;
}

}  // namespace nearchip
