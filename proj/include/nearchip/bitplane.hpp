#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace nearchip {

/// Dense binary image, row-major, one bit per pixel. Each row is padded to a
/// whole number of 64-bit words; bit `x % 64` of word `x / 64` holds column x.
/// Padding bits are always zero.
class BitPlane {
 public:
  BitPlane() = default;
  BitPlane(int width, int height);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int words_per_row() const noexcept { return words_per_row_; }

  bool get(int x, int y) const noexcept {
    return (words_[index(y) + (x >> 6)] >> (x & 63)) & 1u;
  }
  void set(int x, int y) noexcept { words_[index(y) + (x >> 6)] |= std::uint64_t{1} << (x & 63); }
  void assign(int x, int y, bool value) noexcept;

  std::span<std::uint64_t> row(int y) noexcept {
    return {words_.data() + index(y), static_cast<std::size_t>(words_per_row_)};
  }
  std::span<const std::uint64_t> row(int y) const noexcept {
    return {words_.data() + index(y), static_cast<std::size_t>(words_per_row_)};
  }

  void clear() noexcept;
  bool any() const noexcept;
  std::size_t count() const noexcept;

  BitPlane& operator|=(const BitPlane& other);
  BitPlane& operator&=(const BitPlane& other);

  bool operator==(const BitPlane& other) const = default;

 private:
  std::size_t index(int y) const noexcept { return static_cast<std::size_t>(y) * words_per_row_; }

  int width_ = 0;
  int height_ = 0;
  int words_per_row_ = 0;
  std::vector<std::uint64_t> words_;
};

BitPlane operator|(BitPlane a, const BitPlane& b);
BitPlane operator&(BitPlane a, const BitPlane& b);

/// True if any bit in columns [lo, hi) of a packed row is set.
bool any_in_range(std::span<const std::uint64_t> row, int lo, int hi) noexcept;

}  // namespace nearchip
