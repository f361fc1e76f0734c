#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nearchip/filter.hpp"

namespace nearchip {

/// MSB-first bit sink.
class BitWriter {
 public:
  void write(std::uint32_t code, int length);
  /// Zero-pads to the next byte boundary.
  void align();
  std::size_t bit_count() const noexcept { return bits_; }
  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
  std::vector<std::uint8_t> take() && { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t bits_ = 0;
};

/// Sequence of bits stored MSB-first in `bytes`; only the first `bit_count` are meaningful.
struct BitString {
  std::vector<std::uint8_t> bytes;
  std::size_t bit_count = 0;

  bool operator==(const BitString&) const = default;
};

/// Canonical prefix code over all 256 byte values. Shorter codes come first;
/// equal lengths are ordered by symbol value.
class HuffmanDictionary {
 public:
  static constexpr int kSymbols = 256;
  static constexpr int kMaxLength = 32;
  static constexpr char kMagic[4] = {'H', 'U', 'F', '1'};
  static constexpr std::size_t kFileSize = 4 + kSymbols;

  using Lengths = std::array<std::uint8_t, kSymbols>;
  using Histogram = std::array<std::uint64_t, kSymbols>;

  /// Every symbol at length 8: the identity code.
  static HuffmanDictionary uniform();
  /// Throws InvalidArgument unless the lengths form a complete prefix code.
  static HuffmanDictionary from_lengths(const Lengths& lengths);
  /// Huffman construction; every count must be positive. Ties are broken by
  /// symbol value. Code lengths are capped at kMaxLength.
  static HuffmanDictionary from_histogram(const Histogram& counts);

  std::uint8_t length(std::uint8_t symbol) const noexcept { return lengths_[symbol]; }
  std::uint32_t code(std::uint8_t symbol) const noexcept { return codes_[symbol]; }
  const Lengths& lengths() const noexcept { return lengths_; }

  /// Decodes one symbol starting at `bit` within the first `bit_limit` bits
  /// of `bytes`. Returns nullopt if the bits run out first.
  std::optional<std::uint8_t> decode_symbol(std::span<const std::uint8_t> bytes, std::size_t& bit,
                                            std::size_t bit_limit) const noexcept;

  std::vector<std::uint8_t> serialize() const;
  static HuffmanDictionary parse(std::span<const std::uint8_t> bytes);

  bool operator==(const HuffmanDictionary& other) const { return lengths_ == other.lengths_; }

 private:
  HuffmanDictionary() = default;
  void assign_canonical_codes();

  Lengths lengths_{};
  std::array<std::uint32_t, kSymbols> codes_{};
  std::array<std::uint16_t, kMaxLength + 1> count_per_length_{};
  std::array<std::uint8_t, kSymbols> sorted_symbols_{};
};

/// Code lengths of an optimal prefix code for `counts` (all positive), via a
/// deterministic priority-queue merge.
std::vector<int> huffman_code_lengths(std::span<const std::uint64_t> counts);

HuffmanDictionary::Histogram payload_histogram(std::span<const FilteredFrame> frames);

/// Dictionary from the byte histogram of the frames' payloads with add-one
/// smoothing. Throws InvalidArgument on an empty corpus.
HuffmanDictionary build_dictionary(std::span<const FilteredFrame> frames);

BitString huffman_encode(const FilteredFrame& frame, const HuffmanDictionary& dict);
void huffman_encode_bytes(std::span<const std::uint8_t> payload, const HuffmanDictionary& dict, BitWriter& out);

/// Decodes exactly payload_bytes(width, height) symbols. Throws ParseError if
/// the bits run out first.
FilteredFrame huffman_decode(const BitString& bits, const HuffmanDictionary& dict, int width, int height);

}  // namespace nearchip
