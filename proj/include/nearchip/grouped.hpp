#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nearchip/events.hpp"

namespace nearchip {

// Grouped address-event word, bit 31 first:
//   header: 1 | y:9 | delta_t_us:22     (delta from the previous header)
//   event:  0 | x:9 | polarity:2 | reserved:20
// Polarity code 01 = NEG, 10 = POS; 00 and 11 are malformed.
namespace grouped {

inline constexpr std::uint32_t kHeaderFlag = 0x8000'0000u;
inline constexpr int kCoordBits = 9;
inline constexpr int kDeltaBits = 22;
inline constexpr std::uint32_t kMaxDelta = (1u << kDeltaBits) - 1;
inline constexpr int kMaxCoord = (1 << kCoordBits) - 1;

constexpr std::uint32_t header_word(std::uint32_t y, std::uint32_t delta) {
  return kHeaderFlag | (y << kDeltaBits) | (delta & kMaxDelta);
}
constexpr std::uint32_t event_word(std::uint32_t x, Polarity p) {
  return (x << kDeltaBits) | (static_cast<std::uint32_t>(p) << 20);
}
constexpr bool is_header(std::uint32_t w) { return (w & kHeaderFlag) != 0; }
constexpr std::uint32_t coord(std::uint32_t w) { return (w >> kDeltaBits) & kMaxCoord; }
constexpr std::uint32_t delta(std::uint32_t w) { return w & kMaxDelta; }
constexpr std::uint32_t polarity_code(std::uint32_t w) { return (w >> 20) & 0b11; }

}  // namespace grouped

/// One header per (t, y) group followed by its event words. Input must be
/// sorted by (t, y); deltas too large for one header are split across extra
/// header words.
std::vector<std::uint32_t> encode_grouped(std::span<const Event> events);

/// Number of words encode_grouped would produce. Accepts input sorted by t
/// only (groups are counted per timestamp).
std::uint64_t grouped_word_count(std::span<const Event> events);

struct ParserStats {
  std::uint64_t words_received = 0;
  std::uint64_t overflow_dropped = 0;
  std::uint64_t discarded_before_sync = 0;
  std::uint64_t malformed_words = 0;
  std::uint64_t events_decoded = 0;

  bool operator==(const ParserStats&) const = default;
};

/// Input FIFO plus word decoder. The producer side never blocks: words that
/// arrive while the FIFO is full are dropped and counted.
class GroupedParser {
 public:
  static constexpr std::size_t kDefaultFifoCapacity = 256;

  explicit GroupedParser(std::size_t fifo_capacity = kDefaultFifoCapacity);

  /// Returns false when the word was dropped because the FIFO is full.
  bool push(std::uint32_t word);

  /// Consumes up to `max_words` queued words, appending decoded events.
  std::size_t drain(std::vector<Event>& out, std::size_t max_words = SIZE_MAX);

  std::size_t queued() const noexcept { return size_; }
  std::size_t capacity() const noexcept { return fifo_.size(); }
  const ParserStats& stats() const noexcept { return stats_; }

 private:
  void decode(std::uint32_t word, std::vector<Event>& out);

  std::vector<std::uint32_t> fifo_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  bool synced_ = false;
  std::uint64_t t_ = 0;
  std::uint16_t y_ = 0;
  ParserStats stats_;
};

/// Unstalled consumer: every word is drained as soon as it is pushed.
std::vector<Event> parse_grouped(std::span<const std::uint32_t> words,
                                 std::size_t fifo_capacity = GroupedParser::kDefaultFifoCapacity,
                                 ParserStats* stats = nullptr);

}  // namespace nearchip
