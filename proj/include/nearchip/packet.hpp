#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nearchip/filter.hpp"
#include "nearchip/huffman.hpp"

namespace nearchip {

// Wire packet, byte aligned:
//   preamble:u32 BE | Huffman payload (zero-padded to a byte) | fletcher32(padded payload):u32 BE
// The payload carries a fixed number of symbols, so there is no length field.
inline constexpr std::uint32_t kPreamble = 0x55AAC0DEu;
inline constexpr std::size_t kPacketOverheadBits = 64;

std::vector<std::uint8_t> frame_packet(const FilteredFrame& frame, const HuffmanDictionary& dict);

struct DeframerStats {
  std::uint64_t packets_ok = 0;
  std::uint64_t checksum_failures = 0;
  std::uint64_t resyncs = 0;
  std::uint64_t bytes_discarded = 0;

  bool operator==(const DeframerStats&) const = default;
};

/// Byte-stream deframer. Scans for the preamble, decodes a fixed-size
/// payload and verifies the checksum; on mismatch it drops the packet and
/// resumes the scan one byte past the rejected preamble.
class Deframer {
 public:
  Deframer(HuffmanDictionary dict, int width, int height);

  void feed(std::span<const std::uint8_t> bytes, std::vector<FilteredFrame>& out);
  /// End of stream: an incomplete trailing packet is discarded.
  void finish();

  const DeframerStats& stats() const noexcept { return stats_; }

 private:
  enum class Step { Packet, NeedMore };
  Step try_packet(std::size_t at, std::vector<FilteredFrame>& out);
  void discard_to(std::size_t at);

  HuffmanDictionary dict_;
  int width_;
  int height_;
  std::size_t symbols_;
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  bool discarding_ = false;
  DeframerStats stats_;
  std::vector<std::uint8_t> scratch_;
};

std::vector<FilteredFrame> deframe_stream(std::span<const std::uint8_t> bytes, const HuffmanDictionary& dict,
                                          int width, int height, DeframerStats* stats = nullptr);

}  // namespace nearchip
