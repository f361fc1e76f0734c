#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace nearchip {

struct SensorGeometry {
  int width = 480;
  int height = 320;

  bool contains(int x, int y) const noexcept { return x >= 0 && x < width && y >= 0 && y < height; }
  /// Bits needed to hold one two-bit-per-pixel window (M0 or M1).
  std::uint64_t window_bits() const noexcept {
    return std::uint64_t{2} * static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height);
  }
  bool operator==(const SensorGeometry&) const = default;
};

/// Values double as the two-bit polarity code of the grouped wire format.
enum class Polarity : std::uint8_t { Neg = 0b01, Pos = 0b10 };

struct Event {
  std::uint64_t t = 0;  ///< microseconds
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  Polarity p = Polarity::Pos;

  bool operator==(const Event&) const = default;
};

struct EventStreamHeader {
  static constexpr char kMagic[4] = {'E', 'V', 'S', '1'};
  static constexpr std::uint8_t kVersion = 1;
  static constexpr std::size_t kSize = 20;
  static constexpr std::size_t kRecordSize = 12;

  std::uint8_t version = kVersion;
  SensorGeometry geometry;
  std::uint64_t record_count = 0;  ///< 0 = unknown / streaming
};

struct EventFile {
  SensorGeometry geometry;
  std::vector<Event> events;
};

// "EVS1" layout, little-endian:
//   magic[4] version:u8 reserved[3] width:u16 height:u16 count:u64
//   then per event: t:u32 x:u16 y:u16 p:u8 (1 = POS, 0 = NEG) pad[3]
std::vector<std::uint8_t> encode_event_file(const SensorGeometry& geometry,
                                            std::span<const Event> events);
EventFile decode_event_file(std::span<const std::uint8_t> bytes);

void write_event_file(const std::filesystem::path& path, const SensorGeometry& geometry,
                      std::span<const Event> events);
EventFile read_event_file(const std::filesystem::path& path);

/// Validates geometry (positive dims) and that each event lies inside it and
/// timestamps are non-decreasing. Throws InvalidArgument naming the index.
void validate_events(const SensorGeometry& geometry, std::span<const Event> events);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace nearchip
