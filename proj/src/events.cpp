#include "nearchip/events.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "nearchip/error.hpp"

namespace nearchip {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
  return v;
}

}  // namespace

void validate_events(const SensorGeometry& geometry, std::span<const Event> events) {
  if (geometry.width <= 0 || geometry.height <= 0)
    throw InvalidArgument("sensor geometry must have positive dimensions");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (!geometry.contains(e.x, e.y))
      throw InvalidArgument("event " + std::to_string(i) + " at (" + std::to_string(e.x) + ", " +
                            std::to_string(e.y) + ") lies outside the sensor");
    if (e.p != Polarity::Pos && e.p != Polarity::Neg)
      throw InvalidArgument("event " + std::to_string(i) + " has an invalid polarity");
    if (i > 0 && e.t < events[i - 1].t)
      throw InvalidArgument("event " + std::to_string(i) + " has a decreasing timestamp");
  }
}

std::vector<std::uint8_t> encode_event_file(const SensorGeometry& geometry,
                                            std::span<const Event> events) {
  validate_events(geometry, events);
  if (geometry.width > 0xFFFF || geometry.height > 0xFFFF)
    throw InvalidArgument("sensor geometry does not fit the file header");
  if (!events.empty() && events.back().t > std::numeric_limits<std::uint32_t>::max())
    throw InvalidArgument("timestamps beyond 2^32 us must be split into separate files");

  std::vector<std::uint8_t> out;
  out.reserve(EventStreamHeader::kSize + events.size() * EventStreamHeader::kRecordSize);
  out.insert(out.end(), std::begin(EventStreamHeader::kMagic), std::end(EventStreamHeader::kMagic));
  out.push_back(EventStreamHeader::kVersion);
  out.insert(out.end(), 3, 0);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(geometry.width));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(geometry.height));
  put_le<std::uint64_t>(out, events.size());
  for (const auto& e : events) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.t));
    put_le<std::uint16_t>(out, e.x);
    put_le<std::uint16_t>(out, e.y);
    out.push_back(e.p == Polarity::Pos ? 1 : 0);
    out.insert(out.end(), 3, 0);
  }
  return out;
}

EventFile decode_event_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), EventStreamHeader::kMagic, 4) != 0)
    throw ParseError("bad magic, expected \"EVS1\"", 0);
  if (bytes.size() < EventStreamHeader::kSize) throw ParseError("truncated header", bytes.size());
  const std::uint8_t* p = bytes.data();
  if (p[4] != EventStreamHeader::kVersion)
    throw ParseError("unsupported version " + std::to_string(p[4]), 4);

  EventFile file;
  file.geometry.width = get_le<std::uint16_t>(p + 8);
  file.geometry.height = get_le<std::uint16_t>(p + 10);
  if (file.geometry.width == 0 || file.geometry.height == 0)
    throw ParseError("zero sensor dimension", 8);
  const auto declared = get_le<std::uint64_t>(p + 12);

  const std::size_t body = bytes.size() - EventStreamHeader::kSize;
  const std::size_t complete = body / EventStreamHeader::kRecordSize;
  const std::uint64_t expected = declared == 0 ? complete : declared;
  if (declared == 0 && body % EventStreamHeader::kRecordSize != 0)
    throw ParseError("truncated record " + std::to_string(complete), bytes.size());
  if (expected > complete)
    throw ParseError("truncated record " + std::to_string(complete), bytes.size());

  file.events.reserve(expected);
  for (std::uint64_t i = 0; i < expected; ++i) {
    const std::size_t off = EventStreamHeader::kSize + i * EventStreamHeader::kRecordSize;
    const std::uint8_t* r = p + off;
    Event e;
    e.t = get_le<std::uint32_t>(r);
    e.x = get_le<std::uint16_t>(r + 4);
    e.y = get_le<std::uint16_t>(r + 6);
    if (r[8] > 1) throw ParseError("record " + std::to_string(i) + " has invalid polarity", off + 8);
    e.p = r[8] == 1 ? Polarity::Pos : Polarity::Neg;
    if (!file.geometry.contains(e.x, e.y))
      throw ParseError("record " + std::to_string(i) + " lies outside the sensor", off + 4);
    file.events.push_back(e);
  }
  return file;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_event_file(const std::filesystem::path& path, const SensorGeometry& geometry,
                      std::span<const Event> events) {
  write_file_bytes(path, encode_event_file(geometry, events));
}

EventFile read_event_file(const std::filesystem::path& path) {
  return decode_event_file(read_file_bytes(path));
}

}  // namespace nearchip
