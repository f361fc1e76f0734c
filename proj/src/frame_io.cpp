#include "nearchip/frame_io.hpp"

#include <cstring>
#include <string>

#include "nearchip/error.hpp"
#include "nearchip/events.hpp"

namespace nearchip {

namespace {

constexpr char kMagic[4] = {'F', 'R', 'M', '1'};
constexpr std::size_t kHeaderSize = 20;

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

std::vector<std::uint8_t> encode_frame_file(int width, int height, std::span<const FilteredFrame> frames) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(width));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(height));
  put_le<std::uint64_t>(out, frames.size());
  for (const auto& f : frames) {
    if (f.width() != width || f.height() != height)
      throw DimensionMismatch("frame dimensions differ from the file header");
    put_le<std::uint64_t>(out, f.emit_time);
    put_le<std::uint32_t>(out, f.windows_aggregated);
    const auto payload = serialize_payload(f);
    out.insert(out.end(), payload.begin(), payload.end());
  }
  return out;
}

FrameFile decode_frame_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ParseError("bad magic, expected \"FRM1\"", 0);
  if (bytes.size() < kHeaderSize) throw ParseError("truncated header", bytes.size());
  FrameFile file;
  file.width = static_cast<int>(get_le<std::uint32_t>(bytes.data() + 4));
  file.height = static_cast<int>(get_le<std::uint32_t>(bytes.data() + 8));
  if (file.width <= 0 || file.height <= 0 || file.width > 1 << 16 || file.height > 1 << 16)
    throw ParseError("invalid frame dimensions", 4);
  const auto count = get_le<std::uint64_t>(bytes.data() + 12);
  const std::size_t record = 12 + payload_bytes(file.width, file.height);
  if ((bytes.size() - kHeaderSize) / record < count)
    throw ParseError("truncated frame " + std::to_string((bytes.size() - kHeaderSize) / record), bytes.size());
  file.frames.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint8_t* p = bytes.data() + kHeaderSize + i * record;
    auto frame = deserialize_payload({p + 12, record - 12}, file.width, file.height);
    frame.emit_time = get_le<std::uint64_t>(p);
    frame.windows_aggregated = get_le<std::uint32_t>(p + 8);
    file.frames.push_back(std::move(frame));
  }
  return file;
}

void write_frame_file(const std::filesystem::path& path, int width, int height,
                      std::span<const FilteredFrame> frames) {
  write_file_bytes(path, encode_frame_file(width, height, frames));
}

FrameFile read_frame_file(const std::filesystem::path& path) { return decode_frame_file(read_file_bytes(path)); }

}  // namespace nearchip
