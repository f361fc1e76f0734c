#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nearchip/filter.hpp"

namespace nearchip {

// "FRM1" filtered-frame file, little-endian:
//   magic[4] width:u32 height:u32 count:u64
//   per frame: emit_time:u64 windows_aggregated:u32 payload[payload_bytes(width, height)]
struct FrameFile {
  int width = 0;
  int height = 0;
  std::vector<FilteredFrame> frames;
};

std::vector<std::uint8_t> encode_frame_file(int width, int height, std::span<const FilteredFrame> frames);
FrameFile decode_frame_file(std::span<const std::uint8_t> bytes);

void write_frame_file(const std::filesystem::path& path, int width, int height,
                      std::span<const FilteredFrame> frames);
FrameFile read_frame_file(const std::filesystem::path& path);

}  // namespace nearchip
