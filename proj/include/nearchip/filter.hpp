#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nearchip/bitplane.hpp"
#include "nearchip/events.hpp"

namespace nearchip {

/// What the aggregation trigger counts at the end of each window.
enum class TriggerCount {
  FullResolution,  ///< active pixels of the aggregated h and v planes, summed
  PooledBlocks,    ///< active blocks of the pooled h and v planes, summed
};

struct FilterConfig {
  std::uint64_t tau_us = 3000;
  std::uint64_t agg_event_threshold = 1000;
  std::uint32_t agg_window_limit = 5;
  int pool = 8;
  std::uint64_t refractory_us = 0;  ///< 0 disables; 100000 for low-rate links
  bool coincidence = true;
  bool aggregation = true;
  TriggerCount trigger = TriggerCount::FullResolution;

  /// Throws InvalidArgument if any field is out of range for `geometry`.
  void validate(const SensorGeometry& geometry) const;
};

/// Per-window pixel activity, two bits per pixel (bit0 = NEG seen, bit1 = POS seen).
class WindowBitmap {
 public:
  WindowBitmap() = default;
  explicit WindowBitmap(const SensorGeometry& geometry);

  const SensorGeometry& geometry() const noexcept { return geometry_; }

  void add(const Event& e) noexcept {
    (e.p == Polarity::Pos ? pos_ : neg_).set(e.x, e.y);
  }
  std::uint8_t cell(int x, int y) const noexcept {
    return static_cast<std::uint8_t>((pos_.get(x, y) ? 0b10 : 0) | (neg_.get(x, y) ? 0b01 : 0));
  }
  void clear() noexcept {
    pos_.clear();
    neg_.clear();
  }
  bool empty() const noexcept { return !pos_.any() && !neg_.any(); }

  const BitPlane& pos() const noexcept { return pos_; }
  const BitPlane& neg() const noexcept { return neg_; }

  bool operator==(const WindowBitmap&) const = default;

 private:
  SensorGeometry geometry_;
  BitPlane pos_;
  BitPlane neg_;
};

struct ChannelFrames {
  BitPlane h;  ///< (x, y) paired with (x + 1, y)
  BitPlane v;  ///< (x, y) paired with (x, y + 1)
  std::uint64_t window_index = 0;
};

struct FilteredFrame {
  BitPlane h_pooled;
  BitPlane v_pooled;
  std::uint64_t emit_time = 0;
  std::uint32_t windows_aggregated = 0;

  int width() const noexcept { return h_pooled.width(); }
  int height() const noexcept { return h_pooled.height(); }
  std::size_t payload_bits() const noexcept {
    return 2 * static_cast<std::size_t>(width()) * static_cast<std::size_t>(height());
  }
  bool same_payload(const FilteredFrame& other) const {
    return h_pooled == other.h_pooled && v_pooled == other.v_pooled;
  }
  bool operator==(const FilteredFrame&) const = default;
};

/// Payload serialization: h plane row-major, then v plane row-major, packed
/// MSB-first, zero-padded to a whole byte.
std::size_t payload_bytes(int width, int height) noexcept;
std::vector<std::uint8_t> serialize_payload(const FilteredFrame& frame);
FilteredFrame deserialize_payload(std::span<const std::uint8_t> bytes, int width, int height);

WindowBitmap accumulate_window(std::span<const Event> events, const SensorGeometry& geometry);

ChannelFrames coincidence_detect(const WindowBitmap& window);

/// Channels used when coincidence detection is disabled: both carry the
/// polarity-agnostic activity plane.
ChannelFrames activity_channels(const WindowBitmap& window);

BitPlane max_pool(const BitPlane& plane, int pool);

struct AggregationState {
  BitPlane h_agg;
  BitPlane v_agg;
  std::uint32_t windows_aggregated = 0;
  std::uint64_t aborted = 0;  ///< times the window limit cleared the buffer

  bool empty() const noexcept { return windows_aggregated == 0; }
  void clear() noexcept;
};

struct AggregatedPlanes {
  BitPlane h;
  BitPlane v;
  std::uint32_t windows_aggregated = 0;
};

std::uint64_t trigger_count(const BitPlane& h, const BitPlane& v, const FilterConfig& config);

/// One window of temporal OR-aggregation. Returns the aggregated planes once
/// the trigger count reaches the threshold; clears without emitting once the
/// window limit is reached.
std::optional<AggregatedPlanes> aggregate_step(AggregationState& state, const ChannelFrames& frames,
                                               const FilterConfig& config);

struct FilterStats {
  std::uint64_t events = 0;
  std::uint64_t windows = 0;
  std::uint64_t frames_emitted = 0;
  std::uint64_t refractory_suppressed = 0;
  std::uint64_t aggregation_aborted = 0;
};

/// Streaming filter. Two window banks alternate: one collects the current
/// window while the other is evaluated and cleared.
class FilterPipeline {
 public:
  FilterPipeline(const FilterConfig& config, const SensorGeometry& geometry);

  /// Events must arrive with non-decreasing t.
  void push(const Event& e, std::vector<FilteredFrame>& out);
  void push(std::span<const Event> events, std::vector<FilteredFrame>& out);
  /// Closes the window in progress.
  void finish(std::vector<FilteredFrame>& out);

  const FilterStats& stats() const noexcept { return stats_; }
  const FilterConfig& config() const noexcept { return config_; }

 private:
  void close_window(std::vector<FilteredFrame>& out);
  void skip_empty_windows(std::uint64_t count, std::vector<FilteredFrame>& out);
  void process(const ChannelFrames& channels, std::uint64_t window, std::vector<FilteredFrame>& out);
  void emit(const BitPlane& h, const BitPlane& v, std::uint32_t windows, std::uint64_t window,
            std::vector<FilteredFrame>& out);

  FilterConfig config_;
  SensorGeometry geometry_;
  std::array<WindowBitmap, 2> banks_;
  int active_ = 0;
  bool started_ = false;
  std::uint64_t window_ = 0;
  std::uint64_t last_t_ = 0;
  AggregationState agg_;
  ChannelFrames empty_channels_;
  std::optional<std::uint64_t> last_emit_;
  FilterStats stats_;
};

std::vector<FilteredFrame> filter_pipeline(std::span<const Event> events, const FilterConfig& config,
                                           const SensorGeometry& geometry, FilterStats* stats = nullptr);

}  // namespace nearchip
