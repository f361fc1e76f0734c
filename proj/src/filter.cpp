#include "nearchip/filter.hpp"

#include <cassert>
#include <string>

#include "nearchip/error.hpp"

namespace nearchip {

void FilterConfig::validate(const SensorGeometry& geometry) const {
  if (geometry.width <= 0 || geometry.height <= 0) throw InvalidArgument("sensor geometry must be positive");
  if (tau_us == 0) throw InvalidArgument("tau must be positive");
  if (agg_event_threshold == 0) throw InvalidArgument("aggregation threshold must be positive");
  if (agg_window_limit < 1) throw InvalidArgument("aggregation window limit must be at least 1");
  if (pool < 1) throw InvalidArgument("pool factor must be at least 1");
  if (geometry.width % pool != 0 || geometry.height % pool != 0)
    throw InvalidArgument("pool factor " + std::to_string(pool) + " does not divide " +
                          std::to_string(geometry.width) + "x" + std::to_string(geometry.height));
}

WindowBitmap::WindowBitmap(const SensorGeometry& geometry)
    : geometry_(geometry), pos_(geometry.width, geometry.height), neg_(geometry.width, geometry.height) {}

// ---------------------------------------------------------------------------
// Payload (de)serialization

std::size_t payload_bytes(int width, int height) noexcept {
  return (2 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height) + 7) / 8;
}

std::vector<std::uint8_t> serialize_payload(const FilteredFrame& frame) {
  std::vector<std::uint8_t> out(payload_bytes(frame.width(), frame.height()), 0);
  std::size_t bit = 0;
  for (const BitPlane* plane : {&frame.h_pooled, &frame.v_pooled}) {
    for (int y = 0; y < plane->height(); ++y) {
      for (int x = 0; x < plane->width(); ++x, ++bit) {
        if (plane->get(x, y)) out[bit >> 3] |= static_cast<std::uint8_t>(0x80u >> (bit & 7));
      }
    }
  }
  return out;
}

FilteredFrame deserialize_payload(std::span<const std::uint8_t> bytes, int width, int height) {
  if (bytes.size() != payload_bytes(width, height))
    throw InvalidArgument("payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(payload_bytes(width, height)));
  FilteredFrame frame{BitPlane(width, height), BitPlane(width, height), 0, 0};
  std::size_t bit = 0;
  for (BitPlane* plane : {&frame.h_pooled, &frame.v_pooled}) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x, ++bit) {
        if (bytes[bit >> 3] & (0x80u >> (bit & 7))) plane->set(x, y);
      }
    }
  }
  return frame;
}

// ---------------------------------------------------------------------------
// Window stages

WindowBitmap accumulate_window(std::span<const Event> events, const SensorGeometry& geometry) {
  WindowBitmap w(geometry);
  for (const auto& e : events) {
    assert(geometry.contains(e.x, e.y));
    w.add(e);
  }
  return w;
}

namespace {

// h: bit x set when bit x and bit x + 1 are both set in `row`.
void horizontal_pairs(std::span<const std::uint64_t> row, std::span<std::uint64_t> out) {
  const std::size_t n = row.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t carry = i + 1 < n ? (row[i + 1] << 63) : 0;
    out[i] |= row[i] & ((row[i] >> 1) | carry);
  }
}

}  // namespace

ChannelFrames coincidence_detect(const WindowBitmap& window) {
  const auto& g = window.geometry();
  ChannelFrames out{BitPlane(g.width, g.height), BitPlane(g.width, g.height), 0};
  for (const BitPlane* plane : {&window.pos(), &window.neg()}) {
    for (int y = 0; y < g.height; ++y) {
      const auto row = plane->row(y);
      horizontal_pairs(row, out.h.row(y));
      if (y + 1 < g.height) {
        const auto below = plane->row(y + 1);
        auto v = out.v.row(y);
        for (std::size_t i = 0; i < row.size(); ++i) v[i] |= row[i] & below[i];
      }
    }
  }
  return out;
}

ChannelFrames activity_channels(const WindowBitmap& window) {
  BitPlane active = window.pos() | window.neg();
  return ChannelFrames{active, active, 0};
}

BitPlane max_pool(const BitPlane& plane, int pool) {
  if (pool < 1 || plane.width() % pool != 0 || plane.height() % pool != 0)
    throw InvalidArgument("pool factor must divide the plane dimensions");
  BitPlane out(plane.width() / pool, plane.height() / pool);
  std::vector<std::uint64_t> merged(plane.words_per_row());
  for (int by = 0; by < out.height(); ++by) {
    std::fill(merged.begin(), merged.end(), 0);
    for (int r = 0; r < pool; ++r) {
      const auto row = plane.row(by * pool + r);
      for (std::size_t i = 0; i < merged.size(); ++i) merged[i] |= row[i];
    }
    for (int bx = 0; bx < out.width(); ++bx) {
      if (any_in_range(merged, bx * pool, (bx + 1) * pool)) out.set(bx, by);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

void AggregationState::clear() noexcept {
  h_agg.clear();
  v_agg.clear();
  windows_aggregated = 0;
}

std::uint64_t trigger_count(const BitPlane& h, const BitPlane& v, const FilterConfig& config) {
  if (config.trigger == TriggerCount::PooledBlocks)
    return max_pool(h, config.pool).count() + max_pool(v, config.pool).count();
  return h.count() + v.count();
}

std::optional<AggregatedPlanes> aggregate_step(AggregationState& state, const ChannelFrames& frames,
                                               const FilterConfig& config) {
  if (state.h_agg.width() != frames.h.width() || state.h_agg.height() != frames.h.height()) {
    state.h_agg = BitPlane(frames.h.width(), frames.h.height());
    state.v_agg = BitPlane(frames.v.width(), frames.v.height());
    state.windows_aggregated = 0;
  }
  // The window counter starts with the first window that carries activity.
  if (state.empty() && !frames.h.any() && !frames.v.any()) return std::nullopt;

  state.h_agg |= frames.h;
  state.v_agg |= frames.v;
  ++state.windows_aggregated;

  if (trigger_count(state.h_agg, state.v_agg, config) >= config.agg_event_threshold) {
    AggregatedPlanes planes{state.h_agg, state.v_agg, state.windows_aggregated};
    state.clear();
    return planes;
  }
  if (state.windows_aggregated >= config.agg_window_limit) {
    state.clear();
    ++state.aborted;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Pipeline

FilterPipeline::FilterPipeline(const FilterConfig& config, const SensorGeometry& geometry)
    : config_(config), geometry_(geometry) {
  config_.validate(geometry_);
  banks_ = {WindowBitmap(geometry_), WindowBitmap(geometry_)};
  agg_.h_agg = BitPlane(geometry_.width, geometry_.height);
  agg_.v_agg = BitPlane(geometry_.width, geometry_.height);
  empty_channels_ = ChannelFrames{BitPlane(geometry_.width, geometry_.height),
                                  BitPlane(geometry_.width, geometry_.height), 0};
}

void FilterPipeline::push(const Event& e, std::vector<FilteredFrame>& out) {
  if (started_ && e.t < last_t_) throw InvalidArgument("events must be time-sorted");
  if (!geometry_.contains(e.x, e.y)) throw InvalidArgument("event outside the sensor geometry");
  const std::uint64_t window = e.t / config_.tau_us;
  if (!started_) {
    started_ = true;
    window_ = window;
  } else if (window != window_) {
    const std::uint64_t gap = window - window_ - 1;
    close_window(out);
    skip_empty_windows(gap, out);
    window_ = window;
  }
  last_t_ = e.t;
  ++stats_.events;
  banks_[active_].add(e);
}

void FilterPipeline::push(std::span<const Event> events, std::vector<FilteredFrame>& out) {
  for (const auto& e : events) push(e, out);
}

void FilterPipeline::finish(std::vector<FilteredFrame>& out) {
  if (!started_) return;
  close_window(out);
  started_ = false;
}

void FilterPipeline::close_window(std::vector<FilteredFrame>& out) {
  WindowBitmap& done = banks_[active_];
  active_ ^= 1;  // the other bank starts collecting the next window
  ++stats_.windows;
  ChannelFrames channels = config_.coincidence ? coincidence_detect(done) : activity_channels(done);
  channels.window_index = window_;
  process(channels, window_, out);
  done.clear();
}

void FilterPipeline::skip_empty_windows(std::uint64_t count, std::vector<FilteredFrame>& out) {
  // Empty windows only matter while an aggregation is pending.
  stats_.windows += count;
  for (std::uint64_t i = 0; i < count && config_.aggregation && !agg_.empty(); ++i)
    process(empty_channels_, window_ + 1 + i, out);
}

void FilterPipeline::process(const ChannelFrames& channels, std::uint64_t window,
                             std::vector<FilteredFrame>& out) {
  if (config_.aggregation) {
    const auto aborted_before = agg_.aborted;
    if (auto planes = aggregate_step(agg_, channels, config_))
      emit(planes->h, planes->v, planes->windows_aggregated, window, out);
    stats_.aggregation_aborted += agg_.aborted - aborted_before;
  } else if (channels.h.any() || channels.v.any()) {
    emit(channels.h, channels.v, 1, window, out);
  }
}

void FilterPipeline::emit(const BitPlane& h, const BitPlane& v, std::uint32_t windows, std::uint64_t window,
                          std::vector<FilteredFrame>& out) {
  const std::uint64_t emit_time = (window + 1) * config_.tau_us;
  if (config_.refractory_us > 0 && last_emit_ && emit_time - *last_emit_ < config_.refractory_us) {
    ++stats_.refractory_suppressed;
    return;
  }
  last_emit_ = emit_time;
  ++stats_.frames_emitted;
  out.push_back(FilteredFrame{max_pool(h, config_.pool), max_pool(v, config_.pool), emit_time, windows});
}

std::vector<FilteredFrame> filter_pipeline(std::span<const Event> events, const FilterConfig& config,
                                           const SensorGeometry& geometry, FilterStats* stats) {
  FilterPipeline pipeline(config, geometry);
  std::vector<FilteredFrame> out;
  pipeline.push(events, out);
  pipeline.finish(out);
  if (stats) *stats = pipeline.stats();
  return out;
}

}  // namespace nearchip
