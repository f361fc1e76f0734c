#include <doctest.h>

#include <map>

#include "nearchip/error.hpp"
#include "nearchip/filter.hpp"
#include "nearchip/synth.hpp"
#include "support.hpp"

using namespace nearchip;
using testsupport::Rng;

namespace {

const SensorGeometry kGeom{};

std::vector<std::uint8_t> cells_of(const WindowBitmap& w) {
  std::vector<std::uint8_t> cells(static_cast<std::size_t>(w.geometry().width) * w.geometry().height);
  for (int y = 0; y < w.geometry().height; ++y)
    for (int x = 0; x < w.geometry().width; ++x) cells[y * w.geometry().width + x] = w.cell(x, y);
  return cells;
}

ChannelFrames blocks_frame(int first_block, int n_blocks) {
  // one pixel in each of n distinct 8x8 blocks of the h channel
  ChannelFrames f{BitPlane(480, 320), BitPlane(480, 320), 0};
  for (int b = first_block; b < first_block + n_blocks; ++b) {
    const int bx = b % 60, by = b / 60;
    f.h.set(bx * 8 + 3, by * 8 + 2);
  }
  return f;
}

FilterConfig pooled_trigger() {
  FilterConfig c;
  c.trigger = TriggerCount::PooledBlocks;
  return c;
}

/// Window-at-a-time reference built from the individual stages.
std::vector<FilteredFrame> batch_reference(const std::vector<Event>& events, const FilterConfig& cfg) {
  std::map<std::uint64_t, std::vector<Event>> windows;
  for (const auto& e : events) windows[e.t / cfg.tau_us].push_back(e);
  std::vector<FilteredFrame> out;
  if (windows.empty()) return out;
  AggregationState state;
  std::optional<std::uint64_t> last;
  const std::uint64_t first = windows.begin()->first, final = windows.rbegin()->first;
  for (std::uint64_t w = first; w <= final; ++w) {
    auto it = windows.find(w);
    const auto bitmap = accumulate_window(it == windows.end() ? std::vector<Event>{} : it->second, kGeom);
    const auto ch = cfg.coincidence ? coincidence_detect(bitmap) : activity_channels(bitmap);
    std::optional<AggregatedPlanes> planes;
    if (cfg.aggregation) planes = aggregate_step(state, ch, cfg);
    else if (ch.h.any() || ch.v.any()) planes = AggregatedPlanes{ch.h, ch.v, 1};
    if (!planes) continue;
    const std::uint64_t t = (w + 1) * cfg.tau_us;
    if (cfg.refractory_us && last && t - *last < cfg.refractory_us) continue;
    last = t;
    out.push_back({max_pool(planes->h, cfg.pool), max_pool(planes->v, cfg.pool), t, planes->windows_aggregated});
  }
  return out;
}

}  // namespace

TEST_CASE("accumulate_window examples") {
  CHECK(accumulate_window({}, kGeom).empty());
  const std::vector<Event> twice{{0, 4, 5, Polarity::Pos}, {1, 4, 5, Polarity::Pos}};
  CHECK(accumulate_window(twice, kGeom).cell(4, 5) == 0b10);
  const std::vector<Event> both{{0, 4, 5, Polarity::Pos}, {1, 4, 5, Polarity::Neg}};
  CHECK(accumulate_window(both, kGeom).cell(4, 5) == 0b11);
}

TEST_CASE("coincidence_detect examples") {
  const std::vector<Event> single{{0, 200, 100, Polarity::Pos}};
  auto ch = coincidence_detect(accumulate_window(single, kGeom));
  CHECK_FALSE(ch.h.any());
  CHECK_FALSE(ch.v.any());

  const std::vector<Event> pair{{0, 5, 5, Polarity::Pos}, {0, 6, 5, Polarity::Pos}};
  ch = coincidence_detect(accumulate_window(pair, kGeom));
  CHECK(ch.h.get(5, 5));
  CHECK(ch.h.count() == 1);
  CHECK_FALSE(ch.v.any());

  const std::vector<Event> mismatch{{0, 5, 5, Polarity::Pos}, {0, 6, 5, Polarity::Neg}};
  ch = coincidence_detect(accumulate_window(mismatch, kGeom));
  CHECK_FALSE(ch.h.any());
  CHECK_FALSE(ch.v.any());

  // right edge and word boundaries
  const std::vector<Event> edge{{0, 63, 0, Polarity::Neg}, {0, 64, 0, Polarity::Neg}, {0, 479, 319, Polarity::Pos},
                                {0, 479, 318, Polarity::Pos}};
  ch = coincidence_detect(accumulate_window(edge, kGeom));
  CHECK(ch.h.get(63, 0));
  CHECK(ch.v.get(479, 318));
  CHECK(ch.h.count() == 1);
  CHECK(ch.v.count() == 1);
}

TEST_CASE("coincidence property: equals brute-force oracle, monotone, isolated pixels removed") {
  Rng rng(77);
  const SensorGeometry small{130, 24};
  for (int trial = 0; trial < 60; ++trial) {
    std::uniform_int_distribution<std::size_t> un(0, 900);
    auto ev = testsupport::random_events(rng, small, un(rng), 100);
    const auto w = accumulate_window(ev, small);
    const auto ch = coincidence_detect(w);
    const auto cells = cells_of(w);
    const auto [ho, vo] = testsupport::coincidence_oracle(cells, small.width, small.height);
    for (int y = 0; y < small.height; ++y)
      for (int x = 0; x < small.width; ++x) {
        REQUIRE(ch.h.get(x, y) == (ho[y * small.width + x] != 0));
        REQUIRE(ch.v.get(x, y) == (vo[y * small.width + x] != 0));
        // isolated: no same-polarity 4-neighbour means no bit at this site
        const auto c = cells[y * small.width + x];
        auto nb = [&](int dx, int dy) {
          const int nx = x + dx, ny = y + dy;
          return small.contains(nx, ny) ? (cells[ny * small.width + nx] & c) != 0 : false;
        };
        if (!nb(1, 0) && !nb(0, 1) && !nb(-1, 0) && !nb(0, -1)) {
          REQUIRE_FALSE(ch.h.get(x, y));
          REQUIRE_FALSE(ch.v.get(x, y));
        }
      }
    // adding events never clears an output bit
    auto more = ev;
    const auto extra = testsupport::random_events(rng, small, 200, 100);
    more.insert(more.end(), extra.begin(), extra.end());
    const auto ch2 = coincidence_detect(accumulate_window(more, small));
    REQUIRE((ch.h & ch2.h) == ch.h);
    REQUIRE((ch.v & ch2.v) == ch.v);
  }
}

TEST_CASE("activity channels carry the polarity-agnostic plane") {
  const std::vector<Event> ev{{0, 1, 1, Polarity::Pos}, {0, 9, 9, Polarity::Neg}};
  const auto ch = activity_channels(accumulate_window(ev, kGeom));
  CHECK(ch.h == ch.v);
  CHECK(ch.h.count() == 2);
}

TEST_CASE("max_pool examples and oracle") {
  CHECK_FALSE(max_pool(BitPlane(480, 320), 8).any());
  CHECK(max_pool(BitPlane(480, 320), 8).width() == 60);
  CHECK(max_pool(BitPlane(480, 320), 8).height() == 40);
  BitPlane one(480, 320);
  one.set(17, 9);
  const auto pooled = max_pool(one, 8);
  CHECK(pooled.get(2, 1));
  CHECK(pooled.count() == 1);
  CHECK_THROWS_AS(max_pool(one, 7), InvalidArgument);

  Rng rng(3);
  std::uniform_real_distribution<double> ud(0.0, 0.02);
  for (int trial = 0; trial < 1000; ++trial) {
    const int pool = (trial % 3 == 0) ? 4 : (trial % 3 == 1 ? 8 : 16);
    const auto p = testsupport::random_plane(rng, 480, 320, ud(rng));
    const auto got = max_pool(p, pool);
    REQUIRE(got == testsupport::pool_oracle(p, pool));
    REQUIRE(got.count() <= std::min<std::size_t>(p.count(), got.width() * got.height()));
  }
}

TEST_CASE("aggregate_step examples (pooled-block trigger)") {
  const auto cfg = pooled_trigger();

  SUBCASE("1200 blocks in one window emit immediately") {
    AggregationState s;
    auto r = aggregate_step(s, blocks_frame(0, 1200), cfg);
    REQUIRE(r);
    CHECK(r->windows_aggregated == 1);
    CHECK(s.empty());
  }
  SUBCASE("five windows of 100 disjoint blocks never emit and clear after the fifth") {
    AggregationState s;
    for (int i = 0; i < 5; ++i) CHECK_FALSE(aggregate_step(s, blocks_frame(i * 100, 100), cfg));
    CHECK(s.empty());
    CHECK(s.aborted == 1);
    CHECK_FALSE(s.h_agg.any());
  }
  SUBCASE("two windows of 600 disjoint blocks emit at the second") {
    AggregationState s;
    CHECK_FALSE(aggregate_step(s, blocks_frame(0, 600), cfg));
    auto r = aggregate_step(s, blocks_frame(600, 600), cfg);
    REQUIRE(r);
    CHECK(r->windows_aggregated == 2);
    // oracle: OR the two inputs and count pooled blocks
    const auto ored = blocks_frame(0, 600).h | blocks_frame(600, 600).h;
    CHECK(r->h == ored);
    CHECK(testsupport::pool_oracle(ored, 8).count() == 1200);
  }
  SUBCASE("empty windows do not start the counter") {
    AggregationState s;
    for (int i = 0; i < 10; ++i) CHECK_FALSE(aggregate_step(s, blocks_frame(0, 0), cfg));
    CHECK(s.empty());
    CHECK(s.aborted == 0);
  }
}

TEST_CASE("trigger count variants") {
  FilterConfig full;
  const auto f = blocks_frame(0, 10);
  BitPlane v(480, 320);
  v.set(0, 0);
  v.set(1, 0);
  CHECK(trigger_count(f.h, v, full) == 12);
  CHECK(trigger_count(f.h, v, pooled_trigger()) == 11);
}

TEST_CASE("filter_pipeline: empty stream and input validation") {
  CHECK(filter_pipeline({}, FilterConfig{}, kGeom).empty());
  FilterPipeline p(FilterConfig{}, kGeom);
  std::vector<FilteredFrame> out;
  p.push(Event{10, 0, 0, Polarity::Pos}, out);
  CHECK_THROWS_AS(p.push(Event{9, 0, 0, Polarity::Pos}, out), InvalidArgument);
  CHECK_THROWS_AS(p.push(Event{11, 480, 0, Polarity::Pos}, out), InvalidArgument);
  FilterConfig bad;
  bad.pool = 7;
  CHECK_THROWS_AS(FilterPipeline(bad, kGeom), InvalidArgument);
  bad = FilterConfig{};
  bad.tau_us = 0;
  CHECK_THROWS_AS(bad.validate(kGeom), InvalidArgument);
}

TEST_CASE("filter_pipeline on a moving pedestrian clip") {
  SceneSpec spec;
  spec.duration_us = 600'000;
  spec.seed = 19;
  const auto clip = gen_clip(spec);

  FilterStats stats;
  const auto frames = filter_pipeline(clip.events, FilterConfig{}, kGeom, &stats);
  REQUIRE(frames.size() >= 1);
  CHECK(stats.frames_emitted == frames.size());
  CHECK(stats.events == clip.events.size());
  for (const auto& f : frames) {
    CHECK(f.payload_bits() == 4800);
    CHECK(serialize_payload(f).size() * 8 == 4800);
    CHECK(f.emit_time % 3000 == 0);
    CHECK(f.windows_aggregated >= 1);
    CHECK(f.windows_aggregated <= 5);
  }

  FilterConfig refr;
  refr.refractory_us = 100'000;
  const auto sparse = filter_pipeline(clip.events, refr, kGeom);
  REQUIRE(sparse.size() >= 2);
  for (std::size_t i = 1; i < sparse.size(); ++i) CHECK(sparse[i].emit_time - sparse[i - 1].emit_time >= 100'000);
  CHECK(sparse.size() < frames.size());
}

TEST_CASE("filter property: streaming equals the window-at-a-time reference") {
  Rng rng(99);
  std::vector<FilterConfig> configs(6);
  configs[1].coincidence = false;
  configs[2].aggregation = false;
  configs[3].pool = 16;
  configs[4].refractory_us = 20'000;
  configs[5].trigger = TriggerCount::PooledBlocks;
  configs[5].agg_event_threshold = 40;
  for (int trial = 0; trial < 12; ++trial) {
    SceneSpec spec;
    spec.duration_us = 120'000;
    spec.seed = 1000 + trial;
    spec.noise_rate = trial % 2 ? 2.0 : 20.0;
    spec.start_x = 100 + 20 * trial;
    auto ev = gen_clip(spec).events;
    // a gap of several windows exercises the empty-window path
    for (auto& e : ev)
      if (e.t > 60'000) e.t += 14'000;
    for (const auto& cfg : configs) {
      const auto ref = batch_reference(ev, cfg);
      REQUIRE(filter_pipeline(ev, cfg, kGeom) == ref);
      // arbitrary chunking of the input gives the same result
      FilterPipeline p(cfg, kGeom);
      std::vector<FilteredFrame> out;
      std::size_t i = 0;
      std::uniform_int_distribution<std::size_t> chunk(1, 5000);
      while (i < ev.size()) {
        const std::size_t n = std::min(ev.size() - i, chunk(rng));
        p.push(std::span(ev).subspan(i, n), out);
        i += n;
      }
      p.finish(out);
      REQUIRE(out == ref);
    }
  }
}

TEST_CASE("filter property: disabling coincidence never lowers payload bits on noisy input") {
  for (int trial = 0; trial < 6; ++trial) {
    SceneSpec spec;
    spec.duration_us = 150'000;
    spec.seed = 500 + trial;
    spec.noise_rate = 2.0 + trial;
    spec.kind = trial % 2 ? ObjectKind::Box : ObjectKind::Pedestrian;
    const auto ev = gen_clip(spec).events;
    FilterConfig off;
    off.coincidence = false;
    auto bits = [](const std::vector<FilteredFrame>& fs) {
      std::size_t n = 0;
      for (const auto& f : fs) n += f.h_pooled.count() + f.v_pooled.count();
      return n;
    };
    CHECK(bits(filter_pipeline(ev, off, kGeom)) >= bits(filter_pipeline(ev, FilterConfig{}, kGeom)));
  }
}

TEST_CASE("payload serialization") {
  Rng rng(8);
  CHECK(payload_bytes(60, 40) == 600);
  CHECK(payload_bytes(30, 20) == 150);
  CHECK(payload_bytes(3, 1) == 1);
  FilteredFrame f = testsupport::zero_frame();
  f.h_pooled.set(0, 0);
  f.v_pooled.set(59, 39);
  const auto bytes = serialize_payload(f);
  CHECK(bytes[0] == 0x80);
  CHECK(bytes[599] == 0x01);
  for (int i = 0; i < 200; ++i) {
    const auto r = testsupport::random_frame(rng, 60, 40, 0.2);
    REQUIRE(deserialize_payload(serialize_payload(r), 60, 40).same_payload(r));
  }
  CHECK_THROWS_AS(deserialize_payload(bytes, 30, 20), InvalidArgument);
}
