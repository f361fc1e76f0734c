#include "nearchip/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "nearchip/bnn.hpp"
#include "nearchip/error.hpp"
#include "nearchip/grouped.hpp"
#include "nearchip/packet.hpp"

namespace nearchip {

F1Result f1_score(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels) {
  if (predictions.size() != labels.size()) throw InvalidArgument("predictions and labels differ in length");
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] != 0;
    const bool l = labels[i] != 0;
    tp += p && l;
    fp += p && !l;
    fn += !p && l;
  }
  F1Result r;
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  else r.zero_division = true;
  if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  else r.zero_division = true;
  if (r.precision + r.recall > 0) r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
  else r.zero_division = true;
  return r;
}

FilterConfig AblationSpec::apply(FilterConfig base) const {
  base.coincidence = coincidence;
  base.aggregation = aggregation;
  base.pool = pool;
  return base;
}

std::vector<AblationSpec> default_variants() {
  return {
      {"full", true, true, 8, true},  {"co-off", false, true, 8, true}, {"ag-off", true, false, 8, true},
      {"mp-4", true, true, 4, true},  {"mp-8", true, true, 8, true},    {"mp-16", true, true, 16, true},
  };
}

AblationSpec parse_variant(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (auto& v : default_variants())
    if (v.name == lower) return v;
  throw InvalidArgument("unknown variant '" + name + "' (expected full, co-off, ag-off, mp-4, mp-8 or mp-16)");
}

std::uint64_t packet_bits(const FilteredFrame& frame, const HuffmanDictionary* dict) {
  const auto payload = serialize_payload(frame);
  if (!dict) return kPacketOverheadBits + payload.size() * 8;
  std::uint64_t bits = 0;
  for (auto b : payload) bits += dict->length(b);
  return kPacketOverheadBits + (bits + 7) / 8 * 8;
}

std::uint64_t raw_stream_bits(std::span<const Event> events) { return grouped_word_count(events) * 32; }

std::vector<CorpusClip> corpus_from_dataset(const Dataset& dataset) {
  std::vector<CorpusClip> out;
  for (const auto& e : dataset.entries) {
    SceneSpec spec = e.spec;
    out.push_back(CorpusClip{[spec] { return gen_clip(spec).events; }, spec.duration_us, e.label, e.train});
  }
  return out;
}

std::vector<CorpusClip> corpus_from_clips(std::span<const LabeledClip> clips) {
  std::vector<CorpusClip> out;
  for (const auto& c : clips) {
    const LabeledClip* p = &c;
    out.push_back(CorpusClip{[p] { return p->events; }, c.spec.duration_us, c.label, true});
  }
  return out;
}

namespace {

std::uint64_t align_up(std::uint64_t t, std::uint64_t step) { return (t + step - 1) / step * step; }

void push_shifted(FilterPipeline& pipeline, std::span<const Event> events, std::uint64_t offset,
                  std::vector<FilteredFrame>& out) {
  for (Event e : events) {
    e.t += offset;
    pipeline.push(e, out);
  }
}

BandwidthResult summarize(std::span<const FilteredFrame> frames, const HuffmanDictionary* dict, std::uint64_t raw_bits,
                          double duration_s) {
  BandwidthResult r;
  r.duration_s = duration_s;
  r.raw_bits = raw_bits;
  for (const auto& f : frames) {
    const auto bits = packet_bits(f, dict);
    r.total_packet_bits += bits;
    r.max_packet_bits = std::max(r.max_packet_bits, bits);
  }
  r.packet_count = frames.size();
  r.mean_packet_bits = frames.empty() ? 0.0 : static_cast<double>(r.total_packet_bits) / static_cast<double>(frames.size());
  if (duration_s > 0) {
    r.bitrate_bps = static_cast<double>(r.total_packet_bits) / duration_s;
    r.raw_bitrate_bps = static_cast<double>(raw_bits) / duration_s;
  }
  return r;
}

template <typename T>
std::vector<T> evenly_spaced(const std::vector<T>& items, int cap) {
  if (cap <= 0 || items.size() <= static_cast<std::size_t>(cap)) return items;
  std::vector<T> out;
  out.reserve(cap);
  for (int i = 0; i < cap; ++i) out.push_back(items[static_cast<std::size_t>(i) * items.size() / cap]);
  return out;
}

}  // namespace

BandwidthReport measure_bandwidth(std::span<const CorpusClip> corpus, const FilterConfig& config,
                                  const SensorGeometry& geometry, const HuffmanDictionary* dict,
                                  std::uint64_t refractory_us) {
  if (corpus.empty()) throw InvalidArgument("bandwidth measurement needs a non-empty corpus");
  FilterConfig unlimited_cfg = config;
  unlimited_cfg.refractory_us = 0;
  FilterConfig refractory_cfg = config;
  refractory_cfg.refractory_us = refractory_us;
  FilterPipeline unlimited(unlimited_cfg, geometry);
  FilterPipeline refractory(refractory_cfg, geometry);
  std::vector<FilteredFrame> unlimited_frames, refractory_frames;

  std::uint64_t offset = 0;
  std::uint64_t raw_bits = 0;
  for (const auto& clip : corpus) {
    const auto events = clip.load();
    raw_bits += raw_stream_bits(events);
    push_shifted(unlimited, events, offset, unlimited_frames);
    push_shifted(refractory, events, offset, refractory_frames);
    offset = align_up(offset + clip.duration_us, config.tau_us);
  }
  unlimited.finish(unlimited_frames);
  refractory.finish(refractory_frames);
  const double duration_s = static_cast<double>(offset) * 1e-6;
  return {summarize(unlimited_frames, dict, raw_bits, duration_s),
          summarize(refractory_frames, dict, raw_bits, duration_s)};
}

// ---------------------------------------------------------------------------

BenchReport run_ablation(std::span<const CorpusClip> corpus, std::span<const AblationSpec> variants,
                         const BenchOptions& options) {
  if (corpus.empty()) throw InvalidArgument("ablation needs a non-empty corpus");
  if (variants.empty()) throw InvalidArgument("ablation needs at least one variant");
  auto note = [&](const std::string& msg) {
    if (options.progress) options.progress(msg);
  };

  struct VariantState {
    FilterConfig config;
    bool valid = true;
    std::string error;
    std::vector<std::vector<FilteredFrame>> clip_frames;
    std::optional<FilterPipeline> refractory;
    std::vector<FilteredFrame> refractory_frames;
  };
  std::vector<VariantState> states(variants.size());
  for (std::size_t v = 0; v < variants.size(); ++v) {
    auto& s = states[v];
    s.config = variants[v].apply(options.base);
    s.config.refractory_us = 0;
    try {
      s.config.validate(options.geometry);
      if (options.measure_refractory) {
        FilterConfig rc = s.config;
        rc.refractory_us = options.refractory_us;
        s.refractory.emplace(rc, options.geometry);
      }
    } catch (const std::exception& e) {
      s.valid = false;
      s.error = e.what();
    }
    s.clip_frames.resize(corpus.size());
  }

  BenchReport report;
  std::uint64_t offset = 0;
  double total_duration_us = 0;
  for (std::size_t c = 0; c < corpus.size(); ++c) {
    const auto events = corpus[c].load();
    report.events += events.size();
    report.raw_bits += raw_stream_bits(events);
    total_duration_us += static_cast<double>(corpus[c].duration_us);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      auto& s = states[v];
      if (!s.valid) continue;
      const auto start = std::chrono::steady_clock::now();
      FilterPipeline pipeline(s.config, options.geometry);
      pipeline.push(events, s.clip_frames[c]);
      pipeline.finish(s.clip_frames[c]);
      if (v == 0)
        report.filter_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (s.refractory) push_shifted(*s.refractory, events, offset, s.refractory_frames);
    }
    offset = align_up(offset + corpus[c].duration_us, options.base.tau_us);
    if ((c + 1) % 20 == 0 || c + 1 == corpus.size())
      note("filtered " + std::to_string(c + 1) + "/" + std::to_string(corpus.size()) + " clips");
  }
  report.duration_s = total_duration_us * 1e-6;
  const double refractory_duration_s = static_cast<double>(offset) * 1e-6;

  for (std::size_t v = 0; v < variants.size(); ++v) {
    auto& s = states[v];
    VariantResult row;
    row.spec = variants[v];
    if (!s.valid) {
      row.ok = false;
      row.error = s.error;
      report.rows.push_back(std::move(row));
      continue;
    }
    if (s.refractory) s.refractory->finish(s.refractory_frames);
    try {
      std::vector<FilteredFrame> train_all;
      for (std::size_t c = 0; c < corpus.size(); ++c)
        if (corpus[c].train) train_all.insert(train_all.end(), s.clip_frames[c].begin(), s.clip_frames[c].end());
      std::optional<HuffmanDictionary> dict;
      if (row.spec.huffman && !train_all.empty()) dict = build_dictionary(train_all);
      const HuffmanDictionary* dp = dict ? &*dict : nullptr;

      std::vector<FilteredFrame> all;
      for (const auto& frames : s.clip_frames) all.insert(all.end(), frames.begin(), frames.end());
      const auto coded = summarize(all, dp, report.raw_bits, report.duration_s);
      const auto uncoded = summarize(all, nullptr, report.raw_bits, report.duration_s);
      row.bitrate_bps = coded.bitrate_bps;
      row.mean_packet_bits = coded.mean_packet_bits;
      row.packets = coded.packet_count;
      row.max_packet_bits = coded.max_packet_bits;
      row.raw_bitrate_bps = coded.raw_bitrate_bps;
      row.reduction_pct = coded.raw_bitrate_bps > 0 ? 100.0 * (1.0 - coded.bitrate_bps / coded.raw_bitrate_bps) : 0.0;
      row.prehuffman_bitrate_bps = uncoded.bitrate_bps;
      if (s.refractory) {
        const auto r = summarize(s.refractory_frames, dp, report.raw_bits, refractory_duration_s);
        row.refractory_bitrate_bps = r.bitrate_bps;
        row.refractory_max_packet_bits = r.max_packet_bits;
      }
      all.clear();
      all.shrink_to_fit();

      std::vector<FilteredFrame> train_frames, test_frames;
      std::vector<std::uint8_t> train_labels, test_labels;
      for (std::size_t c = 0; c < corpus.size(); ++c) {
        const bool train = corpus[c].train;
        auto picked = evenly_spaced(s.clip_frames[c], train ? options.train_frames_per_clip : options.test_frames_per_clip);
        auto& frames = train ? train_frames : test_frames;
        auto& labels = train ? train_labels : test_labels;
        for (auto& f : picked) {
          frames.push_back(std::move(f));
          labels.push_back(corpus[c].label ? 1 : 0);
        }
      }
      row.train_frames = train_frames.size();
      row.test_frames = test_frames.size();
      note("training " + row.spec.name + " on " + std::to_string(train_frames.size()) + " frames");
      TrainLog log;
      const DetectorModel model = train(train_frames, train_labels, options.train, &log);
      row.loss_curve = log.epoch_loss;
      std::vector<std::uint8_t> predictions;
      predictions.reserve(test_frames.size());
      for (const auto& f : test_frames) predictions.push_back(detect(f, model).decision ? 1 : 0);
      row.quality = f1_score(predictions, test_labels);
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    s.clip_frames.clear();
    s.clip_frames.shrink_to_fit();
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string report_csv(const BenchReport& report) {
  std::ostringstream out;
  out << "variant,bitrate_bps,mean_packet_bits,f1,precision,recall,reduction_pct,"
         "raw_bitrate_bps,prehuffman_bitrate_bps,refractory_bitrate_bps,packets,status\n";
  char buf[512];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%.3f,%.3f,%.6f,%.6f,%.6f,%.4f,%.3f,%.3f,%.3f,%llu,%s\n", r.spec.name.c_str(),
                  r.bitrate_bps, r.mean_packet_bits, r.quality.f1, r.quality.precision, r.quality.recall,
                  r.reduction_pct, r.raw_bitrate_bps, r.prehuffman_bitrate_bps, r.refractory_bitrate_bps,
                  static_cast<unsigned long long>(r.packets), r.ok ? "ok" : "failed");
    out << buf;
  }
  return out.str();
}

std::string report_svg(const BenchReport& report) {
  constexpr double W = 640, H = 420, left = 70, right = 30, top = 30, bottom = 60;
  double lo = 1e300, hi = 0;
  for (const auto& r : report.rows) {
    if (!r.ok || r.bitrate_bps <= 0) continue;
    lo = std::min(lo, r.bitrate_bps);
    hi = std::max(hi, r.bitrate_bps);
  }
  if (hi <= 0) lo = 1, hi = 10;
  const double llo = std::floor(std::log10(lo));
  const double lhi = std::max(llo + 1, std::ceil(std::log10(hi)));
  auto px = [&](double bps) { return left + (std::log10(bps) - llo) / (lhi - llo) * (W - left - right); };
  auto py = [&](double f1) { return top + (1.0 - f1) * (H - top - bottom); };

  std::ostringstream out;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                "font-size=\"12\">\n",
                W, H);
  out << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n"
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                left, H - bottom, W - right, H - bottom, left, top, left, H - bottom);
  out << buf;
  for (double d = llo; d <= lhi + 1e-9; d += 1) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">1e%.0f</text>\n", px(std::pow(10, d)),
                  H - bottom + 18, d);
    out << buf;
  }
  for (int i = 0; i <= 4; ++i) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.2f</text>\n", left - 6,
                  py(i / 4.0) + 4, i / 4.0);
    out << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">bitrate (bit/s, log scale)</text>\n"
                "<text x=\"16\" y=\"%.1f\" transform=\"rotate(-90 16 %.1f)\" text-anchor=\"middle\">test F1</text>\n",
                (left + W - right) / 2, H - 16, (top + H - bottom) / 2, (top + H - bottom) / 2);
  out << buf;
  for (const auto& r : report.rows) {
    if (!r.ok || r.bitrate_bps <= 0) continue;
    std::snprintf(buf, sizeof buf,
                  "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"5\" fill=\"steelblue\"/>\n"
                  "<text x=\"%.1f\" y=\"%.1f\">%s</text>\n",
                  px(r.bitrate_bps), py(r.quality.f1), px(r.bitrate_bps) + 8, py(r.quality.f1) - 6, r.spec.name.c_str());
    out << buf;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace nearchip
