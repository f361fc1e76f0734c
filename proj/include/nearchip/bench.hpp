#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nearchip/filter.hpp"
#include "nearchip/huffman.hpp"
#include "nearchip/synth.hpp"
#include "nearchip/train.hpp"

namespace nearchip {

struct F1Result {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  bool zero_division = false;  ///< some ratio had a zero denominator and was set to 0
};

/// Throws InvalidArgument on length mismatch.
F1Result f1_score(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels);

/// A pipeline variant for ablations.
struct AblationSpec {
  std::string name;
  bool coincidence = true;
  bool aggregation = true;
  int pool = 8;
  bool huffman = true;

  FilterConfig apply(FilterConfig base) const;
};

/// full, co-off, ag-off, mp-4, mp-8, mp-16
std::vector<AblationSpec> default_variants();
/// One of the default names, case-insensitive. Throws InvalidArgument otherwise.
AblationSpec parse_variant(const std::string& name);

/// Bits on the wire for one frame: 64 + Huffman payload padded to a byte, or
/// the raw payload when `dict` is null.
std::uint64_t packet_bits(const FilteredFrame& frame, const HuffmanDictionary* dict);
/// Sensor-link cost of a raw event stream in the grouped word format.
std::uint64_t raw_stream_bits(std::span<const Event> events);

/// One clip of a corpus, loaded on demand.
struct CorpusClip {
  std::function<std::vector<Event>()> load;
  std::uint64_t duration_us = 0;
  bool label = false;
  bool train = false;
};

std::vector<CorpusClip> corpus_from_dataset(const Dataset& dataset);
std::vector<CorpusClip> corpus_from_clips(std::span<const LabeledClip> clips);

struct BandwidthResult {
  double bitrate_bps = 0.0;
  double mean_packet_bits = 0.0;
  std::uint64_t packet_count = 0;
  std::uint64_t max_packet_bits = 0;
  std::uint64_t total_packet_bits = 0;
  std::uint64_t raw_bits = 0;
  double raw_bitrate_bps = 0.0;
  double duration_s = 0.0;
};

struct BandwidthReport {
  BandwidthResult unlimited;
  BandwidthResult refractory;
};

/// Streams the corpus end to end (each clip starts on the next window
/// boundary) through the filter and accounts packet bits against the raw
/// grouped-format bits. Runs once as configured with refractory disabled and
/// once with `refractory_us`.
BandwidthReport measure_bandwidth(std::span<const CorpusClip> corpus, const FilterConfig& config,
                                  const SensorGeometry& geometry, const HuffmanDictionary* dict,
                                  std::uint64_t refractory_us = 100'000);

struct BenchOptions {
  FilterConfig base;
  SensorGeometry geometry;
  TrainConfig train;
  int train_frames_per_clip = 8;  ///< evenly spaced sample of each training clip's frames
  int test_frames_per_clip = 16;
  std::uint64_t refractory_us = 100'000;
  bool measure_refractory = true;
  std::function<void(const std::string&)> progress;
};

struct VariantResult {
  AblationSpec spec;
  bool ok = true;
  std::string error;
  double bitrate_bps = 0.0;
  double mean_packet_bits = 0.0;
  std::uint64_t packets = 0;
  std::uint64_t max_packet_bits = 0;
  double raw_bitrate_bps = 0.0;
  double reduction_pct = 0.0;
  double prehuffman_bitrate_bps = 0.0;
  double refractory_bitrate_bps = 0.0;
  std::uint64_t refractory_max_packet_bits = 0;
  F1Result quality;
  std::size_t train_frames = 0;
  std::size_t test_frames = 0;
  std::vector<double> loss_curve;
};

struct BenchReport {
  std::vector<VariantResult> rows;
  double duration_s = 0.0;
  std::uint64_t events = 0;
  std::uint64_t raw_bits = 0;
  double filter_seconds = 0.0;  ///< wall time of the first variant's filter passes
  double events_per_second() const { return filter_seconds > 0 ? static_cast<double>(events) / filter_seconds : 0.0; }
};

/// For each variant: filter every clip, build a dictionary from the training
/// frames, train a detector, evaluate frame-level F1 on the test clips and
/// account bandwidth. A variant that fails is recorded and the run continues.
BenchReport run_ablation(std::span<const CorpusClip> corpus, std::span<const AblationSpec> variants,
                         const BenchOptions& options);

std::string report_csv(const BenchReport& report);
std::string report_svg(const BenchReport& report);

}  // namespace nearchip
