// nearchip: command-line front end for the event filter, codec, detector and
// ablation bench.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nearchip/bench.hpp"
#include "nearchip/bnn.hpp"
#include "nearchip/config.hpp"
#include "nearchip/error.hpp"
#include "nearchip/events.hpp"
#include "nearchip/filter.hpp"
#include "nearchip/frame_io.hpp"
#include "nearchip/huffman.hpp"
#include "nearchip/packet.hpp"
#include "nearchip/synth.hpp"
#include "nearchip/train.hpp"

#ifndef NEARCHIP_VERSION
#define NEARCHIP_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace nearchip;

namespace {

enum Exit { kOk = 0, kUsage = 2, kMismatch = 3, kIo = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PipelineFlags {
  std::string config_path;
  std::optional<std::uint64_t> tau_us;
  std::optional<std::uint64_t> agg_threshold;
  std::optional<int> agg_limit;
  std::optional<int> pool;
  std::optional<std::uint64_t> refractory_us;
  bool no_coincidence = false;
  bool no_aggregation = false;
  std::optional<std::string> trigger;

  void add_to(CLI::App& app) {
    app.add_option("--config", config_path, "key=value pipeline config file")->check(CLI::ExistingFile);
    app.add_option("--tau-us", tau_us, "window length in microseconds");
    app.add_option("--agg-threshold", agg_threshold, "aggregation trigger count");
    app.add_option("--agg-limit", agg_limit, "windows aggregated before giving up");
    app.add_option("--pool", pool, "OR-pooling factor");
    app.add_option("--refractory-us", refractory_us, "minimum interval between emitted frames");
    app.add_flag("--no-coincidence", no_coincidence, "pass raw activity instead of coincidences");
    app.add_flag("--no-aggregation", no_aggregation, "emit every non-empty window");
    app.add_option("--trigger", trigger, "trigger count: full or pooled")->check(CLI::IsMember({"full", "pooled"}));
  }

  PipelineSettings resolve() const {
    PipelineSettings s;
    if (!config_path.empty()) apply_config_file(config_path, s);
    if (tau_us) s.filter.tau_us = *tau_us;
    if (agg_threshold) s.filter.agg_event_threshold = *agg_threshold;
    if (agg_limit) s.filter.agg_window_limit = *agg_limit;
    if (pool) s.filter.pool = *pool;
    if (refractory_us) s.filter.refractory_us = *refractory_us;
    if (no_coincidence) s.filter.coincidence = false;
    if (no_aggregation) s.filter.aggregation = false;
    if (trigger) s.filter.trigger = *trigger == "pooled" ? TriggerCount::PooledBlocks : TriggerCount::FullResolution;
    try {
      s.filter.validate(s.geometry);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
    return s;
  }
};

json settings_json(const PipelineSettings& s) {
  const auto& f = s.filter;
  return json{{"tau_us", f.tau_us},
              {"agg_threshold", f.agg_event_threshold},
              {"agg_limit", f.agg_window_limit},
              {"pool", f.pool},
              {"refractory_us", f.refractory_us},
              {"coincidence", f.coincidence},
              {"aggregation", f.aggregation},
              {"trigger", f.trigger == TriggerCount::PooledBlocks ? "pooled" : "full"},
              {"width", s.geometry.width},
              {"height", s.geometry.height}};
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Collects what a run did and writes it next to its outputs.
class RunManifest {
 public:
  explicit RunManifest(std::string subcommand)
      : start_(std::chrono::steady_clock::now()) {
    doc_["subcommand"] = std::move(subcommand);
    doc_["tool_version"] = NEARCHIP_VERSION;
    doc_["started_utc"] = utc_now();
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
    doc_["seeds"] = json::object();
  }

  void input(const fs::path& p) { doc_["inputs"].push_back(p.string()); }
  void output(const fs::path& p) { doc_["outputs"].push_back(p.string()); }
  void seed(const std::string& name, std::uint64_t value) { doc_["seeds"][name] = value; }
  json& operator[](const std::string& key) { return doc_[key]; }

  /// `where` is a directory (manifest goes inside) or an output file (manifest goes beside it).
  void write(const fs::path& where) {
    doc_["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const fs::path path =
        fs::is_directory(where) ? where / "run_manifest.json" : fs::path(where.string() + ".manifest.json");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc_.dump(2) << '\n';
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

std::vector<Event> load_events(const fs::path& path, const SensorGeometry& geometry) {
  const auto bytes = read_file_bytes(path);
  if (bytes.empty()) return {};
  auto file = decode_event_file(bytes);
  if (file.geometry != geometry)
    throw DimensionMismatch(path.string() + " is " + std::to_string(file.geometry.width) + "x" +
                            std::to_string(file.geometry.height) + ", pipeline expects " +
                            std::to_string(geometry.width) + "x" + std::to_string(geometry.height));
  return std::move(file.events);
}

HuffmanDictionary load_dict(const fs::path& path) { return HuffmanDictionary::parse(read_file_bytes(path)); }

std::pair<int, int> pooled_size(const PipelineSettings& s) {
  return {s.geometry.width / s.filter.pool, s.geometry.height / s.filter.pool};
}

template <typename T>
std::vector<T> sample_evenly(std::vector<T> items, int cap) {
  if (cap <= 0 || items.size() <= static_cast<std::size_t>(cap)) return items;
  std::vector<T> out;
  for (int i = 0; i < cap; ++i) out.push_back(std::move(items[static_cast<std::size_t>(i) * items.size() / cap]));
  return out;
}

/// Frames of one manifest entry: FRM1 files load directly, event files are filtered.
std::vector<FilteredFrame> frames_for(const fs::path& path, const PipelineSettings& s) {
  if (path.extension() == ".frm") {
    auto file = read_frame_file(path);
    const auto [w, h] = pooled_size(s);
    if (file.width != w || file.height != h)
      throw DimensionMismatch(path.string() + " holds " + std::to_string(file.width) + "x" +
                              std::to_string(file.height) + " frames, expected " + std::to_string(w) + "x" +
                              std::to_string(h));
    return std::move(file.frames);
  }
  return filter_pipeline(load_events(path, s.geometry), s.filter, s.geometry);
}

// ---------------------------------------------------------------------------

int cmd_gen(int n_pos, int n_neg, std::uint64_t seed, const fs::path& out, double noise_rate, int edge_width) {
  DatasetConfig cfg;
  cfg.n_pos = n_pos;
  cfg.n_neg = n_neg;
  cfg.seed = seed;
  cfg.noise_rate = noise_rate;
  cfg.edge_width = edge_width;
  if (n_pos < 1 || n_neg < 1) throw UsageError("--pos and --neg must be at least 1");
  if (!(noise_rate >= 0)) throw UsageError("--noise-rate must be non-negative");
  if (edge_width < 1) throw UsageError("--edge-width must be at least 1");
  RunManifest manifest("gen");
  manifest.seed("dataset", seed);
  manifest["dataset"] = {{"pos", n_pos}, {"neg", n_neg}, {"noise_rate", noise_rate}, {"edge_width", edge_width}};
  const Dataset ds = build_dataset(cfg);
  fs::create_directories(out);
  write_dataset(ds, out);
  manifest.output(out / "labels.csv");
  manifest.write(out);
  std::cerr << "wrote " << ds.entries.size() << " clips (" << ds.train_count() << " train, " << ds.test_count()
            << " test) to " << out.string() << '\n';
  return kOk;
}

int cmd_filter(const fs::path& input, const fs::path& out, const PipelineSettings& s, const std::string& dict_path,
               bool packets) {
  if (packets && dict_path.empty()) throw UsageError("--packets requires --dict");
  RunManifest manifest("filter");
  manifest["config"] = settings_json(s);
  manifest.input(input);
  const auto events = load_events(input, s.geometry);
  FilterStats stats;
  const auto frames = filter_pipeline(events, s.filter, s.geometry, &stats);
  const auto [w, h] = pooled_size(s);

  std::uint64_t bits = 0;
  if (!dict_path.empty()) {
    manifest.input(dict_path);
    const auto dict = load_dict(dict_path);
    std::vector<std::uint8_t> stream;
    for (const auto& f : frames) {
      const auto pkt = frame_packet(f, dict);
      stream.insert(stream.end(), pkt.begin(), pkt.end());
      bits += pkt.size() * 8;
    }
    write_file_bytes(out, stream);
  } else {
    write_frame_file(out, w, h, frames);
    for (const auto& f : frames) bits += packet_bits(f, nullptr);
  }
  manifest.output(out);
  const double seconds = events.empty() ? 0.0 : static_cast<double>(events.back().t + 1) * 1e-6;
  const double bps = seconds > 0 ? static_cast<double>(bits) / seconds : 0.0;
  manifest["frames"] = frames.size();
  manifest["bits"] = bits;
  manifest["bitrate_bps"] = bps;
  manifest.write(out);
  std::cerr << frames.size() << " frames from " << events.size() << " events, " << bits << " bits, "
            << static_cast<long long>(bps) << " bit/s\n";
  return kOk;
}

int cmd_dict(const std::vector<std::string>& inputs, const fs::path& out) {
  RunManifest manifest("dict");
  std::vector<FilteredFrame> frames;
  for (const auto& in : inputs) {
    manifest.input(in);
    auto file = read_frame_file(in);
    if (!frames.empty() && (file.width != frames.front().width() || file.height != frames.front().height()) &&
        !file.frames.empty())
      throw DimensionMismatch(in + " holds frames of a different size");
    frames.insert(frames.end(), file.frames.begin(), file.frames.end());
  }
  if (frames.empty()) throw UsageError("no frames in the input corpus");
  const auto dict = build_dictionary(frames);
  write_file_bytes(out, dict.serialize());
  manifest.output(out);
  manifest["frames"] = frames.size();
  manifest.write(out);
  std::cerr << "dictionary from " << frames.size() << " frames written to " << out.string() << '\n';
  return kOk;
}

int cmd_decode(const fs::path& input, const std::string& dict_path, const fs::path& out, const PipelineSettings& s) {
  if (dict_path.empty()) throw UsageError("decode requires --dict");
  RunManifest manifest("decode");
  manifest["config"] = settings_json(s);
  manifest.input(input);
  manifest.input(dict_path);
  const auto [w, h] = pooled_size(s);
  DeframerStats stats;
  const auto frames = deframe_stream(read_file_bytes(input), load_dict(dict_path), w, h, &stats);
  write_frame_file(out, w, h, frames);
  manifest.output(out);
  manifest["deframer"] = {{"packets_ok", stats.packets_ok},
                          {"checksum_failures", stats.checksum_failures},
                          {"resyncs", stats.resyncs},
                          {"bytes_discarded", stats.bytes_discarded}};
  manifest.write(out);
  std::cerr << stats.packets_ok << " packets decoded, " << stats.checksum_failures << " checksum failures, "
            << stats.resyncs << " resyncs, " << stats.bytes_discarded << " bytes discarded\n";
  return kOk;
}

int cmd_train(const fs::path& labels_csv, const fs::path& out, const PipelineSettings& s, TrainConfig tc,
              int frames_per_clip) {
  RunManifest manifest("train");
  manifest["config"] = settings_json(s);
  manifest.seed("train", tc.seed);
  manifest.input(labels_csv);
  std::vector<FilteredFrame> frames;
  std::vector<std::uint8_t> labels;
  std::size_t clips = 0;
  for (const auto& row : read_label_manifest(labels_csv)) {
    if (!row.train) continue;
    ++clips;
    for (auto& f : sample_evenly(frames_for(row.path, s), frames_per_clip)) {
      frames.push_back(std::move(f));
      labels.push_back(row.label ? 1 : 0);
    }
  }
  std::cerr << "training on " << frames.size() << " frames from " << clips << " clips\n";
  TrainLog log;
  DetectorModel model;
  try {
    model = train(frames, labels, tc, &log);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  write_model_file(out, model);
  manifest.output(out);
  manifest["train"] = {{"filters", tc.n_filters},
                       {"kernel", tc.kernel},
                       {"epochs", tc.epochs},
                       {"frames", frames.size()},
                       {"frames_per_clip", frames_per_clip},
                       {"loss", log.epoch_loss}};
  manifest.write(out);
  return kOk;
}

int cmd_detect(const fs::path& input, const fs::path& model_path, const std::string& dict_path,
               const std::string& out, const PipelineSettings& s) {
  RunManifest manifest("detect");
  manifest.input(input);
  manifest.input(model_path);
  const auto model = read_model_file(model_path);

  std::vector<FilteredFrame> frames;
  bool from_packets = false;
  if (!dict_path.empty()) {
    manifest.input(dict_path);
    manifest["config"] = settings_json(s);
    const auto [w, h] = pooled_size(s);
    DeframerStats stats;
    frames = deframe_stream(read_file_bytes(input), load_dict(dict_path), w, h, &stats);
    from_packets = true;
    if (stats.checksum_failures > 0)
      std::cerr << stats.checksum_failures << " packets failed their checksum and were skipped\n";
  } else {
    frames = read_frame_file(input).frames;
  }
  if (!frames.empty() && (frames.front().width() != model.input_width || frames.front().height() != model.input_height))
    throw DimensionMismatch("frames are " + std::to_string(frames.front().width()) + "x" +
                            std::to_string(frames.front().height()) + " but the model expects " +
                            std::to_string(model.input_width) + "x" + std::to_string(model.input_height));

  std::ostringstream lines;
  std::size_t positives = 0;
  char buf[96];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto d = detect(frames[i], model);
    positives += d.decision;
    const unsigned long long when = from_packets ? i : frames[i].emit_time;
    std::snprintf(buf, sizeof buf, "%llu %.6f %d\n", when, d.score, d.decision ? 1 : 0);
    lines << buf;
  }
  std::cout << lines.str();
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw IoError("cannot write " + out);
    f << lines.str();
    manifest.output(out);
    manifest["frames"] = frames.size();
    manifest["positives"] = positives;
    manifest.write(out);
  }
  return kOk;
}

int cmd_bench(const std::string& labels_csv, int n_pos, int n_neg, std::uint64_t seed,
              const std::vector<std::string>& variant_names, const fs::path& out, const PipelineSettings& s,
              TrainConfig tc, int train_per_clip, int test_per_clip) {
  RunManifest manifest("bench");
  manifest["config"] = settings_json(s);
  manifest.seed("train", tc.seed);

  std::vector<AblationSpec> variants;
  try {
    for (const auto& n : variant_names) variants.push_back(parse_variant(n));
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  if (variants.empty()) variants = default_variants();

  std::vector<CorpusClip> corpus;
  if (!labels_csv.empty()) {
    manifest.input(labels_csv);
    for (const auto& row : read_label_manifest(labels_csv)) {
      auto path = row.path;
      auto geometry = s.geometry;
      auto events = load_events(path, geometry);
      const std::uint64_t duration = events.empty() ? 0 : events.back().t + 1;
      corpus.push_back(CorpusClip{[path, geometry] { return load_events(path, geometry); }, duration, row.label,
                                  row.train});
    }
  } else {
    if (n_pos < 1 || n_neg < 1) throw UsageError("--pos and --neg must be at least 1");
    DatasetConfig dc;
    dc.n_pos = n_pos;
    dc.n_neg = n_neg;
    dc.seed = seed;
    dc.geometry = s.geometry;
    manifest.seed("dataset", seed);
    manifest["dataset"] = {{"pos", n_pos}, {"neg", n_neg}};
    corpus = corpus_from_dataset(build_dataset(dc));
  }

  BenchOptions opt;
  opt.base = s.filter;
  opt.geometry = s.geometry;
  opt.train = tc;
  opt.train_frames_per_clip = train_per_clip;
  opt.test_frames_per_clip = test_per_clip;
  opt.progress = [](const std::string& msg) { std::cerr << msg << '\n'; };
  const auto report = run_ablation(corpus, variants, opt);

  fs::create_directories(out);
  const auto csv = report_csv(report);
  const auto svg = report_svg(report);
  write_file_bytes(out / "bench.csv", std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
  write_file_bytes(out / "bench.svg", std::span(reinterpret_cast<const std::uint8_t*>(svg.data()), svg.size()));
  manifest.output(out / "bench.csv");
  manifest.output(out / "bench.svg");
  manifest["events"] = report.events;
  manifest["events_per_second"] = report.events_per_second();
  manifest.write(out);
  std::cout << csv;
  std::cerr << "filter throughput " << static_cast<long long>(report.events_per_second()) << " events/s\n";
  for (const auto& r : report.rows)
    if (!r.ok) std::cerr << r.spec.name << " failed: " << r.error << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Near-chip event filter, packet codec and binary detector"};
  app.set_version_flag("--version", NEARCHIP_VERSION);
  app.require_subcommand(1);

  PipelineFlags pf;
  std::string out;
  std::string dict;
  std::uint64_t seed = 7;

  auto* gen = app.add_subcommand("gen", "generate a labeled synthetic dataset");
  int n_pos = 100, n_neg = 100, edge_width = DatasetConfig{}.edge_width;
  double noise_rate = DatasetConfig{}.noise_rate;
  gen->add_option("--pos", n_pos, "pedestrian clips");
  gen->add_option("--neg", n_neg, "non-pedestrian clips");
  gen->add_option("--seed", seed, "dataset seed");
  gen->add_option("--noise-rate", noise_rate, "impulse noise, events per pixel per second");
  gen->add_option("--edge-width", edge_width, "edge band thickness in pixels");
  gen->add_option("-o,--out", out, "output directory")->required();

  auto* filt = app.add_subcommand("filter", "filter an event file into frames or packets");
  std::string input;
  bool packets = false;
  filt->add_option("input", input, "EVS1 event file")->required();
  filt->add_option("-o,--out", out, "output file (FRM1 frames, or packets with --dict)")->required();
  filt->add_option("--dict", dict, "Huffman dictionary; output becomes a packet stream");
  filt->add_flag("--packets", packets, "require packet output");
  pf.add_to(*filt);

  auto* dic = app.add_subcommand("dict", "build a Huffman dictionary from frame files");
  std::vector<std::string> inputs;
  dic->add_option("inputs", inputs, "FRM1 frame files")->required();
  dic->add_option("-o,--out", out, "dictionary file")->required();

  auto* dec = app.add_subcommand("decode", "deframe a packet stream into frames");
  dec->add_option("input", input, "packet stream")->required();
  dec->add_option("--dict", dict, "Huffman dictionary")->required();
  dec->add_option("-o,--out", out, "FRM1 output")->required();
  pf.add_to(*dec);

  auto* trn = app.add_subcommand("train", "train a detector on the training split of a label manifest");
  std::string labels_csv;
  TrainConfig tc;
  int train_per_clip = BenchOptions{}.train_frames_per_clip;
  int test_per_clip = BenchOptions{}.test_frames_per_clip;
  trn->add_option("labels", labels_csv, "labels.csv (rows point at .evs or .frm files)")->required();
  trn->add_option("-o,--out", out, "model file")->required();
  trn->add_option("--seed", tc.seed, "training seed");
  trn->add_option("--epochs", tc.epochs);
  trn->add_option("--filters", tc.n_filters);
  trn->add_option("--kernel", tc.kernel);
  trn->add_option("--frames-per-clip", train_per_clip, "evenly spaced frames taken per clip (0 = all)");
  pf.add_to(*trn);

  auto* det = app.add_subcommand("detect", "run the detector on frames or packets");
  std::string model_path;
  det->add_option("input", input, "FRM1 frames, or a packet stream with --dict")->required();
  det->add_option("--model", model_path, "BNN1 model")->required();
  det->add_option("--dict", dict, "Huffman dictionary for packet input");
  det->add_option("-o,--out", out, "also write the result lines here");
  pf.add_to(*det);

  auto* ben = app.add_subcommand("bench", "ablation bench: bitrate and F1 per pipeline variant");
  std::vector<std::string> variant_names;
  n_pos = 100;
  n_neg = 100;
  ben->add_option("--labels", labels_csv, "existing dataset manifest (otherwise a dataset is generated)");
  ben->add_option("--pos", n_pos, "generated pedestrian clips");
  ben->add_option("--neg", n_neg, "generated non-pedestrian clips");
  ben->add_option("--seed", seed, "dataset seed");
  ben->add_option("--train-seed", tc.seed, "training seed");
  ben->add_option("--epochs", tc.epochs);
  ben->add_option("--variants", variant_names, "subset of full, co-off, ag-off, mp-4, mp-8, mp-16")->delimiter(',');
  ben->add_option("--train-frames-per-clip", train_per_clip);
  ben->add_option("--test-frames-per-clip", test_per_clip);
  ben->add_option("-o,--out", out, "output directory for bench.csv and bench.svg")->required();
  pf.add_to(*ben);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen(n_pos, n_neg, seed, out, noise_rate, edge_width);
    if (*filt) return cmd_filter(input, out, pf.resolve(), dict, packets);
    if (*dic) return cmd_dict(inputs, out);
    if (*dec) return cmd_decode(input, dict, out, pf.resolve());
    if (*trn) return cmd_train(labels_csv, out, pf.resolve(), tc, train_per_clip);
    if (*det) return cmd_detect(input, model_path, dict, out, pf.resolve());
    if (*ben)
      return cmd_bench(labels_csv, n_pos, n_neg, seed, variant_names, out, pf.resolve(), tc, train_per_clip,
                       test_per_clip);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DimensionMismatch& e) {
    std::cerr << "dimension mismatch: " << e.what() << '\n';
    return kMismatch;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const ParseError& e) {
    std::cerr << "malformed input: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
