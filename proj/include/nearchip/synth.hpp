#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nearchip/events.hpp"

namespace nearchip {

enum class ObjectKind { Pedestrian, Box, None };

const char* to_string(ObjectKind kind) noexcept;

struct SceneSpec {
  SensorGeometry geometry;
  std::uint64_t duration_us = 2'500'000;
  std::uint64_t step_us = 300;  ///< emission time step (tau / 10 at defaults)
  ObjectKind kind = ObjectKind::Pedestrian;
  double start_x = 240.0;  ///< object centre at t = 0, pixels
  double start_y = 160.0;
  double velocity_x = 100.0;  ///< pixels per second
  double velocity_y = 0.0;
  double object_height = 160.0;  ///< pedestrian silhouette height; boxes match its area
  double edge_rate = 1000.0;     ///< events per edge pixel per second (at normal incidence)
  int edge_width = 2;            ///< thickness of the firing band inside the silhouette border, pixels
  double noise_rate = 2.0;       ///< impulse events per pixel per second
  std::uint64_t seed = 1;

  void validate() const;
};

struct LabeledClip {
  std::vector<Event> events;  ///< sorted by (t, y, x)
  bool label = false;         ///< pedestrian present
  SceneSpec spec;
};

/// One boundary pixel of a rasterized shape, relative to the shape centre.
struct EdgePixel {
  int dx;
  int dy;
  double nx;  ///< outward unit normal
  double ny;
};

/// Border band of the object's silhouette: inside pixels with an outside
/// pixel within Chebyshev distance `edge_width` (1 gives the 8-connected
/// outline). Empty for ObjectKind::None.
std::vector<EdgePixel> object_outline(ObjectKind kind, double object_height, int edge_width = 1);

/// Deterministic in `spec.seed`. Edge pixels of the moving silhouette fire
/// Poisson events at edge_rate * |n . v_hat| with POS on the leading and NEG
/// on the trailing side; a static object fires nothing. Background pixels
/// fire uniform impulse noise.
LabeledClip gen_clip(const SceneSpec& spec);

struct DatasetConfig {
  int n_pos = 100;
  int n_neg = 100;
  std::uint64_t seed = 7;
  SensorGeometry geometry;
  std::uint64_t pos_duration_us = 2'500'000;
  std::uint64_t neg_duration_us = 750'000;
  double noise_rate = 2.0;
  double edge_rate = 1000.0;
  int edge_width = 2;
  double min_height_frac = 0.4;  ///< of sensor height
  double max_height_frac = 0.6;
  double min_speed = 60.0;
  double max_speed = 150.0;
  double empty_negative_frac = 0.1;  ///< share of negatives with no object
  double train_frac = 0.8;
};

struct DatasetEntry {
  SceneSpec spec;
  bool label = false;
  bool train = false;
};

/// Clip specs with a seeded 80/20 train/test split. Clips are generated on
/// demand with gen_clip so large corpora need not be held in memory.
struct Dataset {
  std::vector<DatasetEntry> entries;

  std::size_t train_count() const;
  std::size_t test_count() const { return entries.size() - train_count(); }
  std::vector<LabeledClip> materialize() const;
};

/// Throws InvalidArgument unless n_pos, n_neg >= 1.
Dataset build_dataset(const DatasetConfig& config);

/// Writes clip_NNNN.evs files and labels.csv (path,label,seed,split) into `dir`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct ManifestRow {
  std::filesystem::path path;
  bool label = false;
  std::uint64_t seed = 0;
  bool train = true;  ///< rows without a split column count as training data
};

/// Reads a label manifest; relative paths resolve against the manifest's directory.
std::vector<ManifestRow> read_label_manifest(const std::filesystem::path& csv);

}  // namespace nearchip
