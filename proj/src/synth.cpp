#include "nearchip/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "nearchip/error.hpp"

namespace nearchip {

const char* to_string(ObjectKind kind) noexcept {
  switch (kind) {
    case ObjectKind::Pedestrian: return "pedestrian";
    case ObjectKind::Box: return "box";
    case ObjectKind::None: return "none";
  }
  return "?";
}

void SceneSpec::validate() const {
  if (geometry.width <= 0 || geometry.height <= 0) throw InvalidArgument("scene geometry must be positive");
  if (step_us == 0) throw InvalidArgument("scene time step must be positive");
  if (!(edge_rate >= 0.0) || !(noise_rate >= 0.0)) throw InvalidArgument("event rates must be non-negative");
  if (edge_width < 1) throw InvalidArgument("edge width must be at least 1");
  if (kind != ObjectKind::None && !(object_height > 0.0)) throw InvalidArgument("object height must be positive");
  if (!std::isfinite(start_x) || !std::isfinite(start_y) || !std::isfinite(velocity_x) || !std::isfinite(velocity_y))
    throw InvalidArgument("trajectory must be finite");
}

namespace {

bool in_ellipse(double x, double y, double cx, double cy, double a, double b) {
  const double u = (x - cx) / a;
  const double v = (y - cy) / b;
  return u * u + v * v <= 1.0;
}

// Silhouettes in local coordinates (y grows downwards), centred near the origin.
bool inside_shape(ObjectKind kind, double h, double x, double y) {
  switch (kind) {
    case ObjectKind::Pedestrian:
      // torso and head stacked; overall width:height about 1:3
      return in_ellipse(x, y, 0.0, 0.125 * h, h / 6.0, 0.375 * h) ||
             in_ellipse(x, y, 0.0, -0.35 * h, 0.08 * h, 0.1 * h);
    case ObjectKind::Box: {
      // same area as the pedestrian silhouette, upright
      const double w = 0.37 * h;
      const double bh = 0.59 * h;
      return std::abs(x) <= w / 2 && std::abs(y) <= bh / 2;
    }
    case ObjectKind::None: return false;
  }
  return false;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

int poisson_small(double exp_neg_lambda, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  int k = 0;
  double p = uni(rng);
  while (p > exp_neg_lambda) {
    ++k;
    p *= uni(rng);
  }
  return k;
}

}  // namespace

std::vector<EdgePixel> object_outline(ObjectKind kind, double object_height, int edge_width) {
  if (edge_width < 1) throw InvalidArgument("edge width must be at least 1");
  std::vector<EdgePixel> out;
  if (kind == ObjectKind::None) return out;
  const int reach = edge_width + 1;
  const int r = static_cast<int>(std::ceil(0.6 * object_height)) + reach + 1;
  const int side = 2 * r + 1;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(side) * side);
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) mask[(y + r) * side + (x + r)] = inside_shape(kind, object_height, x, y);
  auto in = [&](int x, int y) {
    return x >= -r && x <= r && y >= -r && y <= r && mask[(y + r) * side + (x + r)];
  };
  for (int y = -r + reach; y <= r - reach; ++y) {
    for (int x = -r + reach; x <= r - reach; ++x) {
      if (!in(x, y)) continue;
      bool boundary = false;
      for (int dy = -edge_width; dy <= edge_width && !boundary; ++dy)
        for (int dx = -edge_width; dx <= edge_width; ++dx)
          if (!in(x + dx, y + dy)) boundary = true;
      if (!boundary) continue;
      double nx = 0.0, ny = 0.0;
      for (int dy = -reach; dy <= reach; ++dy)
        for (int dx = -reach; dx <= reach; ++dx)
          if (!in(x + dx, y + dy)) {
            nx += dx;
            ny += dy;
          }
      const double norm = std::hypot(nx, ny);
      if (norm < 1e-9) continue;
      out.push_back(EdgePixel{x, y, nx / norm, ny / norm});
    }
  }
  return out;
}

LabeledClip gen_clip(const SceneSpec& spec) {
  spec.validate();
  LabeledClip clip;
  clip.spec = spec;
  clip.label = spec.kind == ObjectKind::Pedestrian;

  std::mt19937_64 rng(splitmix64(spec.seed));
  const auto& g = spec.geometry;
  const double step_s = static_cast<double>(spec.step_us) * 1e-6;

  struct Emitter {
    EdgePixel px;
    double exp_neg_lambda;
    Polarity p;
  };
  std::vector<Emitter> emitters;
  const double speed = std::hypot(spec.velocity_x, spec.velocity_y);
  if (speed > 0.0 && spec.edge_rate > 0.0) {
    for (const auto& px : object_outline(spec.kind, spec.object_height, spec.edge_width)) {
      const double cosv = (px.nx * spec.velocity_x + px.ny * spec.velocity_y) / speed;
      const double lambda = spec.edge_rate * std::abs(cosv) * step_s;
      if (lambda <= 0.0) continue;
      emitters.push_back({px, std::exp(-lambda), cosv > 0 ? Polarity::Pos : Polarity::Neg});
    }
  }

  const double noise_mean = spec.noise_rate * g.width * g.height * step_s;
  std::poisson_distribution<int> noise_count(noise_mean > 0 ? noise_mean : 1.0);
  std::uniform_int_distribution<int> ux(0, g.width - 1);
  std::uniform_int_distribution<int> uy(0, g.height - 1);
  std::bernoulli_distribution coin(0.5);

  std::vector<Event> step_events;
  for (std::uint64_t t0 = 0; t0 < spec.duration_us; t0 += spec.step_us) {
    const std::uint64_t t1 = std::min(spec.duration_us, t0 + spec.step_us);
    std::uniform_int_distribution<std::uint64_t> ut(t0, t1 - 1);
    step_events.clear();

    const double mid_s = (static_cast<double>(t0 + t1) / 2.0) * 1e-6;
    const int cx = static_cast<int>(std::lround(spec.start_x + spec.velocity_x * mid_s));
    const int cy = static_cast<int>(std::lround(spec.start_y + spec.velocity_y * mid_s));
    for (const auto& em : emitters) {
      const int n = poisson_small(em.exp_neg_lambda, rng);
      if (n == 0) continue;
      const int x = cx + em.px.dx;
      const int y = cy + em.px.dy;
      if (!g.contains(x, y)) continue;
      for (int i = 0; i < n; ++i)
        step_events.push_back(Event{ut(rng), static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), em.p});
    }

    if (noise_mean > 0) {
      const int n = noise_count(rng);
      for (int i = 0; i < n; ++i) {
        const auto x = static_cast<std::uint16_t>(ux(rng));
        const auto y = static_cast<std::uint16_t>(uy(rng));
        const Polarity p = coin(rng) ? Polarity::Pos : Polarity::Neg;
        step_events.push_back(Event{ut(rng), x, y, p});
      }
    }

    std::sort(step_events.begin(), step_events.end(), [](const Event& a, const Event& b) {
      if (a.t != b.t) return a.t < b.t;
      if (a.y != b.y) return a.y < b.y;
      if (a.x != b.x) return a.x < b.x;
      return a.p < b.p;
    });
    clip.events.insert(clip.events.end(), step_events.begin(), step_events.end());
  }
  return clip;
}

// ---------------------------------------------------------------------------

std::size_t Dataset::train_count() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.train; }));
}

std::vector<LabeledClip> Dataset::materialize() const {
  std::vector<LabeledClip> clips;
  clips.reserve(entries.size());
  for (const auto& e : entries) clips.push_back(gen_clip(e.spec));
  return clips;
}

Dataset build_dataset(const DatasetConfig& config) {
  if (config.n_pos < 1 || config.n_neg < 1) throw InvalidArgument("dataset needs at least one clip per class");
  if (!(config.min_height_frac > 0) || config.max_height_frac < config.min_height_frac)
    throw InvalidArgument("invalid object height range");
  if (!(config.min_speed >= 0) || config.max_speed < config.min_speed) throw InvalidArgument("invalid speed range");
  if (!(config.train_frac >= 0.0 && config.train_frac <= 1.0)) throw InvalidArgument("train fraction must be in [0, 1]");

  const auto& g = config.geometry;
  Dataset ds;
  const int total = config.n_pos + config.n_neg;
  for (int i = 0; i < total; ++i) {
    const bool positive = i < config.n_pos;
    SceneSpec s;
    s.geometry = g;
    s.seed = splitmix64(config.seed * 0x100000001B3ull + static_cast<std::uint64_t>(i));
    std::mt19937_64 rng(s.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto between = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };

    s.duration_us = positive ? config.pos_duration_us : config.neg_duration_us;
    s.kind = positive ? ObjectKind::Pedestrian : ObjectKind::Box;
    if (!positive && uni(rng) < config.empty_negative_frac) s.kind = ObjectKind::None;
    s.object_height = between(config.min_height_frac, config.max_height_frac) * g.height;
    const double speed = between(config.min_speed, config.max_speed);
    const double dir = uni(rng) < 0.5 ? -1.0 : 1.0;
    s.velocity_x = dir * speed;
    s.velocity_y = between(-0.2, 0.2) * speed;
    const double half_s = static_cast<double>(s.duration_us) * 0.5e-6;
    s.start_x = between(0.35, 0.65) * g.width - s.velocity_x * half_s;
    s.start_y = between(0.4, 0.6) * g.height - s.velocity_y * half_s;
    s.edge_rate = config.edge_rate;
    s.edge_width = config.edge_width;
    s.noise_rate = config.noise_rate;
    ds.entries.push_back(DatasetEntry{s, positive, false});
  }

  std::vector<std::size_t> order(ds.entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(splitmix64(config.seed));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(config.train_frac * static_cast<double>(total)));
  for (std::size_t i = 0; i < n_train; ++i) ds.entries[order[i]].train = true;
  return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "labels.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot create " + (dir / "labels.csv").string());
  csv << "path,label,seed,split\n";
  for (std::size_t i = 0; i < dataset.entries.size(); ++i) {
    const auto& e = dataset.entries[i];
    char name[32];
    std::snprintf(name, sizeof name, "clip_%04zu.evs", i);
    const auto clip = gen_clip(e.spec);
    write_event_file(dir / name, e.spec.geometry, clip.events);
    csv << name << ',' << (e.label ? 1 : 0) << ',' << e.spec.seed << ',' << (e.train ? "train" : "test") << '\n';
  }
  if (!csv) throw IoError("write failed: labels.csv");
}

std::vector<ManifestRow> read_label_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<ManifestRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line.rfind("path", 0) == 0)) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, ',');) cols.push_back(col);
    if (cols.size() < 2) throw ParseError("manifest line " + std::to_string(lineno) + ": expected path,label", 0);
    ManifestRow row;
    row.path = cols[0];
    if (row.path.is_relative()) row.path = path.parent_path() / row.path;
    if (cols[1] != "0" && cols[1] != "1")
      throw ParseError("manifest line " + std::to_string(lineno) + ": label must be 0 or 1", 0);
    row.label = cols[1] == "1";
    if (cols.size() > 2 && !cols[2].empty()) row.seed = std::stoull(cols[2]);
    if (cols.size() > 3) row.train = cols[3] != "test";
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace nearchip
