#pragma once

// Hand-rolled generators and brute-force oracles shared by the test binaries.
// The oracles are written from the format/algorithm definitions and never
// call the library routine they check.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "nearchip/bitplane.hpp"
#include "nearchip/events.hpp"
#include "nearchip/filter.hpp"

namespace testsupport {

using Rng = std::mt19937_64;

inline std::vector<nearchip::Event> random_events(Rng& rng, const nearchip::SensorGeometry& g, std::size_t n,
                                                  std::uint64_t t_max) {
  std::uniform_int_distribution<std::uint64_t> ut(0, t_max);
  std::uniform_int_distribution<int> ux(0, g.width - 1), uy(0, g.height - 1), up(0, 1);
  std::vector<nearchip::Event> ev(n);
  for (auto& e : ev) {
    e.t = ut(rng);
    e.x = static_cast<std::uint16_t>(ux(rng));
    e.y = static_cast<std::uint16_t>(uy(rng));
    e.p = up(rng) ? nearchip::Polarity::Pos : nearchip::Polarity::Neg;
  }
  return ev;
}

/// Sorted by (t, y) as the grouped encoder requires.
inline void sort_ty(std::vector<nearchip::Event>& ev) {
  std::stable_sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
    return a.t != b.t ? a.t < b.t : a.y < b.y;
  });
}

inline nearchip::BitPlane random_plane(Rng& rng, int w, int h, double density) {
  nearchip::BitPlane p(w, h);
  std::bernoulli_distribution bit(density);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (bit(rng)) p.set(x, y);
  return p;
}

inline nearchip::FilteredFrame random_frame(Rng& rng, int w = 60, int h = 40, double density = 0.1) {
  nearchip::FilteredFrame f;
  f.h_pooled = random_plane(rng, w, h, density);
  f.v_pooled = random_plane(rng, w, h, density);
  return f;
}

inline nearchip::FilteredFrame zero_frame(int w = 60, int h = 40) {
  return nearchip::FilteredFrame{nearchip::BitPlane(w, h), nearchip::BitPlane(w, h), 0, 0};
}

/// Fletcher-32 from the recurrence: one 16-bit LE word at a time, modulo after every add.
inline std::uint32_t fletcher32_reference(const std::vector<std::uint8_t>& data) {
  std::uint32_t a = 0, b = 0;
  for (std::size_t i = 0; i < data.size(); i += 2) {
    const std::uint32_t lo = data[i];
    const std::uint32_t hi = i + 1 < data.size() ? data[i + 1] : 0;
    a = (a + (lo | (hi << 8))) % 65535;
    b = (b + a) % 65535;
  }
  return (b << 16) | a;
}

/// Pixel-by-pixel coincidence: h(x,y) needs the same polarity at (x+1,y), v at (x,y+1).
inline std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> coincidence_oracle(
    const std::vector<std::uint8_t>& cells, int w, int h) {
  std::vector<std::uint8_t> ho(cells.size(), 0), vo(cells.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto c = cells[y * w + x];
      if (x + 1 < w && (c & cells[y * w + x + 1])) ho[y * w + x] = 1;
      if (y + 1 < h && (c & cells[(y + 1) * w + x])) vo[y * w + x] = 1;
    }
  return {ho, vo};
}

inline nearchip::BitPlane pool_oracle(const nearchip::BitPlane& p, int pool) {
  nearchip::BitPlane out(p.width() / pool, p.height() / pool);
  for (int y = 0; y < p.height(); ++y)
    for (int x = 0; x < p.width(); ++x)
      if (p.get(x, y) && x / pool < out.width() && y / pool < out.height()) out.set(x / pool, y / pool);
  return out;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("nearchip_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsupport
