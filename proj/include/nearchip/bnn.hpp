#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nearchip/filter.hpp"

namespace nearchip {

/// Binary-weight detector: n_filters k x k x 2 filters with weights in {-1, +1}
/// stored as disjoint positive/negative masks, a positive scale per filter,
/// and a real-valued linear readout.
struct DetectorModel {
  static constexpr int kChannels = 2;  // h, v

  int n_filters = 200;
  int kernel = 10;
  int input_width = 60;
  int input_height = 40;
  /// k-bit row masks, indexed [filter][channel][row]; bit i is column i.
  std::vector<std::uint64_t> w_plus;
  std::vector<std::uint64_t> w_minus;
  std::vector<double> alpha;
  std::vector<double> readout;
  double bias = 0.0;
  double threshold = 0.0;

  std::size_t row_index(int f, int c, int r) const noexcept {
    return (static_cast<std::size_t>(f) * kChannels + c) * kernel + r;
  }
  /// +1 or -1.
  int weight(int f, int c, int r, int col) const noexcept {
    return (w_plus[row_index(f, c, r)] >> col) & 1u ? 1 : -1;
  }
  int out_width() const noexcept { return input_width - kernel + 1; }
  int out_height() const noexcept { return input_height - kernel + 1; }

  /// Throws InvalidArgument if masks overlap or leave gaps, alpha <= 0, or
  /// array sizes are inconsistent.
  void validate() const;

  bool operator==(const DetectorModel&) const = default;
};

/// Model with every weight +1, alpha 1, zero readout.
DetectorModel make_model(int n_filters, int kernel, int input_width, int input_height);

struct ActivationMaps {
  int n_filters = 0;
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> values;  ///< [filter][oy][ox]

  std::int32_t at(int f, int oy, int ox) const noexcept {
    return values[(static_cast<std::size_t>(f) * height + oy) * width + ox];
  }
};

/// Per-frame input packed for popcount evaluation: every k x k x 2 window
/// is stored as a few 64-bit words laid out like the packed filters.
class PackedInput {
 public:
  PackedInput(const FilteredFrame& frame, int kernel);

  int out_width() const noexcept { return out_w_; }
  int out_height() const noexcept { return out_h_; }
  int words_per_window() const noexcept { return words_; }
  const std::uint64_t* window(int oy, int ox) const noexcept {
    return data_.data() + (static_cast<std::size_t>(oy) * out_w_ + ox) * words_;
  }
  /// Input bit of channel c at (x, y) inside the window at (ox, oy).
  bool bit(int c, int oy, int ox, int r, int col) const noexcept;

 private:
  int kernel_;
  int rows_per_word_;
  int groups_;
  int out_w_;
  int out_h_;
  int words_;
  std::vector<std::uint64_t> data_;
};

/// Filter masks repacked to match PackedInput windows.
class PackedFilters {
 public:
  explicit PackedFilters(const DetectorModel& model);

  int words_per_window() const noexcept { return words_; }
  const std::uint64_t* plus(int f) const noexcept { return plus_.data() + static_cast<std::size_t>(f) * words_; }
  const std::uint64_t* minus(int f) const noexcept { return minus_.data() + static_cast<std::size_t>(f) * words_; }

 private:
  int words_;
  std::vector<std::uint64_t> plus_;
  std::vector<std::uint64_t> minus_;
};

/// a(f) = popcount(x & w_plus_f) - popcount(x & w_minus_f) at every valid
/// offset (no padding, stride 1), summed over both channels.
ActivationMaps binary_conv_forward(const FilteredFrame& frame, const DetectorModel& model);

struct FilterPeak {
  std::int32_t activation;  ///< max over offsets of a(f)
  int oy;
  int ox;
};

/// Max activation and its first (row-major) location for every filter.
std::vector<FilterPeak> filter_peaks(const PackedInput& input, const PackedFilters& filters, int n_filters);

struct Detection {
  double score = 0.0;
  bool decision = false;
  std::vector<double> filter_max;  ///< max over offsets of ReLU(alpha * a), per filter
};

/// Throws DimensionMismatch if the frame does not match the model's input size.
Detection detect(const FilteredFrame& frame, const DetectorModel& model);

/// Latent real-valued model used during training.
struct LatentModel {
  int n_filters = 0;
  int kernel = 0;
  int input_width = 0;
  int input_height = 0;
  std::vector<double> weights;  ///< [filter][channel][row][col]
  std::vector<double> readout;
  double bias = 0.0;

  std::size_t filter_size() const noexcept {
    return static_cast<std::size_t>(DetectorModel::kChannels) * kernel * kernel;
  }
};

/// Sign binarization with alpha = mean |w| per filter (clamped to 1e-12).
DetectorModel binarize(const LatentModel& latent);

// "BNN1" model file, little-endian:
//   magic[4] n_filters:u32 kernel:u32 channels:u32 input_width:u32 input_height:u32
//   w_plus, w_minus: per filter ceil(2 k k / 8) bytes each, bits in
//     [channel][row][col] order, LSB-first
//   alpha[n]:f64 readout[n]:f64 bias:f64 threshold:f64
std::vector<std::uint8_t> encode_model(const DetectorModel& model);
DetectorModel decode_model(std::span<const std::uint8_t> bytes);
void write_model_file(const std::filesystem::path& path, const DetectorModel& model);
DetectorModel read_model_file(const std::filesystem::path& path);

}  // namespace nearchip
