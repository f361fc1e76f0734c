#include "nearchip/bnn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "nearchip/error.hpp"
#include "nearchip/events.hpp"

namespace nearchip {

namespace {

std::uint64_t row_mask(int k) { return k >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << k) - 1; }

// Bits [x, x + k) of a packed plane row, as the low k bits of a word.
std::uint64_t row_window(std::span<const std::uint64_t> row, int x, int k) {
  const int word = x >> 6;
  const int shift = x & 63;
  std::uint64_t v = row[word] >> shift;
  if (shift != 0 && static_cast<std::size_t>(word + 1) < row.size()) v |= row[word + 1] << (64 - shift);
  return v & row_mask(k);
}

int rows_per_word(int k) { return 64 / k; }
int groups(int k) { return (k + rows_per_word(k) - 1) / rows_per_word(k); }

}  // namespace

void DetectorModel::validate() const {
  if (n_filters < 1) throw InvalidArgument("model needs at least one filter");
  if (kernel < 1 || kernel > 64) throw InvalidArgument("kernel size must be in [1, 64]");
  if (input_width < kernel || input_height < kernel) throw InvalidArgument("input smaller than the kernel");
  const std::size_t rows = static_cast<std::size_t>(n_filters) * kChannels * kernel;
  if (w_plus.size() != rows || w_minus.size() != rows) throw InvalidArgument("weight mask size mismatch");
  if (alpha.size() != static_cast<std::size_t>(n_filters) || readout.size() != static_cast<std::size_t>(n_filters))
    throw InvalidArgument("alpha/readout size mismatch");
  const std::uint64_t full = row_mask(kernel);
  for (std::size_t i = 0; i < rows; ++i) {
    if (w_plus[i] & w_minus[i]) throw InvalidArgument("positive and negative weight masks overlap");
    if ((w_plus[i] | w_minus[i]) != full) throw InvalidArgument("weight masks do not cover every tap");
  }
  for (std::size_t f = 0; f < alpha.size(); ++f) {
    if (!(alpha[f] > 0.0) || !std::isfinite(alpha[f])) throw InvalidArgument("alpha must be positive and finite");
    if (!std::isfinite(readout[f])) throw InvalidArgument("readout must be finite");
  }
  if (!std::isfinite(bias) || !std::isfinite(threshold)) throw InvalidArgument("bias/threshold must be finite");
}

DetectorModel make_model(int n_filters, int kernel, int input_width, int input_height) {
  DetectorModel m;
  m.n_filters = n_filters;
  m.kernel = kernel;
  m.input_width = input_width;
  m.input_height = input_height;
  const std::size_t rows = static_cast<std::size_t>(n_filters) * DetectorModel::kChannels * kernel;
  m.w_plus.assign(rows, row_mask(kernel));
  m.w_minus.assign(rows, 0);
  m.alpha.assign(n_filters, 1.0);
  m.readout.assign(n_filters, 0.0);
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Packing

PackedInput::PackedInput(const FilteredFrame& frame, int kernel)
    : kernel_(kernel),
      rows_per_word_(rows_per_word(kernel)),
      groups_(groups(kernel)),
      out_w_(frame.width() - kernel + 1),
      out_h_(frame.height() - kernel + 1),
      words_(DetectorModel::kChannels * groups(kernel)) {
  if (out_w_ < 1 || out_h_ < 1) throw DimensionMismatch("frame is smaller than the kernel");
  data_.assign(static_cast<std::size_t>(out_w_) * out_h_ * words_, 0);

  const int H = frame.height();
  std::vector<std::uint64_t> rows(static_cast<std::size_t>(H) * out_w_);
  for (int c = 0; c < DetectorModel::kChannels; ++c) {
    const BitPlane& plane = c == 0 ? frame.h_pooled : frame.v_pooled;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < out_w_; ++x) rows[static_cast<std::size_t>(y) * out_w_ + x] = row_window(plane.row(y), x, kernel);
    for (int oy = 0; oy < out_h_; ++oy) {
      for (int ox = 0; ox < out_w_; ++ox) {
        std::uint64_t* dst = data_.data() + (static_cast<std::size_t>(oy) * out_w_ + ox) * words_ + c * groups_;
        for (int r = 0; r < kernel; ++r) {
          const int g = r / rows_per_word_;
          const int slot = r % rows_per_word_;
          dst[g] |= rows[static_cast<std::size_t>(oy + r) * out_w_ + ox] << (slot * kernel);
        }
      }
    }
  }
}

bool PackedInput::bit(int c, int oy, int ox, int r, int col) const noexcept {
  const std::uint64_t* w = window(oy, ox) + c * groups_ + r / rows_per_word_;
  return (*w >> ((r % rows_per_word_) * kernel_ + col)) & 1u;
}

PackedFilters::PackedFilters(const DetectorModel& model)
    : words_(DetectorModel::kChannels * groups(model.kernel)) {
  const int k = model.kernel;
  const int per = rows_per_word(k);
  const int g_count = groups(k);
  plus_.assign(static_cast<std::size_t>(model.n_filters) * words_, 0);
  minus_.assign(plus_.size(), 0);
  for (int f = 0; f < model.n_filters; ++f) {
    for (int c = 0; c < DetectorModel::kChannels; ++c) {
      for (int r = 0; r < k; ++r) {
        const std::size_t dst = static_cast<std::size_t>(f) * words_ + c * g_count + r / per;
        const int shift = (r % per) * k;
        plus_[dst] |= model.w_plus[model.row_index(f, c, r)] << shift;
        minus_[dst] |= model.w_minus[model.row_index(f, c, r)] << shift;
      }
    }
  }
}

namespace {

inline std::int32_t window_activation(const std::uint64_t* x, const std::uint64_t* plus, const std::uint64_t* minus,
                                      int words) noexcept {
  std::int32_t a = 0;
  for (int j = 0; j < words; ++j) a += std::popcount(x[j] & plus[j]) - std::popcount(x[j] & minus[j]);
  return a;
}

void check_input(const FilteredFrame& frame, const DetectorModel& model) {
  if (frame.width() != model.input_width || frame.height() != model.input_height)
    throw DimensionMismatch("frame is " + std::to_string(frame.width()) + "x" + std::to_string(frame.height()) +
                            " but the model expects " + std::to_string(model.input_width) + "x" +
                            std::to_string(model.input_height));
}

}  // namespace

ActivationMaps binary_conv_forward(const FilteredFrame& frame, const DetectorModel& model) {
  if (frame.width() < model.kernel || frame.height() < model.kernel)
    throw DimensionMismatch("frame is smaller than the kernel");
  const PackedInput input(frame, model.kernel);
  const PackedFilters filters(model);
  ActivationMaps maps{model.n_filters, input.out_height(), input.out_width(), {}};
  maps.values.resize(static_cast<std::size_t>(maps.n_filters) * maps.height * maps.width);
  const int words = filters.words_per_window();
  for (int f = 0; f < model.n_filters; ++f)
    for (int oy = 0; oy < maps.height; ++oy)
      for (int ox = 0; ox < maps.width; ++ox)
        maps.values[(static_cast<std::size_t>(f) * maps.height + oy) * maps.width + ox] =
            window_activation(input.window(oy, ox), filters.plus(f), filters.minus(f), words);
  return maps;
}

std::vector<FilterPeak> filter_peaks(const PackedInput& input, const PackedFilters& filters, int n_filters) {
  std::vector<FilterPeak> peaks(n_filters, FilterPeak{std::numeric_limits<std::int32_t>::min(), 0, 0});
  const int words = filters.words_per_window();
  for (int oy = 0; oy < input.out_height(); ++oy) {
    for (int ox = 0; ox < input.out_width(); ++ox) {
      const std::uint64_t* x = input.window(oy, ox);
      for (int f = 0; f < n_filters; ++f) {
        const std::int32_t a = window_activation(x, filters.plus(f), filters.minus(f), words);
        if (a > peaks[f].activation) peaks[f] = FilterPeak{a, oy, ox};
      }
    }
  }
  return peaks;
}

Detection detect(const FilteredFrame& frame, const DetectorModel& model) {
  check_input(frame, model);
  const PackedInput input(frame, model.kernel);
  const PackedFilters filters(model);
  const auto peaks = filter_peaks(input, filters, model.n_filters);
  Detection d;
  d.filter_max.resize(model.n_filters);
  d.score = model.bias;
  for (int f = 0; f < model.n_filters; ++f) {
    // alpha > 0, so ReLU and the max over offsets commute.
    d.filter_max[f] = model.alpha[f] * static_cast<double>(std::max(0, peaks[f].activation));
    d.score += model.readout[f] * d.filter_max[f];
  }
  d.decision = d.score >= model.threshold;
  return d;
}

DetectorModel binarize(const LatentModel& latent) {
  DetectorModel m;
  m.n_filters = latent.n_filters;
  m.kernel = latent.kernel;
  m.input_width = latent.input_width;
  m.input_height = latent.input_height;
  const int k = latent.kernel;
  const std::size_t rows = static_cast<std::size_t>(m.n_filters) * DetectorModel::kChannels * k;
  m.w_plus.assign(rows, 0);
  m.w_minus.assign(rows, 0);
  m.alpha.assign(m.n_filters, 0.0);
  const std::size_t fs = latent.filter_size();
  for (int f = 0; f < m.n_filters; ++f) {
    double abs_sum = 0.0;
    for (int c = 0; c < DetectorModel::kChannels; ++c) {
      for (int r = 0; r < k; ++r) {
        for (int col = 0; col < k; ++col) {
          const double w = latent.weights[f * fs + (static_cast<std::size_t>(c) * k + r) * k + col];
          abs_sum += std::abs(w);
          (w >= 0.0 ? m.w_plus : m.w_minus)[m.row_index(f, c, r)] |= std::uint64_t{1} << col;
        }
      }
    }
    m.alpha[f] = std::max(abs_sum / static_cast<double>(fs), 1e-12);
  }
  m.readout = latent.readout;
  m.bias = latent.bias;
  return m;
}

// ---------------------------------------------------------------------------
// Model file

namespace {

constexpr char kModelMagic[4] = {'B', 'N', 'N', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw ParseError("truncated model file", bytes_.size());
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const auto* p = take(4);
    return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
  }
  double f64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::size_t pos() const noexcept { return pos_; }
  std::size_t size() const noexcept { return bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::size_t mask_bytes(int k) { return (static_cast<std::size_t>(DetectorModel::kChannels) * k * k + 7) / 8; }

}  // namespace

std::vector<std::uint8_t> encode_model(const DetectorModel& model) {
  model.validate();
  std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
  put_u32(out, static_cast<std::uint32_t>(model.n_filters));
  put_u32(out, static_cast<std::uint32_t>(model.kernel));
  put_u32(out, DetectorModel::kChannels);
  put_u32(out, static_cast<std::uint32_t>(model.input_width));
  put_u32(out, static_cast<std::uint32_t>(model.input_height));
  const int k = model.kernel;
  for (const auto* masks : {&model.w_plus, &model.w_minus}) {
    for (int f = 0; f < model.n_filters; ++f) {
      std::vector<std::uint8_t> packed(mask_bytes(k), 0);
      std::size_t bit = 0;
      for (int c = 0; c < DetectorModel::kChannels; ++c)
        for (int r = 0; r < k; ++r)
          for (int col = 0; col < k; ++col, ++bit)
            if (((*masks)[model.row_index(f, c, r)] >> col) & 1u) packed[bit >> 3] |= std::uint8_t(1u << (bit & 7));
      out.insert(out.end(), packed.begin(), packed.end());
    }
  }
  for (double a : model.alpha) put_f64(out, a);
  for (double r : model.readout) put_f64(out, r);
  put_f64(out, model.bias);
  put_f64(out, model.threshold);
  return out;
}

DetectorModel decode_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0)
    throw ParseError("bad magic, expected \"BNN1\"", 0);
  Reader in(bytes);
  in.take(4);
  DetectorModel m;
  m.n_filters = static_cast<int>(in.u32());
  m.kernel = static_cast<int>(in.u32());
  const auto channels = in.u32();
  m.input_width = static_cast<int>(in.u32());
  m.input_height = static_cast<int>(in.u32());
  if (channels != DetectorModel::kChannels) throw ParseError("model must have 2 input channels", 12);
  if (m.n_filters < 1 || m.n_filters > 1 << 20 || m.kernel < 1 || m.kernel > 64)
    throw ParseError("implausible model dimensions", 4);
  const int k = m.kernel;
  const std::size_t rows = static_cast<std::size_t>(m.n_filters) * DetectorModel::kChannels * k;
  for (auto* masks : {&m.w_plus, &m.w_minus}) {
    masks->assign(rows, 0);
    for (int f = 0; f < m.n_filters; ++f) {
      const auto* p = in.take(mask_bytes(k));
      std::size_t bit = 0;
      for (int c = 0; c < DetectorModel::kChannels; ++c)
        for (int r = 0; r < k; ++r)
          for (int col = 0; col < k; ++col, ++bit)
            if ((p[bit >> 3] >> (bit & 7)) & 1u) (*masks)[m.row_index(f, c, r)] |= std::uint64_t{1} << col;
    }
  }
  m.alpha.resize(m.n_filters);
  m.readout.resize(m.n_filters);
  for (auto& a : m.alpha) a = in.f64();
  for (auto& r : m.readout) r = in.f64();
  m.bias = in.f64();
  m.threshold = in.f64();
  if (in.pos() != in.size()) throw ParseError("trailing bytes after model", in.pos());
  try {
    m.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("invalid model: ") + e.what(), 0);
  }
  return m;
}

void write_model_file(const std::filesystem::path& path, const DetectorModel& model) {
  write_file_bytes(path, encode_model(model));
}

DetectorModel read_model_file(const std::filesystem::path& path) { return decode_model(read_file_bytes(path)); }

}  // namespace nearchip
