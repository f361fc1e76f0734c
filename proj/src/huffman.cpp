#include "nearchip/huffman.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <queue>
#include <string>

#include "nearchip/error.hpp"

namespace nearchip {

void BitWriter::write(std::uint32_t code, int length) {
  for (int i = length - 1; i >= 0; --i) {
    if ((bits_ & 7) == 0) bytes_.push_back(0);
    if ((code >> i) & 1u) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (bits_ & 7));
    ++bits_;
  }
}

void BitWriter::align() { bits_ = bytes_.size() * 8; }

// ---------------------------------------------------------------------------

std::vector<int> huffman_code_lengths(std::span<const std::uint64_t> counts) {
  const std::size_t n = counts.size();
  if (n == 0) return {};
  if (n == 1) return {1};

  struct Node {
    std::uint64_t weight;
    std::size_t order;  // leaves: symbol index; internal nodes: n + creation index
  };
  auto heavier = [](const Node& a, const Node& b) {
    return a.weight != b.weight ? a.weight > b.weight : a.order > b.order;
  };
  std::priority_queue<Node, std::vector<Node>, decltype(heavier)> heap(heavier);
  std::vector<std::size_t> parent(2 * n - 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[i] == 0) throw InvalidArgument("symbol counts must be positive");
    heap.push({counts[i], i});
  }
  std::size_t next = n;
  while (heap.size() > 1) {
    const Node a = heap.top();
    heap.pop();
    const Node b = heap.top();
    heap.pop();
    parent[a.order] = next;
    parent[b.order] = next;
    heap.push({a.weight + b.weight, next});
    ++next;
  }
  const std::size_t root = next - 1;
  std::vector<int> depth(2 * n - 1, 0);
  for (std::size_t i = root; i-- > 0;) depth[i] = depth[parent[i]] + 1;
  return {depth.begin(), depth.begin() + static_cast<std::ptrdiff_t>(n)};
}

HuffmanDictionary HuffmanDictionary::uniform() {
  Lengths lengths;
  lengths.fill(8);
  return from_lengths(lengths);
}

HuffmanDictionary HuffmanDictionary::from_lengths(const Lengths& lengths) {
  std::uint64_t kraft = 0;  // in units of 2^-kMaxLength
  for (int s = 0; s < kSymbols; ++s) {
    if (lengths[s] < 1 || lengths[s] > kMaxLength)
      throw InvalidArgument("code length of symbol " + std::to_string(s) + " out of range");
    kraft += std::uint64_t{1} << (kMaxLength - lengths[s]);
  }
  if (kraft != (std::uint64_t{1} << kMaxLength))
    throw InvalidArgument("code lengths do not form a complete prefix code");
  HuffmanDictionary dict;
  dict.lengths_ = lengths;
  dict.assign_canonical_codes();
  return dict;
}

HuffmanDictionary HuffmanDictionary::from_histogram(const Histogram& counts) {
  std::vector<std::uint64_t> scaled(counts.begin(), counts.end());
  for (;;) {
    const auto depths = huffman_code_lengths(scaled);
    if (*std::max_element(depths.begin(), depths.end()) <= kMaxLength) {
      Lengths lengths;
      std::copy(depths.begin(), depths.end(), lengths.begin());
      return from_lengths(lengths);
    }
    // Flatten the distribution until the deepest code fits.
    for (auto& c : scaled) c = std::max<std::uint64_t>(1, c / 2);
  }
}

void HuffmanDictionary::assign_canonical_codes() {
  count_per_length_.fill(0);
  for (auto len : lengths_) ++count_per_length_[len];
  std::array<std::uint8_t, kSymbols> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint8_t a, std::uint8_t b) { return lengths_[a] < lengths_[b]; });
  sorted_symbols_ = order;

  std::uint64_t code = 0;
  int prev_len = lengths_[order[0]];
  for (int i = 0; i < kSymbols; ++i) {
    const int len = lengths_[order[i]];
    code <<= (len - prev_len);
    codes_[order[i]] = static_cast<std::uint32_t>(code);
    ++code;
    prev_len = len;
  }
}

std::optional<std::uint8_t> HuffmanDictionary::decode_symbol(std::span<const std::uint8_t> bytes,
                                                             std::size_t& bit,
                                                             std::size_t bit_limit) const noexcept {
  std::uint64_t code = 0;
  std::uint64_t first = 0;
  std::size_t index = 0;
  std::size_t b = bit;
  for (int len = 1; len <= kMaxLength; ++len) {
    if (b >= bit_limit) return std::nullopt;
    code |= (bytes[b >> 3] >> (7 - (b & 7))) & 1u;
    ++b;
    const std::uint64_t count = count_per_length_[len];
    if (code - first < count) {
      bit = b;
      return sorted_symbols_[index + (code - first)];
    }
    index += count;
    first = (first + count) << 1;
    code <<= 1;
  }
  return std::nullopt;  // unreachable for a complete code
}

std::vector<std::uint8_t> HuffmanDictionary::serialize() const {
  std::vector<std::uint8_t> out(kFileSize);
  std::memcpy(out.data(), kMagic, 4);
  std::copy(lengths_.begin(), lengths_.end(), out.begin() + 4);
  return out;
}

HuffmanDictionary HuffmanDictionary::parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ParseError("bad magic, expected \"HUF1\"", 0);
  if (bytes.size() != kFileSize) throw ParseError("dictionary must hold 256 code lengths", bytes.size());
  Lengths lengths;
  std::copy(bytes.begin() + 4, bytes.end(), lengths.begin());
  try {
    return from_lengths(lengths);
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), 4);
  }
}

// ---------------------------------------------------------------------------

HuffmanDictionary::Histogram payload_histogram(std::span<const FilteredFrame> frames) {
  HuffmanDictionary::Histogram hist{};
  for (const auto& f : frames)
    for (auto b : serialize_payload(f)) ++hist[b];
  return hist;
}

HuffmanDictionary build_dictionary(std::span<const FilteredFrame> frames) {
  if (frames.empty()) throw InvalidArgument("cannot build a dictionary from an empty corpus");
  auto hist = payload_histogram(frames);
  for (auto& c : hist) ++c;
  return HuffmanDictionary::from_histogram(hist);
}

void huffman_encode_bytes(std::span<const std::uint8_t> payload, const HuffmanDictionary& dict, BitWriter& out) {
  for (auto b : payload) out.write(dict.code(b), dict.length(b));
}

BitString huffman_encode(const FilteredFrame& frame, const HuffmanDictionary& dict) {
  BitWriter w;
  huffman_encode_bytes(serialize_payload(frame), dict, w);
  const std::size_t bits = w.bit_count();
  return BitString{std::move(w).take(), bits};
}

FilteredFrame huffman_decode(const BitString& bits, const HuffmanDictionary& dict, int width, int height) {
  const std::size_t symbols = payload_bytes(width, height);
  std::vector<std::uint8_t> payload(symbols);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < symbols; ++i) {
    auto s = dict.decode_symbol(bits.bytes, pos, std::min(bits.bit_count, bits.bytes.size() * 8));
    if (!s)
      throw ParseError("truncated Huffman payload: " + std::to_string(i) + " of " + std::to_string(symbols) +
                           " symbols decoded",
                       pos / 8);
    payload[i] = *s;
  }
  return deserialize_payload(payload, width, height);
}

}  // namespace nearchip
