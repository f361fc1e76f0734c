#include "nearchip/packet.hpp"

#include "nearchip/error.hpp"
#include "nearchip/fletcher.hpp"

namespace nearchip {

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint32_t get_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

}  // namespace

std::vector<std::uint8_t> frame_packet(const FilteredFrame& frame, const HuffmanDictionary& dict) {
  BitWriter payload;
  huffman_encode_bytes(serialize_payload(frame), dict, payload);
  payload.align();
  const auto& body = payload.bytes();

  std::vector<std::uint8_t> out;
  out.reserve(body.size() + 8);
  put_be32(out, kPreamble);
  out.insert(out.end(), body.begin(), body.end());
  put_be32(out, fletcher32(body));
  return out;
}

Deframer::Deframer(HuffmanDictionary dict, int width, int height)
    : dict_(std::move(dict)), width_(width), height_(height), symbols_(payload_bytes(width, height)) {
  if (width <= 0 || height <= 0) throw InvalidArgument("frame dimensions must be positive");
  scratch_.resize(symbols_);
}

void Deframer::discard_to(std::size_t at) {
  if (at > pos_) {
    stats_.bytes_discarded += at - pos_;
    discarding_ = true;
    pos_ = at;
  }
}

Deframer::Step Deframer::try_packet(std::size_t at, std::vector<FilteredFrame>& out) {
  const std::size_t payload_start = at + 4;
  const std::size_t limit = buf_.size() * 8;
  std::size_t bit = payload_start * 8;
  for (std::size_t i = 0; i < symbols_; ++i) {
    auto s = dict_.decode_symbol(buf_, bit, limit);
    if (!s) return Step::NeedMore;
    scratch_[i] = *s;
  }
  const std::size_t payload_end = (bit + 7) / 8;
  if (payload_end + 4 > buf_.size()) return Step::NeedMore;

  const std::span<const std::uint8_t> body(buf_.data() + payload_start, payload_end - payload_start);
  if (fletcher32(body) != get_be32(buf_.data() + payload_end)) {
    ++stats_.checksum_failures;
    discard_to(at + 1);
    return Step::Packet;
  }
  out.push_back(deserialize_payload(scratch_, width_, height_));
  ++stats_.packets_ok;
  pos_ = payload_end + 4;
  return Step::Packet;
}

void Deframer::feed(std::span<const std::uint8_t> bytes, std::vector<FilteredFrame>& out) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
  for (;;) {
    std::size_t at = pos_;
    while (at + 4 <= buf_.size() && get_be32(buf_.data() + at) != kPreamble) ++at;
    if (at + 4 > buf_.size()) {
      // Keep a possible partial preamble at the tail.
      discard_to(buf_.size() >= 3 ? std::max(pos_, buf_.size() - 3) : pos_);
      break;
    }
    discard_to(at);
    if (discarding_) {
      ++stats_.resyncs;
      discarding_ = false;
    }
    if (try_packet(at, out) == Step::NeedMore) break;
  }
  if (pos_ > 4096) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
}

void Deframer::finish() {
  stats_.bytes_discarded += buf_.size() - pos_;
  buf_.clear();
  pos_ = 0;
  discarding_ = false;
}

std::vector<FilteredFrame> deframe_stream(std::span<const std::uint8_t> bytes, const HuffmanDictionary& dict,
                                          int width, int height, DeframerStats* stats) {
  Deframer d(dict, width, height);
  std::vector<FilteredFrame> out;
  d.feed(bytes, out);
  d.finish();
  if (stats) *stats = d.stats();
  return out;
}

}  // namespace nearchip
