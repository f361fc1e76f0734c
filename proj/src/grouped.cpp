#include "nearchip/grouped.hpp"

#include <algorithm>
#include <string>

#include "nearchip/error.hpp"

namespace nearchip {

namespace {

void append_headers(std::vector<std::uint32_t>& out, std::uint32_t y, std::uint64_t delta) {
  while (delta > grouped::kMaxDelta) {
    out.push_back(grouped::header_word(y, grouped::kMaxDelta));
    delta -= grouped::kMaxDelta;
  }
  out.push_back(grouped::header_word(y, static_cast<std::uint32_t>(delta)));
}

std::uint64_t header_count(std::uint64_t delta) {
  return 1 + (delta == 0 ? 0 : (delta - 1) / grouped::kMaxDelta);
}

}  // namespace

std::vector<std::uint32_t> encode_grouped(std::span<const Event> events) {
  std::vector<std::uint32_t> out;
  out.reserve(events.size() * 2);
  std::uint64_t last_header_t = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.x > grouped::kMaxCoord || e.y > grouped::kMaxCoord)
      throw InvalidArgument("event " + std::to_string(i) + " does not fit the 9-bit address field");
    const bool new_group = i == 0 || e.t != events[i - 1].t || e.y != events[i - 1].y;
    if (i > 0 && (e.t < events[i - 1].t || (e.t == events[i - 1].t && e.y < events[i - 1].y)))
      throw InvalidArgument("event " + std::to_string(i) + " breaks (t, y) ordering");
    if (new_group) {
      append_headers(out, e.y, e.t - last_header_t);
      last_header_t = e.t;
    }
    out.push_back(grouped::event_word(e.x, e.p));
  }
  return out;
}

std::uint64_t grouped_word_count(std::span<const Event> events) {
  std::uint64_t words = events.size();
  std::uint64_t last_header_t = 0;
  std::vector<std::uint16_t> rows;
  std::size_t i = 0;
  while (i < events.size()) {
    const std::uint64_t t = events[i].t;
    if (i > 0 && t < events[i - 1].t)
      throw InvalidArgument("event " + std::to_string(i) + " has a decreasing timestamp");
    rows.clear();
    std::size_t j = i;
    for (; j < events.size() && events[j].t == t; ++j) rows.push_back(events[j].y);
    std::sort(rows.begin(), rows.end());
    const auto groups = static_cast<std::uint64_t>(std::unique(rows.begin(), rows.end()) - rows.begin());
    words += header_count(t - last_header_t) + (groups - 1);
    last_header_t = t;
    i = j;
  }
  return words;
}

GroupedParser::GroupedParser(std::size_t fifo_capacity) : fifo_(fifo_capacity) {
  if (fifo_capacity == 0) throw InvalidArgument("FIFO capacity must be positive");
}

bool GroupedParser::push(std::uint32_t word) {
  ++stats_.words_received;
  if (size_ == fifo_.size()) {
    ++stats_.overflow_dropped;
    return false;
  }
  fifo_[(head_ + size_) % fifo_.size()] = word;
  ++size_;
  return true;
}

std::size_t GroupedParser::drain(std::vector<Event>& out, std::size_t max_words) {
  std::size_t n = 0;
  while (size_ > 0 && n < max_words) {
    const std::uint32_t word = fifo_[head_];
    head_ = (head_ + 1) % fifo_.size();
    --size_;
    ++n;
    decode(word, out);
  }
  return n;
}

void GroupedParser::decode(std::uint32_t word, std::vector<Event>& out) {
  if (grouped::is_header(word)) {
    synced_ = true;
    t_ += grouped::delta(word);
    y_ = static_cast<std::uint16_t>(grouped::coord(word));
    return;
  }
  if (!synced_) {
    ++stats_.discarded_before_sync;
    return;
  }
  const auto code = grouped::polarity_code(word);
  if (code != static_cast<std::uint32_t>(Polarity::Pos) && code != static_cast<std::uint32_t>(Polarity::Neg)) {
    ++stats_.malformed_words;
    return;
  }
  out.push_back(Event{t_, static_cast<std::uint16_t>(grouped::coord(word)), y_, static_cast<Polarity>(code)});
  ++stats_.events_decoded;
}

std::vector<Event> parse_grouped(std::span<const std::uint32_t> words, std::size_t fifo_capacity,
                                 ParserStats* stats) {
  GroupedParser parser(fifo_capacity);
  std::vector<Event> out;
  out.reserve(words.size());
  for (auto w : words) {
    parser.push(w);
    parser.drain(out);
  }
  if (stats) *stats = parser.stats();
  return out;
}

}  // namespace nearchip
