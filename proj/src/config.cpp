#include "nearchip/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "nearchip/error.hpp"

namespace nearchip {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw InvalidArgument("config key '" + key + "': bad number '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw InvalidArgument("config key '" + key + "': expected a boolean, got '" + value + "'");
}

}  // namespace

void apply_config(std::istream& in, PipelineSettings& s) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "tau_us") s.filter.tau_us = parse_number<std::uint64_t>(key, value);
    else if (key == "agg_threshold") s.filter.agg_event_threshold = parse_number<std::uint64_t>(key, value);
    else if (key == "agg_limit") s.filter.agg_window_limit = parse_number<std::uint32_t>(key, value);
    else if (key == "pool") s.filter.pool = parse_number<int>(key, value);
    else if (key == "refractory_us") s.filter.refractory_us = parse_number<std::uint64_t>(key, value);
    else if (key == "coincidence") s.filter.coincidence = parse_bool(key, value);
    else if (key == "aggregation") s.filter.aggregation = parse_bool(key, value);
    else if (key == "trigger") {
      if (value == "full") s.filter.trigger = TriggerCount::FullResolution;
      else if (value == "pooled") s.filter.trigger = TriggerCount::PooledBlocks;
      else throw InvalidArgument("config key 'trigger': expected full or pooled");
    } else if (key == "width") s.geometry.width = parse_number<int>(key, value);
    else if (key == "height") s.geometry.height = parse_number<int>(key, value);
    else throw InvalidArgument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
}

void apply_config_file(const std::filesystem::path& path, PipelineSettings& settings) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  apply_config(in, settings);
}

std::string to_config_text(const PipelineSettings& s) {
  std::ostringstream out;
  out << "tau_us=" << s.filter.tau_us << '\n'
      << "agg_threshold=" << s.filter.agg_event_threshold << '\n'
      << "agg_limit=" << s.filter.agg_window_limit << '\n'
      << "pool=" << s.filter.pool << '\n'
      << "refractory_us=" << s.filter.refractory_us << '\n'
      << "coincidence=" << (s.filter.coincidence ? "true" : "false") << '\n'
      << "aggregation=" << (s.filter.aggregation ? "true" : "false") << '\n'
      << "trigger=" << (s.filter.trigger == TriggerCount::PooledBlocks ? "pooled" : "full") << '\n'
      << "width=" << s.geometry.width << '\n'
      << "height=" << s.geometry.height << '\n';
  return out.str();
}

}  // namespace nearchip
