#pragma once

#include <filesystem>
#include <istream>
#include <string>

#include "nearchip/events.hpp"
#include "nearchip/filter.hpp"

namespace nearchip {

struct PipelineSettings {
  FilterConfig filter;
  SensorGeometry geometry;
};

// Plain-text key=value config. Blank lines and lines starting with '#' are
// ignored. Recognized keys:
//   tau_us agg_threshold agg_limit pool refractory_us
//   coincidence aggregation (true/false)  trigger (full|pooled)  width height
// Keys not present keep the values already in `settings`.
void apply_config(std::istream& in, PipelineSettings& settings);
void apply_config_file(const std::filesystem::path& path, PipelineSettings& settings);

std::string to_config_text(const PipelineSettings& settings);

}  // namespace nearchip
