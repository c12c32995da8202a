#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "bilevel/harness/config.hpp"

namespace bilevel::harness {

struct PresetCell {
  std::string name;
  RunConfig config;
};

const std::vector<std::string>& preset_names();

/// Deterministic grid derived from `base`. Cells at the same grid point share
/// a seed derived from base.run.seed, so sgd/bilevel pairs see identical
/// data, noise and initialization. Throws ConfigError for unknown names.
std::vector<PresetCell> expand_preset(std::string_view name, const RunConfig& base);

}  // namespace bilevel::harness
