#pragma once

#include <span>

#include "json.hpp"

namespace bgate {

/// Common-support diagnostic for a vector of propensities.
struct OverlapReport {
  double min = 0.0;
  double max = 0.0;
  int below_floor = 0;  // values < floor
  int above_ceiling = 0;  // values > 1 - floor
  int violations() const { return below_floor + above_ceiling; }
};

/// Counts propensities outside [floor, 1 - floor]. Never modifies its input.
OverlapReport check_overlap(std::span<const double> propensities, double floor);

nlohmann::json to_json(const OverlapReport& report);

}  // namespace bgate
