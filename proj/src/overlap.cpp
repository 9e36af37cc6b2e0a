#include "bgate/overlap.hpp"

#include <algorithm>
#include <limits>

namespace bgate {

OverlapReport check_overlap(std::span<const double> propensities, double floor) {
  OverlapReport report;
  if (propensities.empty()) return report;
  report.min = std::numeric_limits<double>::infinity();
  report.max = -std::numeric_limits<double>::infinity();
  for (double p : propensities) {
    report.min = std::min(report.min, p);
    report.max = std::max(report.max, p);
    if (p < floor) ++report.below_floor;
    if (p > 1.0 - floor) ++report.above_ceiling;
  }
  return report;
}

nlohmann::json to_json(const OverlapReport& report) {
  return {{"min", report.min},
          {"max", report.max},
          {"below_floor", report.below_floor},
          {"above_ceiling", report.above_ceiling}};
}

}  // namespace bgate
