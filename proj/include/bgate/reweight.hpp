#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bgate/csv.hpp"
#include "bgate/dataset.hpp"
#include "bgate/dml.hpp"

namespace bgate {

/// (a - b)' cov_inv (a - b); plain squared difference in one dimension.
double mahalanobis_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                            const Eigen::MatrixXd& cov_inv);

/// Expanded row r = level * N + i is unit i placed in moderator group
/// `assigned[r]`; `donor[r]` is the original row whose record it receives.
struct MatchPlan {
  std::vector<int> source_row;
  std::vector<int> assigned;
  std::vector<int> donor;
  std::vector<double> distance;
};

/// Duplicate counts of the units that appear in a rebalanced sample: unit
/// `units[q]` appears 1 + s[q] times.
struct WeightedSample {
  std::vector<int> units;
  std::vector<int> s;
  int q() const { return static_cast<int>(s.size()); }
  /// Effective weights a_q = (1 + s_q) / sum(1 + s).
  std::vector<double> weights() const;
};

struct Rebalanced {
  Dataset data;
  MatchPlan plan;
  WeightedSample sample;
};

/// Duplicates every unit once per moderator level and gives each copy the
/// record of its nearest neighbour on W (Mahalanobis, pseudo-inverse of the
/// full-sample covariance) among units of the copy's level. Ties go to the
/// lowest row index. Requires a binary moderator and nonempty W.
Rebalanced rebalance(const Dataset& data);

/// Sum of squared effective weights for duplicate counts s.
double weighted_variance_factor(std::span<const int> s);

/// Standardized mean difference of column `col` of x between moderator
/// groups 1 and 0.
double standardized_difference(const Dataset& data, int col);

/// Rebalances, estimates the difference of GATEs on the balanced sample and
/// inflates the standard error by sqrt(rows * sum a^2) for the duplicates.
EffectEstimate estimate_delta_bgate_reweighted(const Dataset& data, const EffectTarget& target,
                                               const DmlConfig& cfg,
                                               const NuisanceSource& nuisances);

/// Writes the balanced sample with `source_row` and `weight` columns.
void write_balanced_csv(const std::string& path, const Rebalanced& balanced,
                        const CsvData& original);

}  // namespace bgate
