#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bgate/dataset.hpp"
#include "bgate/forest.hpp"
#include "json.hpp"

namespace bgate {

/// Supplies the nuisance functions the estimators need. Every method fits on
/// the `train` rows of `data` and predicts at the `eval` rows. Implementations
/// must be safe to call concurrently.
class NuisanceSource {
 public:
  virtual ~NuisanceSource() = default;

  /// E[Y | D = d, Z, X], trained on the rows of `train` with treatment d.
  virtual Eigen::VectorXd outcome(const Dataset& data, std::span<const int> train, int d,
                                  std::span<const int> eval, std::uint64_t seed) const = 0;
  /// P(D = level | Z, X); one column per treatment level.
  virtual Eigen::MatrixXd treatment_propensity(const Dataset& data, std::span<const int> train,
                                               std::span<const int> eval,
                                               std::uint64_t seed) const = 0;
  /// E[delta | Z = z, W], trained on the rows of `train` with moderator z.
  /// `delta` is indexed by row of `data`.
  virtual Eigen::VectorXd pseudo_outcome_regression(const Dataset& data,
                                                    const Eigen::VectorXd& delta,
                                                    std::span<const int> train, int z,
                                                    std::span<const int> eval,
                                                    std::uint64_t seed) const = 0;
  /// P(Z = level | W); one column per moderator level.
  virtual Eigen::MatrixXd moderator_propensity(const Dataset& data, std::span<const int> train,
                                               std::span<const int> eval,
                                               std::uint64_t seed) const = 0;
  /// E[Y | D = d, Z = z, X], trained inside the (d, z) cell.
  virtual Eigen::VectorXd cell_outcome(const Dataset& data, std::span<const int> train, int d,
                                       int z, std::span<const int> eval,
                                       std::uint64_t seed) const = 0;
  /// P(D = d, Z = z | X); column cell_code(d, z).
  virtual Eigen::MatrixXd joint_propensity(const Dataset& data, std::span<const int> train,
                                           std::span<const int> eval,
                                           std::uint64_t seed) const = 0;
  /// P(Z = level | X).
  virtual Eigen::MatrixXd moderator_propensity_x(const Dataset& data, std::span<const int> train,
                                                 std::span<const int> eval,
                                                 std::uint64_t seed) const = 0;

  /// Source for a derived dataset whose row r was copied from row
  /// `source_rows[r]` of the dataset this source describes. Learned sources
  /// return a copy of themselves.
  virtual std::unique_ptr<NuisanceSource> for_rows(std::vector<int> source_rows) const = 0;
};

/// Forest settings per nuisance role. Level-specific entries override the
/// role default.
struct ForestSet {
  ForestConfig mu;
  std::map<int, ForestConfig> mu_by_level;
  ForestConfig pi;
  ForestConfig g{1000, 2, 50, 0, true, 0};
  std::map<int, ForestConfig> g_by_level;
  ForestConfig lambda{1000, 2, 50, 0, true, 0};
  ForestConfig omega;
  ForestConfig lambda_x;

  ForestConfig mu_for(int d) const;
  ForestConfig g_for(int z) const;
  /// Sets n_trees on every role.
  void set_trees(int n_trees);
};

nlohmann::json to_json(const ForestSet& set);
/// Keys: mu, mu_by_level {"<level>": cfg}, pi, g, g_by_level, lambda, omega,
/// lambda_x. Missing keys keep the values of `base`.
ForestSet forest_set_from_json(const nlohmann::json& j, ForestSet base = {});

/// Random-forest nuisances. Outcome and treatment models use (Z, X); second
/// stage models use W only (constant predictions when W is empty); cell and
/// joint models use X.
class ForestNuisance : public NuisanceSource {
 public:
  explicit ForestNuisance(ForestSet set = {}) : set_(std::move(set)) {}

  const ForestSet& forests() const { return set_; }

  Eigen::VectorXd outcome(const Dataset& data, std::span<const int> train, int d,
                          std::span<const int> eval, std::uint64_t seed) const override;
  Eigen::MatrixXd treatment_propensity(const Dataset& data, std::span<const int> train,
                                       std::span<const int> eval,
                                       std::uint64_t seed) const override;
  Eigen::VectorXd pseudo_outcome_regression(const Dataset& data, const Eigen::VectorXd& delta,
                                            std::span<const int> train, int z,
                                            std::span<const int> eval,
                                            std::uint64_t seed) const override;
  Eigen::MatrixXd moderator_propensity(const Dataset& data, std::span<const int> train,
                                       std::span<const int> eval,
                                       std::uint64_t seed) const override;
  Eigen::VectorXd cell_outcome(const Dataset& data, std::span<const int> train, int d, int z,
                               std::span<const int> eval, std::uint64_t seed) const override;
  Eigen::MatrixXd joint_propensity(const Dataset& data, std::span<const int> train,
                                   std::span<const int> eval, std::uint64_t seed) const override;
  Eigen::MatrixXd moderator_propensity_x(const Dataset& data, std::span<const int> train,
                                         std::span<const int> eval,
                                         std::uint64_t seed) const override;
  std::unique_ptr<NuisanceSource> for_rows(std::vector<int> source_rows) const override;

 private:
  ForestSet set_;
};

}  // namespace bgate
