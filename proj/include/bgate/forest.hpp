#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace bgate {

/// Random forest hyperparameters. `features_per_split == 0` selects the usual
/// default: ceil(p/3) for regression, ceil(sqrt(p)) for classification. Values
/// above p are clamped to p.
struct ForestConfig {
  int n_trees = 1000;
  int max_depth = 20;
  int min_leaf = 5;
  int features_per_split = 0;
  bool bootstrap = true;
  std::uint64_t seed = 0;

  bool operator==(const ForestConfig&) const = default;
};

nlohmann::json to_json(const ForestConfig& cfg);
/// Reads the keys present in `j` on top of `base`.
ForestConfig forest_config_from_json(const nlohmann::json& j, ForestConfig base = {});
void validate(const ForestConfig& cfg);

enum class ForestMode { regression, probability };

/// A fitted forest of CART trees. Regression forests average leaf means;
/// probability forests average leaf class frequencies. Immutable after fitting
/// and safe to query concurrently.
class Forest {
 public:
  ForestMode mode() const { return mode_; }
  int n_features() const { return n_features_; }
  int n_classes() const { return n_classes_; }
  int n_trees() const { return static_cast<int>(trees_.size()); }

  /// Regression predictions (rows of x are query points).
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
  /// Class probabilities, one column per class; rows sum to one.
  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& x) const;

 private:
  friend Forest fit_regression_forest(const Eigen::MatrixXd&, const Eigen::VectorXd&,
                                      const ForestConfig&);
  friend Forest fit_probability_forest(const Eigen::MatrixXd&, std::span<const int>, int,
                                       const ForestConfig&);

  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int value = 0;  // offset into Tree::values
  };
  struct Tree {
    std::vector<Node> nodes;
    std::vector<double> values;
  };

  const double* leaf_values(const Tree& tree, const Eigen::MatrixXd& x, Eigen::Index row) const;

  ForestMode mode_ = ForestMode::regression;
  int n_features_ = 0;
  int n_classes_ = 1;
  std::vector<Tree> trees_;
};

/// CART regression forest with variance-reduction splits. Inputs with fewer
/// than 2 * min_leaf rows, or without any usable split, yield constant trees.
Forest fit_regression_forest(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                             const ForestConfig& cfg);

/// CART classification forest with Gini splits over labels 0..n_classes-1.
/// Throws DataError when fewer than two distinct labels are present.
Forest fit_probability_forest(const Eigen::MatrixXd& features, std::span<const int> labels,
                              int n_classes, const ForestConfig& cfg);

}  // namespace bgate
