#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bgate {

/// Raised when input data or configuration violates a documented contract.
class DataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an estimation step cannot be carried out on otherwise valid data
/// (empty cells inside a fold, diverging training, ...).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Observational data: outcome y, discrete treatment d (codes 0..m), discrete
/// moderator z (codes 0..v), covariates x (N x p) and the balancing subset W
/// given as column indices into x.
struct Dataset {
  Eigen::VectorXd y;
  std::vector<int> d;
  std::vector<int> z;
  Eigen::MatrixXd x;
  std::vector<int> w_cols;
  std::vector<std::string> covariate_names;
  int treat_levels = 0;
  int moderator_levels = 0;

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(x.cols()); }

  /// Balancing variables W as an N x |W| matrix.
  Eigen::MatrixXd balancing() const;
  /// First-stage features: moderator code followed by all covariates.
  Eigen::MatrixXd moderator_and_covariates() const;
};

/// Builds a dataset, derives the level counts and checks every invariant.
/// Throws DataError on violation.
Dataset make_dataset(Eigen::VectorXd y, std::vector<int> d, std::vector<int> z,
                     Eigen::MatrixXd x, std::vector<int> w_cols = {},
                     std::vector<std::string> covariate_names = {});

/// Re-checks the invariants of an already constructed dataset.
void validate(const Dataset& data);

/// Same data with a different balancing set.
Dataset with_balancing(Dataset data, std::vector<int> w_cols);

/// Row selection helpers.
Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, std::span<const int> rows);
Eigen::VectorXd gather(const Eigen::VectorXd& v, std::span<const int> rows);
std::vector<int> gather(const std::vector<int>& v, std::span<const int> rows);

/// Rows of `rows` whose label equals `level`.
std::vector<int> rows_with(const std::vector<int>& labels, std::span<const int> rows, int level);

std::vector<int> iota_rows(int n);

}  // namespace bgate
