#include "bgate/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace bgate {

namespace {

int count_levels(const std::vector<int>& codes, const char* what) {
  int max_code = -1;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] < 0) {
      std::ostringstream msg;
      msg << what << " code at row " << i << " is negative";
      throw DataError(msg.str());
    }
    max_code = std::max(max_code, codes[i]);
  }
  std::vector<int> seen(static_cast<std::size_t>(max_code + 1), 0);
  for (int c : codes) seen[c] = 1;
  for (int level = 0; level <= max_code; ++level) {
    if (!seen[level]) {
      std::ostringstream msg;
      msg << what << " level " << level << " has zero observations";
      throw DataError(msg.str());
    }
  }
  return max_code + 1;
}

}  // namespace

Eigen::MatrixXd Dataset::balancing() const {
  Eigen::MatrixXd w(n(), static_cast<Eigen::Index>(w_cols.size()));
  for (std::size_t c = 0; c < w_cols.size(); ++c) w.col(c) = x.col(w_cols[c]);
  return w;
}

Eigen::MatrixXd Dataset::moderator_and_covariates() const {
  Eigen::MatrixXd f(n(), p() + 1);
  for (int i = 0; i < n(); ++i) f(i, 0) = z[i];
  f.rightCols(p()) = x;
  return f;
}

void validate(const Dataset& data) {
  const auto n = static_cast<std::size_t>(data.y.size());
  if (n == 0) throw DataError("dataset is empty");
  if (data.d.size() != n || data.z.size() != n || static_cast<std::size_t>(data.x.rows()) != n) {
    throw DataError("outcome, treatment, moderator and covariates must have the same length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(data.y[i])) {
      throw DataError("non-finite outcome at row " + std::to_string(i));
    }
    for (int c = 0; c < data.x.cols(); ++c) {
      if (!std::isfinite(data.x(i, c))) {
        throw DataError("non-finite covariate at row " + std::to_string(i) + ", column " +
                        std::to_string(c));
      }
    }
  }
  std::set<int> cols;
  for (int c : data.w_cols) {
    if (c < 0 || c >= data.x.cols()) {
      throw DataError("balancing column index " + std::to_string(c) + " out of range");
    }
    if (!cols.insert(c).second) {
      throw DataError("balancing column " + std::to_string(c) + " listed twice");
    }
  }
  if (count_levels(data.d, "treatment") != data.treat_levels ||
      count_levels(data.z, "moderator") != data.moderator_levels) {
    throw DataError("stored level counts do not match the data");
  }
  if (!data.covariate_names.empty() &&
      data.covariate_names.size() != static_cast<std::size_t>(data.x.cols())) {
    throw DataError("covariate name count does not match covariate columns");
  }
}

Dataset make_dataset(Eigen::VectorXd y, std::vector<int> d, std::vector<int> z,
                     Eigen::MatrixXd x, std::vector<int> w_cols,
                     std::vector<std::string> covariate_names) {
  Dataset data;
  data.y = std::move(y);
  data.d = std::move(d);
  data.z = std::move(z);
  data.x = std::move(x);
  data.w_cols = std::move(w_cols);
  data.covariate_names = std::move(covariate_names);
  if (data.y.size() == 0) throw DataError("dataset is empty");
  data.treat_levels = count_levels(data.d, "treatment");
  data.moderator_levels = count_levels(data.z, "moderator");
  validate(data);
  return data;
}

Dataset with_balancing(Dataset data, std::vector<int> w_cols) {
  data.w_cols = std::move(w_cols);
  validate(data);
  return data;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, std::span<const int> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (std::size_t r = 0; r < rows.size(); ++r) out(r, c) = m(rows[r], c);
  }
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, std::span<const int> rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out[r] = v[rows[r]];
  return out;
}

std::vector<int> gather(const std::vector<int>& v, std::span<const int> rows) {
  std::vector<int> out(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) out[r] = v[rows[r]];
  return out;
}

std::vector<int> rows_with(const std::vector<int>& labels, std::span<const int> rows, int level) {
  std::vector<int> out;
  for (int r : rows) {
    if (labels[r] == level) out.push_back(r);
  }
  return out;
}

std::vector<int> iota_rows(int n) {
  std::vector<int> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

}  // namespace bgate
