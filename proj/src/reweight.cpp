#include "bgate/reweight.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace bgate {

double mahalanobis_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                            const Eigen::MatrixXd& cov_inv) {
  if (a.size() != b.size()) throw DataError("mahalanobis_distance: dimension mismatch");
  const Eigen::VectorXd diff = a - b;
  if (diff.size() == 1) return diff[0] * diff[0];
  if (cov_inv.rows() != diff.size() || cov_inv.cols() != diff.size()) {
    throw DataError("mahalanobis_distance: covariance dimension mismatch");
  }
  return diff.dot(cov_inv * diff);
}

std::vector<double> WeightedSample::weights() const {
  double total = 0.0;
  for (int si : s) total += 1.0 + si;
  std::vector<double> a;
  a.reserve(s.size());
  for (int si : s) a.push_back((1.0 + si) / total);
  return a;
}

double weighted_variance_factor(std::span<const int> s) {
  if (s.empty()) throw DataError("weighted_variance_factor needs at least one unit");
  // Integer numerator and denominator, one final rounding.
  long double total = 0, squares = 0;
  for (int si : s) {
    if (si < 0) throw DataError("duplicate counts must be nonnegative");
    const long double c = 1.0L + si;
    total += c;
    squares += c * c;
  }
  return static_cast<double>(squares / (total * total));
}

Rebalanced rebalance(const Dataset& data) {
  if (data.moderator_levels != 2) throw DataError("rebalancing needs a binary moderator");
  if (data.w_cols.empty()) throw DataError("rebalancing needs balancing variables");
  const int n = data.n();
  const Eigen::MatrixXd w = data.balancing();
  const auto dim = w.cols();

  // Whitened coordinates: squared Euclidean distance between rows of `v`
  // equals the Mahalanobis distance under the pseudo-inverse covariance.
  Eigen::MatrixXd v = w;
  if (dim > 1) {
    const Eigen::MatrixXd centered = w.rowwise() - w.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / std::max(1, n - 1);
    const Eigen::MatrixXd cov_inv = cov.completeOrthogonalDecomposition().pseudoInverse();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (cov_inv + cov_inv.transpose()));
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    v = w * eig.eigenvectors() * root.asDiagonal();
  }
  const Eigen::MatrixXd vt = v.transpose();

  std::vector<std::vector<int>> strata(2);
  for (int i = 0; i < n; ++i) strata[data.z[i]].push_back(i);
  for (const auto& s : strata) {
    if (s.empty()) throw DataError("a moderator group is empty");
  }

  Rebalanced out;
  auto& plan = out.plan;
  const int rows = 2 * n;
  plan.source_row.resize(rows);
  plan.assigned.resize(rows);
  plan.donor.resize(rows);
  plan.distance.resize(rows);
  for (int level = 0; level < 2; ++level) {
    for (int i = 0; i < n; ++i) {
      const int r = level * n + i;
      const double* vi = vt.col(i).data();
      double best = std::numeric_limits<double>::infinity();
      int donor = -1;
      for (int j : strata[level]) {
        const double* vj = vt.col(j).data();
        double dist = 0.0;
        for (Eigen::Index c = 0; c < dim; ++c) dist += (vi[c] - vj[c]) * (vi[c] - vj[c]);
        if (dist < best) {
          best = dist;
          donor = j;
        }
      }
      plan.source_row[r] = i;
      plan.assigned[r] = level;
      plan.donor[r] = donor;
      plan.distance[r] = best;
    }
  }

  std::vector<int> usage(static_cast<std::size_t>(n), 0);
  for (int j : plan.donor) ++usage[j];
  for (int i = 0; i < n; ++i) {
    if (usage[i] > 0) {
      out.sample.units.push_back(i);
      out.sample.s.push_back(usage[i] - 1);
    }
  }

  Eigen::VectorXd y(rows);
  std::vector<int> d(rows), z(rows);
  Eigen::MatrixXd x(rows, data.p());
  for (int r = 0; r < rows; ++r) {
    const int j = plan.donor[r];
    y[r] = data.y[j];
    d[r] = data.d[j];
    z[r] = data.z[j];
    x.row(r) = data.x.row(j);
  }
  out.data = make_dataset(std::move(y), std::move(d), std::move(z), std::move(x), data.w_cols,
                          data.covariate_names);
  return out;
}

double standardized_difference(const Dataset& data, int col) {
  double s[2] = {0, 0}, ss[2] = {0, 0}, c[2] = {0, 0};
  for (int i = 0; i < data.n(); ++i) {
    const int g = data.z[i] == 1 ? 1 : 0;
    const double v = data.x(i, col);
    s[g] += v;
    ss[g] += v * v;
    c[g] += 1.0;
  }
  if (c[0] < 2 || c[1] < 2) throw DataError("standardized difference needs two units per group");
  const double m0 = s[0] / c[0], m1 = s[1] / c[1];
  const double v0 = (ss[0] - c[0] * m0 * m0) / (c[0] - 1);
  const double v1 = (ss[1] - c[1] * m1 * m1) / (c[1] - 1);
  const double pooled = std::sqrt(0.5 * (v0 + v1));
  return pooled > 0.0 ? (m1 - m0) / pooled : 0.0;
}

EffectEstimate estimate_delta_bgate_reweighted(const Dataset& data, const EffectTarget& target,
                                               const DmlConfig& cfg,
                                               const NuisanceSource& nuisances) {
  if (target.kind != EffectKind::DeltaBGATE && target.kind != EffectKind::DeltaGATE) {
    throw DataError("reweighting estimates delta-bgate targets");
  }
  check_target(target, data);
  const Rebalanced balanced = rebalance(data);
  const auto source = nuisances.for_rows(balanced.plan.donor);
  EffectTarget gate = target;
  gate.kind = EffectKind::DeltaGATE;
  EffectEstimate est = estimate_delta_gate(balanced.data, gate, cfg, *source);
  const double factor = balanced.data.n() * weighted_variance_factor(balanced.sample.s);
  const double scale = std::sqrt(factor);
  Eigen::VectorXd scores = ((est.scores.array() - est.coef) * scale + est.coef).matrix();
  est = estimate_from_scores(target, std::move(scores));
  return est;
}

void write_balanced_csv(const std::string& path, const Rebalanced& balanced,
                        const CsvData& original) {
  CsvData out = original;
  out.data = balanced.data;
  std::vector<double> source, weight;
  const auto a = balanced.sample.weights();
  std::vector<double> unit_weight(static_cast<std::size_t>(original.data.n()), 0.0);
  for (std::size_t q = 0; q < a.size(); ++q) unit_weight[balanced.sample.units[q]] = a[q];
  for (int j : balanced.plan.donor) {
    source.push_back(j);
    weight.push_back(unit_weight[j]);
  }
  write_csv(path, out, {{"source_row", source}, {"weight", weight}});
}

}  // namespace bgate
