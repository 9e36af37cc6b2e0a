#include "bgate/scores.hpp"

#include <algorithm>
#include <cmath>

#include "bgate/dataset.hpp"

namespace bgate {

namespace {

void require_same(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) throw DataError(std::string(what) + ": length mismatch");
}

// Compensated (Neumaier) sum; keeps the stage totals correctly rounded in
// practice so symmetric inputs give exact unit weights.
double accurate_sum(const Eigen::VectorXd& v) {
  double sum = 0.0, c = 0.0;
  for (double x : v) {
    const double t = sum + x;
    c += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  return sum + c;
}

}  // namespace

WeightStages normalize_truncate_stages(std::span<const int> labels, int level,
                                       std::span<const double> p) {
  require_same(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(p.size()),
               "normalize_truncate_weights");
  const auto n = static_cast<Eigen::Index>(labels.size());
  WeightStages out;
  out.raw = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = std::max(p[i], kPropensityFloor);
    out.raw[i] = labels[i] == level ? 1.0 / pi : 0.0;
  }
  const double sum = accurate_sum(out.raw);
  if (!(sum > 0.0)) throw DataError("no unit at level " + std::to_string(level));
  out.capped = (out.raw / sum).cwiseMin(kWeightCap);
  out.weights = out.capped / accurate_sum(out.capped) * static_cast<double>(n);
  return out;
}

Eigen::VectorXd normalize_truncate_weights(std::span<const int> labels, int level,
                                           std::span<const double> p) {
  return normalize_truncate_stages(labels, level, p).weights;
}

Eigen::VectorXd inverse_propensity_weights(std::span<const int> labels, int level,
                                           std::span<const double> p, WeightMode mode) {
  if (mode == WeightMode::normalized) return normalize_truncate_weights(labels, level, p);
  require_same(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(p.size()),
               "inverse_propensity_weights");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != level) continue;
    if (!(p[i] > 0.0)) throw DataError("propensity must be positive at the observed level");
    w[static_cast<Eigen::Index>(i)] = 1.0 / p[i];
  }
  return w;
}

Eigen::VectorXd pseudo_outcome(const Eigen::VectorXd& y, const Eigen::VectorXd& mu_l,
                               const Eigen::VectorXd& mu_m, const Eigen::VectorXd& w_l,
                               const Eigen::VectorXd& w_m) {
  const auto n = y.size();
  for (auto s : {mu_l.size(), mu_m.size(), w_l.size(), w_m.size()}) {
    require_same(n, s, "pseudo_outcome");
  }
  return (mu_l - mu_m).array() + w_l.array() * (y - mu_l).array() -
         w_m.array() * (y - mu_m).array();
}

Eigen::VectorXd second_stage_score(const Eigen::VectorXd& delta, const Eigen::VectorXd& g_u,
                                   const Eigen::VectorXd& g_v, const Eigen::VectorXd& w_u,
                                   const Eigen::VectorXd& w_v) {
  const auto n = delta.size();
  for (auto s : {g_u.size(), g_v.size(), w_u.size(), w_v.size()}) {
    require_same(n, s, "second_stage_score");
  }
  return (g_u - g_v).array() + w_u.array() * (delta - g_u).array() -
         w_v.array() * (delta - g_v).array();
}

Eigen::VectorXd single_group_score(const Eigen::VectorXd& delta, const Eigen::VectorXd& g_z,
                                   const Eigen::VectorXd& w_z) {
  require_same(delta.size(), g_z.size(), "single_group_score");
  require_same(delta.size(), w_z.size(), "single_group_score");
  return g_z.array() + w_z.array() * (delta - g_z).array();
}

Eigen::VectorXd cbgate_score(const Eigen::VectorXd& y, const CellValues& mu,
                             const CellValues& w) {
  const auto n = y.size();
  for (auto s : {mu.lu.size(), mu.mu.size(), mu.lv.size(), mu.mv.size(), w.lu.size(),
                 w.mu.size(), w.lv.size(), w.mv.size()}) {
    require_same(n, s, "cbgate_score");
  }
  Eigen::ArrayXd s = (mu.lu - mu.mu - mu.lv + mu.mv).array();
  s += w.lu.array() * (y - mu.lu).array();
  s -= w.mu.array() * (y - mu.mu).array();
  s -= w.lv.array() * (y - mu.lv).array();
  s += w.mv.array() * (y - mu.mv).array();
  return s.matrix();
}

OrthogonalityResult orthogonality_check(const std::function<double(double)>& mean_score,
                                        std::span<const double> r_grid) {
  OrthogonalityResult out;
  out.m0 = mean_score(0.0);
  std::vector<double> rs;
  for (double r : r_grid) {
    if (r > 0.0) rs.push_back(r);
  }
  std::sort(rs.begin(), rs.end());
  rs.erase(std::unique(rs.begin(), rs.end()), rs.end());
  for (double r : rs) {
    const double plus = mean_score(r);
    const double minus = mean_score(-r);
    out.r.push_back(r);
    out.slope.push_back((plus - minus) / (2.0 * r));
    out.curvature.push_back((plus - 2.0 * out.m0 + minus) / (r * r));
  }
  return out;
}

}  // namespace bgate
