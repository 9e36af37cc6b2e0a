#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace bgate {

inline constexpr double kPropensityFloor = 1e-4;
inline constexpr double kWeightCap = 0.05;

/// How I(label = level) / p is realized inside a score.
enum class WeightMode {
  normalized,  // floor, normalize, cap at 5%, renormalize, scale to N
  raw          // plain I(label = level) / p
};

/// Intermediate stages of the normalization pipeline, kept for inspection.
struct WeightStages {
  Eigen::VectorXd raw;      // I(label = level) / max(p, floor)
  Eigen::VectorXd capped;   // raw / sum(raw), then min(., cap)
  Eigen::VectorXd weights;  // capped / sum(capped) * N
};

/// `p[i]` is the propensity of `level` for unit i. Throws DataError on
/// length mismatch or when no unit carries `level`.
WeightStages normalize_truncate_stages(std::span<const int> labels, int level,
                                       std::span<const double> p);
Eigen::VectorXd normalize_truncate_weights(std::span<const int> labels, int level,
                                           std::span<const double> p);
Eigen::VectorXd inverse_propensity_weights(std::span<const int> labels, int level,
                                           std::span<const double> p, WeightMode mode);

/// First-stage doubly robust pseudo-outcome for treatment contrast (l, m):
/// mu_l - mu_m + w_l (y - mu_l) - w_m (y - mu_m).
Eigen::VectorXd pseudo_outcome(const Eigen::VectorXd& y, const Eigen::VectorXd& mu_l,
                               const Eigen::VectorXd& mu_m, const Eigen::VectorXd& w_l,
                               const Eigen::VectorXd& w_m);

/// Second-stage score for group contrast (u, v):
/// g_u - g_v + w_u (delta - g_u) - w_v (delta - g_v).
Eigen::VectorXd second_stage_score(const Eigen::VectorXd& delta, const Eigen::VectorXd& g_u,
                                   const Eigen::VectorXd& g_v, const Eigen::VectorXd& w_u,
                                   const Eigen::VectorXd& w_v);

/// Single-group variant g_z + w_z (delta - g_z).
Eigen::VectorXd single_group_score(const Eigen::VectorXd& delta, const Eigen::VectorXd& g_z,
                                   const Eigen::VectorXd& w_z);

/// Per-unit values for the four (treatment, moderator) cells of contrast
/// (l, m) x (u, v).
struct CellValues {
  Eigen::VectorXd lu, mu, lv, mv;
};

/// Cell code used for joint (d, z) labels.
inline int cell_code(int d, int z, int moderator_levels) { return d * moderator_levels + z; }

/// Score of the interaction contrast
/// [mu(l,u) - mu(m,u)] - [mu(l,v) - mu(m,v)] plus the four weighted residuals.
Eigen::VectorXd cbgate_score(const Eigen::VectorXd& y, const CellValues& mu,
                             const CellValues& weights);

/// Finite-perturbation slopes of a mean score M(r) around r = 0. For every
/// positive r in the grid: slope (M(r) - M(-r)) / 2r and curvature
/// (M(r) - 2 M(0) + M(-r)) / r^2.
struct OrthogonalityResult {
  std::vector<double> r;
  std::vector<double> slope;
  std::vector<double> curvature;
  double m0 = 0.0;
};

OrthogonalityResult orthogonality_check(const std::function<double(double)>& mean_score,
                                        std::span<const double> r_grid);

}  // namespace bgate
