#pragma once

#include <cstdint>

#include "bgate/dataset.hpp"
#include "bgate/effect.hpp"
#include "bgate/nuisance.hpp"
#include "bgate/scores.hpp"
#include "json.hpp"

namespace bgate {

struct DmlConfig {
  int k = 2;
  int j = 2;
  std::uint64_t seed = 0;
  WeightMode weights = WeightMode::normalized;
};

void validate(const DmlConfig& cfg);

enum class CbgateVersion { joint, product };

std::string to_string(CbgateVersion v);
CbgateVersion cbgate_version_from_string(const std::string& name);

/// First-stage pseudo-outcomes of the treatment contrast, cross-fitted over
/// the outer folds only.
Eigen::VectorXd cross_fitted_pseudo_outcomes(const Dataset& data, const EffectTarget& target,
                                             const DmlConfig& cfg, const NuisanceSource& nuisances);

/// Cross-fitted difference of balanced GATEs. Outer folds fit the first stage
/// and produce pseudo-outcomes; inner folds inside each outer fold fit the
/// second stage on W and evaluate the orthogonal score.
EffectEstimate estimate_delta_bgate(const Dataset& data, const EffectTarget& target,
                                    const DmlConfig& cfg, const NuisanceSource& nuisances);

/// Balanced GATE of a single group, same nesting as estimate_delta_bgate.
EffectEstimate estimate_bgate(const Dataset& data, const EffectTarget& target,
                              const DmlConfig& cfg, const NuisanceSource& nuisances);

/// Difference of group ATEs, each estimated within its group with AIPW scores.
/// SE = sqrt(Var_u + Var_v).
EffectEstimate estimate_delta_gate(const Dataset& data, const EffectTarget& target,
                                   const DmlConfig& cfg, const NuisanceSource& nuisances);

/// ATE of a single group (GATE) or of the whole sample (ATE).
EffectEstimate estimate_gate(const Dataset& data, const EffectTarget& target,
                             const DmlConfig& cfg, const NuisanceSource& nuisances);
EffectEstimate estimate_ate(const Dataset& data, const EffectTarget& target,
                            const DmlConfig& cfg, const NuisanceSource& nuisances);

/// Causal difference of balanced GATEs with single-level cross-fitting. The
/// joint version models P(D, Z | X) directly, the product version as
/// P(D | Z, X) P(Z | X).
EffectEstimate estimate_delta_cbgate(const Dataset& data, const EffectTarget& target,
                                     const DmlConfig& cfg, const NuisanceSource& nuisances,
                                     CbgateVersion version = CbgateVersion::joint);

/// Dispatches on target.kind.
EffectEstimate estimate_dml(const Dataset& data, const EffectTarget& target,
                            const DmlConfig& cfg, const NuisanceSource& nuisances,
                            CbgateVersion version = CbgateVersion::joint);

/// Split of the group difference into the balanced part and two
/// compositional parts: delta_gate = delta_bgate + comp1 - comp2, where
/// comp1 = P(Z=v)/P(Z=u) (E[g_u(W)] - E[g_u(W) | Z=v]) and
/// comp2 = P(Z=u)/P(Z=v) (E[g_v(W)] - E[g_v(W) | Z=u]), all computed from one
/// set of plug-in surfaces g_z and sample shares.
struct Decomposition {
  double delta_gate = 0.0;
  double delta_bgate = 0.0;
  double comp1 = 0.0;
  double comp2 = 0.0;
  double se_delta_gate = 0.0;
  double se_delta_bgate = 0.0;
  double se_comp1 = 0.0;
  double se_comp2 = 0.0;
  /// Cross-fitted orthogonal estimate of the balanced difference.
  EffectEstimate dml;

  double residual() const { return delta_gate - (delta_bgate + comp1 - comp2); }
};

/// Plug-in decomposition from given surfaces. `g_u`, `g_v` are evaluated at
/// every unit; z holds moderator codes.
Decomposition decompose_surfaces(const Eigen::VectorXd& g_u, const Eigen::VectorXd& g_v,
                                 std::span<const int> z, int u, int v);

/// Fits the surfaces by cross-fitting (g_z evaluated out of fold for every
/// unit) and runs estimate_delta_bgate alongside.
Decomposition decompose_delta_gate(const Dataset& data, const EffectTarget& target,
                                   const DmlConfig& cfg, const NuisanceSource& nuisances);

nlohmann::json to_json(const Decomposition& d);

}  // namespace bgate
