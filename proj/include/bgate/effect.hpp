#pragma once

#include <string>
#include <utility>

#include <Eigen/Dense>

#include "json.hpp"

namespace bgate {

enum class EffectKind { ATE, GATE, BGATE, DeltaGATE, DeltaBGATE, DeltaCBGATE };

std::string to_string(EffectKind kind);
EffectKind effect_kind_from_string(const std::string& name);

/// What is being estimated. Treatment contrast (l, m) means level l minus
/// level m; group contrast (u, v) means group u minus group v.
struct EffectTarget {
  EffectKind kind = EffectKind::DeltaBGATE;
  std::pair<int, int> treat_contrast{1, 0};
  std::pair<int, int> group_contrast{1, 0};
  int group = 1;

  static EffectTarget ate(int l = 1, int m = 0);
  static EffectTarget gate(int group, int l = 1, int m = 0);
  static EffectTarget bgate(int group, int l = 1, int m = 0);
  static EffectTarget delta_gate(int u = 1, int v = 0, int l = 1, int m = 0);
  static EffectTarget delta_bgate(int u = 1, int v = 0, int l = 1, int m = 0);
  static EffectTarget delta_cbgate(int u = 1, int v = 0, int l = 1, int m = 0);

  bool is_delta() const;
  bool is_single_group() const;
};

struct Dataset;

/// Throws DataError unless the contrasts are distinct and exist in `data`.
void check_target(const EffectTarget& target, const Dataset& data);

struct EffectEstimate {
  EffectTarget target;
  double coef = 0.0;
  double se = 0.0;
  double p_value = 1.0;
  int n = 0;
  /// Per-unit orthogonal score values; their mean is `coef`.
  Eigen::VectorXd scores;
};

/// Two-sided standard normal tail probability of |t|.
double normal_two_sided_p(double t);

/// Coefficient, standard error and p-value from per-unit scores:
/// coef = mean(scores), se^2 = mean((scores - coef)^2) / N.
EffectEstimate estimate_from_scores(const EffectTarget& target, Eigen::VectorXd scores);

nlohmann::json to_json(const EffectTarget& target);
nlohmann::json to_json(const EffectEstimate& estimate, bool include_scores = false);

std::string estimate_csv_header();
std::string estimate_csv_row(const EffectEstimate& estimate);

}  // namespace bgate
