#include "bgate/effect.hpp"

#include <cmath>
#include <sstream>

#include "bgate/dataset.hpp"

namespace bgate {

std::string to_string(EffectKind kind) {
  switch (kind) {
    case EffectKind::ATE: return "ate";
    case EffectKind::GATE: return "gate";
    case EffectKind::BGATE: return "bgate";
    case EffectKind::DeltaGATE: return "delta-gate";
    case EffectKind::DeltaBGATE: return "delta-bgate";
    case EffectKind::DeltaCBGATE: return "delta-cbgate";
  }
  return "unknown";
}

EffectKind effect_kind_from_string(const std::string& name) {
  for (auto kind : {EffectKind::ATE, EffectKind::GATE, EffectKind::BGATE, EffectKind::DeltaGATE,
                    EffectKind::DeltaBGATE, EffectKind::DeltaCBGATE}) {
    if (to_string(kind) == name) return kind;
  }
  throw DataError("unknown effect '" + name + "'");
}

EffectTarget EffectTarget::ate(int l, int m) {
  return {EffectKind::ATE, {l, m}, {1, 0}, 0};
}
EffectTarget EffectTarget::gate(int group, int l, int m) {
  return {EffectKind::GATE, {l, m}, {1, 0}, group};
}
EffectTarget EffectTarget::bgate(int group, int l, int m) {
  return {EffectKind::BGATE, {l, m}, {1, 0}, group};
}
EffectTarget EffectTarget::delta_gate(int u, int v, int l, int m) {
  return {EffectKind::DeltaGATE, {l, m}, {u, v}, u};
}
EffectTarget EffectTarget::delta_bgate(int u, int v, int l, int m) {
  return {EffectKind::DeltaBGATE, {l, m}, {u, v}, u};
}
EffectTarget EffectTarget::delta_cbgate(int u, int v, int l, int m) {
  return {EffectKind::DeltaCBGATE, {l, m}, {u, v}, u};
}

bool EffectTarget::is_delta() const {
  return kind == EffectKind::DeltaGATE || kind == EffectKind::DeltaBGATE ||
         kind == EffectKind::DeltaCBGATE;
}

bool EffectTarget::is_single_group() const {
  return kind == EffectKind::GATE || kind == EffectKind::BGATE;
}

void check_target(const EffectTarget& target, const Dataset& data) {
  auto [l, m] = target.treat_contrast;
  if (l == m) throw DataError("treatment contrast needs two distinct levels");
  if (l < 0 || m < 0 || l >= data.treat_levels || m >= data.treat_levels) {
    throw DataError("treatment contrast refers to a level absent from the data");
  }
  if (target.is_delta()) {
    auto [u, v] = target.group_contrast;
    if (u == v) throw DataError("group contrast needs two distinct moderator levels");
    if (u < 0 || v < 0 || u >= data.moderator_levels || v >= data.moderator_levels) {
      throw DataError("group contrast refers to a moderator level absent from the data");
    }
  }
  if (target.is_single_group() &&
      (target.group < 0 || target.group >= data.moderator_levels)) {
    throw DataError("group " + std::to_string(target.group) + " is absent from the data");
  }
}

double normal_two_sided_p(double t) {
  return std::erfc(std::abs(t) / std::sqrt(2.0));
}

EffectEstimate estimate_from_scores(const EffectTarget& target, Eigen::VectorXd scores) {
  EffectEstimate est;
  est.target = target;
  est.n = static_cast<int>(scores.size());
  est.coef = scores.mean();
  const double var = (scores.array() - est.coef).square().mean();
  est.se = std::sqrt(var / est.n);
  est.p_value = est.se > 0.0 ? normal_two_sided_p(est.coef / est.se) : (est.coef == 0.0 ? 1.0 : 0.0);
  est.scores = std::move(scores);
  return est;
}

nlohmann::json to_json(const EffectTarget& target) {
  nlohmann::json j;
  j["kind"] = to_string(target.kind);
  j["treat_contrast"] = {target.treat_contrast.first, target.treat_contrast.second};
  if (target.is_delta()) {
    j["group_contrast"] = {target.group_contrast.first, target.group_contrast.second};
  }
  if (target.is_single_group()) j["group"] = target.group;
  return j;
}

nlohmann::json to_json(const EffectEstimate& estimate, bool include_scores) {
  nlohmann::json j;
  j["target"] = to_json(estimate.target);
  j["coef"] = estimate.coef;
  j["se"] = estimate.se;
  j["p_value"] = estimate.p_value;
  j["n"] = estimate.n;
  if (include_scores) {
    j["scores"] = std::vector<double>(estimate.scores.data(),
                                      estimate.scores.data() + estimate.scores.size());
  }
  return j;
}

std::string estimate_csv_header() { return "target,coef,se,p_value,n"; }

std::string estimate_csv_row(const EffectEstimate& estimate) {
  std::ostringstream row;
  row.precision(17);
  row << to_string(estimate.target.kind) << ',' << estimate.coef << ',' << estimate.se << ','
      << estimate.p_value << ',' << estimate.n;
  return row.str();
}

}  // namespace bgate
