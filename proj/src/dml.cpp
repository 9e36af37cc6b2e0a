#include "bgate/dml.hpp"

#include <cmath>
#include <string>

#include "bgate/folds.hpp"
#include "bgate/random.hpp"

namespace bgate {

namespace {

enum Tag : std::uint64_t {
  kFolds = 1,
  kOutcome,
  kPropensity,
  kSecond,
  kModerator,
  kCell,
  kJoint,
  kModeratorX,
};

std::uint64_t fold_seed(const DmlConfig& cfg, Tag tag, int fold, int level = 0) {
  return derive_seed(derive_seed(cfg.seed, tag), static_cast<std::uint64_t>(fold),
                     static_cast<std::uint64_t>(level));
}

void require_level(const std::vector<int>& labels, std::span<const int> rows, int level,
                   const std::string& what) {
  for (int i : rows) {
    if (labels[i] == level) return;
  }
  throw EstimationError(what + " level " + std::to_string(level) + " is missing in a fold");
}

Eigen::VectorXd weights_for(const std::vector<int>& labels, std::span<const int> rows, int level,
                            const Eigen::VectorXd& p, WeightMode mode) {
  const auto sub = gather(labels, rows);
  return inverse_propensity_weights(sub, level, std::span<const double>(p.data(), p.size()),
                                    mode);
}

void scatter(Eigen::VectorXd& full, std::span<const int> rows, const Eigen::VectorXd& part) {
  for (std::size_t r = 0; r < rows.size(); ++r) full[rows[r]] = part[static_cast<Eigen::Index>(r)];
}

// Pseudo-outcomes of the treatment contrast for the rows of `eval`, with the
// first stage fitted on `train`.
Eigen::VectorXd first_stage(const Dataset& data, const EffectTarget& target, const DmlConfig& cfg,
                            const NuisanceSource& src, std::span<const int> train,
                            std::span<const int> eval, int fold) {
  const auto [l, m] = target.treat_contrast;
  require_level(data.d, train, l, "treatment");
  require_level(data.d, train, m, "treatment");
  require_level(data.d, eval, l, "treatment");
  require_level(data.d, eval, m, "treatment");
  const Eigen::VectorXd mu_l = src.outcome(data, train, l, eval, fold_seed(cfg, kOutcome, fold, l));
  const Eigen::VectorXd mu_m = src.outcome(data, train, m, eval, fold_seed(cfg, kOutcome, fold, m));
  const Eigen::MatrixXd pi =
      src.treatment_propensity(data, train, eval, fold_seed(cfg, kPropensity, fold));
  const Eigen::VectorXd p_l = pi.col(l);
  const Eigen::VectorXd p_m = pi.col(m);
  const Eigen::VectorXd w_l = weights_for(data.d, eval, l, p_l, cfg.weights);
  const Eigen::VectorXd w_m = weights_for(data.d, eval, m, p_m, cfg.weights);
  return pseudo_outcome(gather(data.y, eval), mu_l, mu_m, w_l, w_m);
}

struct BgateRun {
  Eigen::VectorXd scores;
  Eigen::VectorXd delta;
  Eigen::VectorXd g_u;
  Eigen::VectorXd g_v;
};

// Nested cross-fitting shared by the balanced estimators. With `single` the
// score is the single-group variant for group u.
BgateRun run_bgate(const Dataset& data, const EffectTarget& target, const DmlConfig& cfg,
                   const NuisanceSource& src, bool single) {
  validate(cfg);
  check_target(target, data);
  const int n = data.n();
  if (n < cfg.k * cfg.j) throw DataError("sample too small for the requested folds");
  const int u = single ? target.group : target.group_contrast.first;
  const int v = single ? target.group : target.group_contrast.second;
  const FoldPlan plan = make_fold_plan(n, cfg.k, cfg.j, derive_seed(cfg.seed, kFolds));
  BgateRun run;
  run.scores = Eigen::VectorXd::Zero(n);
  run.delta = Eigen::VectorXd::Zero(n);
  run.g_u = Eigen::VectorXd::Zero(n);
  run.g_v = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < cfg.k; ++k) {
    const auto train = plan.outer_complement(k);
    const auto eval = plan.outer_members(k);
    scatter(run.delta, eval, first_stage(data, target, cfg, src, train, eval, k));
    for (int jj = 0; jj < cfg.j; ++jj) {
      const auto tr = plan.inner_complement(k, jj);
      const auto ev = plan.inner_members(k, jj);
      const int fold = k * cfg.j + jj;
      for (int z : {u, v}) {
        require_level(data.z, tr, z, "moderator");
        require_level(data.z, ev, z, "moderator");
      }
      const Eigen::VectorXd g_u =
          src.pseudo_outcome_regression(data, run.delta, tr, u, ev, fold_seed(cfg, kSecond, fold, u));
      const Eigen::MatrixXd lam = src.moderator_propensity(data, tr, ev, fold_seed(cfg, kModerator, fold));
      const Eigen::VectorXd lam_u = lam.col(u);
      const Eigen::VectorXd w_u = weights_for(data.z, ev, u, lam_u, cfg.weights);
      const Eigen::VectorXd d_ev = gather(run.delta, ev);
      scatter(run.g_u, ev, g_u);
      if (single) {
        scatter(run.scores, ev, single_group_score(d_ev, g_u, w_u));
        continue;
      }
      const Eigen::VectorXd g_v =
          src.pseudo_outcome_regression(data, run.delta, tr, v, ev, fold_seed(cfg, kSecond, fold, v));
      const Eigen::VectorXd lam_v = lam.col(v);
      const Eigen::VectorXd w_v = weights_for(data.z, ev, v, lam_v, cfg.weights);
      scatter(run.g_v, ev, g_v);
      scatter(run.scores, ev, second_stage_score(d_ev, g_u, g_v, w_u, w_v));
    }
  }
  return run;
}

struct GroupAte {
  Eigen::VectorXd psi;  // indexed like `rows`
  std::vector<int> rows;
  double coef = 0.0;
};

// AIPW scores of the treatment contrast inside `rows`, K-fold cross-fitted.
GroupAte group_ate(const Dataset& data, const EffectTarget& target, const DmlConfig& cfg,
                   const NuisanceSource& src, std::vector<int> rows, int group_tag) {
  const int n = static_cast<int>(rows.size());
  if (n < cfg.k) throw EstimationError("group too small for the requested folds");
  const auto folds =
      make_folds(n, cfg.k, derive_seed(cfg.seed, kFolds, static_cast<std::uint64_t>(group_tag)));
  GroupAte out;
  out.rows = std::move(rows);
  out.psi = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < cfg.k; ++k) {
    std::vector<int> train, eval, eval_pos;
    for (int i = 0; i < n; ++i) {
      if (folds[i] == k) {
        eval.push_back(out.rows[i]);
        eval_pos.push_back(i);
      } else {
        train.push_back(out.rows[i]);
      }
    }
    const int fold = group_tag * cfg.k + k;
    const Eigen::VectorXd part = first_stage(data, target, cfg, src, train, eval, fold);
    for (std::size_t r = 0; r < eval_pos.size(); ++r) out.psi[eval_pos[r]] = part[r];
  }
  out.coef = out.psi.mean();
  return out;
}

// Expands group scores into an N-vector whose mean is `coef` and whose
// centered second moment over N reproduces the group variance.
void add_group(Eigen::VectorXd& scores, const GroupAte& g, double sign, int n) {
  const double scale = double(n) / g.rows.size();
  for (std::size_t r = 0; r < g.rows.size(); ++r) {
    scores[g.rows[r]] += sign * scale * (g.psi[static_cast<Eigen::Index>(r)] - g.coef);
  }
}

std::vector<int> group_rows(const Dataset& data, int z) {
  std::vector<int> rows;
  for (int i = 0; i < data.n(); ++i) {
    if (data.z[i] == z) rows.push_back(i);
  }
  if (rows.empty()) throw DataError("moderator group " + std::to_string(z) + " is empty");
  return rows;
}

}  // namespace

void validate(const DmlConfig& cfg) {
  if (cfg.k < 2) throw DataError("k must be at least 2");
  if (cfg.j < 2) throw DataError("j must be at least 2");
}

std::string to_string(CbgateVersion v) { return v == CbgateVersion::joint ? "joint" : "product"; }

CbgateVersion cbgate_version_from_string(const std::string& name) {
  if (name == "joint") return CbgateVersion::joint;
  if (name == "product") return CbgateVersion::product;
  throw DataError("unknown propensity version '" + name + "' (expected joint or product)");
}

Eigen::VectorXd cross_fitted_pseudo_outcomes(const Dataset& data, const EffectTarget& target,
                                             const DmlConfig& cfg, const NuisanceSource& nuisances) {
  validate(cfg);
  check_target(target, data);
  if (data.n() < cfg.k * cfg.j) throw DataError("sample too small for the requested folds");
  const FoldPlan plan = make_fold_plan(data.n(), cfg.k, cfg.j, derive_seed(cfg.seed, kFolds));
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(data.n());
  for (int k = 0; k < cfg.k; ++k) {
    const auto eval = plan.outer_members(k);
    scatter(delta, eval, first_stage(data, target, cfg, nuisances, plan.outer_complement(k), eval, k));
  }
  return delta;
}

EffectEstimate estimate_delta_bgate(const Dataset& data, const EffectTarget& target,
                                    const DmlConfig& cfg, const NuisanceSource& nuisances) {
  if (target.kind != EffectKind::DeltaBGATE) throw DataError("target must be delta-bgate");
  return estimate_from_scores(target, run_bgate(data, target, cfg, nuisances, false).scores);
}

EffectEstimate estimate_bgate(const Dataset& data, const EffectTarget& target,
                              const DmlConfig& cfg, const NuisanceSource& nuisances) {
  if (target.kind != EffectKind::BGATE) throw DataError("target must be bgate");
  return estimate_from_scores(target, run_bgate(data, target, cfg, nuisances, true).scores);
}

EffectEstimate estimate_delta_gate(const Dataset& data, const EffectTarget& target,
                                   const DmlConfig& cfg, const NuisanceSource& nuisances) {
  if (target.kind != EffectKind::DeltaGATE) throw DataError("target must be delta-gate");
  validate(cfg);
  check_target(target, data);
  const auto [u, v] = target.group_contrast;
  const GroupAte gu = group_ate(data, target, cfg, nuisances, group_rows(data, u), u);
  const GroupAte gv = group_ate(data, target, cfg, nuisances, group_rows(data, v), v);
  const double coef = gu.coef - gv.coef;
  Eigen::VectorXd scores = Eigen::VectorXd::Constant(data.n(), coef);
  add_group(scores, gu, 1.0, data.n());
  add_group(scores, gv, -1.0, data.n());
  auto est = estimate_from_scores(target, std::move(scores));
  est.coef = coef;
  return est;
}

EffectEstimate estimate_gate(const Dataset& data, const EffectTarget& target,
                             const DmlConfig& cfg, const NuisanceSource& nuisances) {
  if (target.kind != EffectKind::GATE) throw DataError("target must be gate");
  validate(cfg);
  check_target(target, data);
  const GroupAte g = group_ate(data, target, cfg, nuisances, group_rows(data, target.group),
                               target.group);
  Eigen::VectorXd scores = Eigen::VectorXd::Constant(data.n(), g.coef);
  add_group(scores, g, 1.0, data.n());
  auto est = estimate_from_scores(target, std::move(scores));
  est.coef = g.coef;
  return est;
}

EffectEstimate estimate_ate(const Dataset& data, const EffectTarget& target, const DmlConfig& cfg,
                            const NuisanceSource& nuisances) {
  if (target.kind != EffectKind::ATE) throw DataError("target must be ate");
  validate(cfg);
  check_target(target, data);
  const GroupAte g = group_ate(data, target, cfg, nuisances, iota_rows(data.n()), 0);
  return estimate_from_scores(target, g.psi);
}

EffectEstimate estimate_delta_cbgate(const Dataset& data, const EffectTarget& target,
                                     const DmlConfig& cfg, const NuisanceSource& src,
                                     CbgateVersion version) {
  if (target.kind != EffectKind::DeltaCBGATE) throw DataError("target must be delta-cbgate");
  validate(cfg);
  check_target(target, data);
  const int n = data.n();
  const auto [l, m] = target.treat_contrast;
  const auto [u, v] = target.group_contrast;
  const int levels_z = data.moderator_levels;
  const auto folds = make_folds(n, cfg.k, derive_seed(cfg.seed, kFolds));
  const auto members = fold_members(folds, cfg.k);
  std::vector<int> cells(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) cells[i] = cell_code(data.d[i], data.z[i], levels_z);
  Eigen::VectorXd scores = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < cfg.k; ++k) {
    const auto& eval = members[k];
    std::vector<int> train;
    for (int i = 0; i < n; ++i) {
      if (folds[i] != k) train.push_back(i);
    }
    for (auto [d, z] : {std::pair{l, u}, {m, u}, {l, v}, {m, v}}) {
      const int c = cell_code(d, z, levels_z);
      require_level(cells, train, c, "(treatment, moderator) cell");
      require_level(cells, eval, c, "(treatment, moderator) cell");
    }
    auto cell_mu = [&](int d, int z) {
      return src.cell_outcome(data, train, d, z, eval,
                              fold_seed(cfg, kCell, k, cell_code(d, z, levels_z)));
    };
    CellValues mu{cell_mu(l, u), cell_mu(m, u), cell_mu(l, v), cell_mu(m, v)};

    // Propensity of each unit's own cell; only those enter the weights.
    Eigen::VectorXd own(static_cast<Eigen::Index>(eval.size()));
    if (version == CbgateVersion::joint) {
      const Eigen::MatrixXd omega = src.joint_propensity(data, train, eval, fold_seed(cfg, kJoint, k));
      for (std::size_t r = 0; r < eval.size(); ++r) own[r] = omega(r, cells[eval[r]]);
    } else {
      const Eigen::MatrixXd pi = src.treatment_propensity(data, train, eval, fold_seed(cfg, kPropensity, k));
      const Eigen::MatrixXd lam =
          src.moderator_propensity_x(data, train, eval, fold_seed(cfg, kModeratorX, k));
      for (std::size_t r = 0; r < eval.size(); ++r) {
        const int i = eval[r];
        own[r] = pi(r, data.d[i]) * lam(r, data.z[i]);
      }
    }
    auto cell_w = [&](int d, int z) {
      return weights_for(cells, eval, cell_code(d, z, levels_z), own, cfg.weights);
    };
    CellValues w{cell_w(l, u), cell_w(m, u), cell_w(l, v), cell_w(m, v)};
    scatter(scores, eval, cbgate_score(gather(data.y, eval), mu, w));
  }
  return estimate_from_scores(target, std::move(scores));
}

EffectEstimate estimate_dml(const Dataset& data, const EffectTarget& target, const DmlConfig& cfg,
                            const NuisanceSource& nuisances, CbgateVersion version) {
  switch (target.kind) {
    case EffectKind::ATE: return estimate_ate(data, target, cfg, nuisances);
    case EffectKind::GATE: return estimate_gate(data, target, cfg, nuisances);
    case EffectKind::BGATE: return estimate_bgate(data, target, cfg, nuisances);
    case EffectKind::DeltaGATE: return estimate_delta_gate(data, target, cfg, nuisances);
    case EffectKind::DeltaBGATE: return estimate_delta_bgate(data, target, cfg, nuisances);
    case EffectKind::DeltaCBGATE:
      return estimate_delta_cbgate(data, target, cfg, nuisances, version);
  }
  throw DataError("unknown effect kind");
}

Decomposition decompose_surfaces(const Eigen::VectorXd& g_u, const Eigen::VectorXd& g_v,
                                 std::span<const int> z, int u, int v) {
  const auto n = static_cast<Eigen::Index>(z.size());
  if (g_u.size() != n || g_v.size() != n) throw DataError("surface length mismatch");
  double n_u = 0.0, n_v = 0.0, su_u = 0.0, su_v = 0.0, sv_u = 0.0, sv_v = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (z[i] == u) {
      n_u += 1.0;
      su_u += g_u[i];
      sv_u += g_v[i];
    } else if (z[i] == v) {
      n_v += 1.0;
      su_v += g_u[i];
      sv_v += g_v[i];
    } else {
      throw DataError("decomposition needs a moderator with exactly the two contrasted levels");
    }
  }
  if (n_u == 0.0 || n_v == 0.0) throw DataError("decomposition needs both moderator groups");
  const double p_u = n_u / n;
  const double p_v = n_v / n;
  const double all_u = g_u.mean();
  const double all_v = g_v.mean();
  Decomposition out;
  out.delta_gate = su_u / n_u - sv_v / n_v;
  out.delta_bgate = all_u - all_v;
  out.comp1 = p_v / p_u * (all_u - su_v / n_v);
  out.comp2 = p_u / p_v * (all_v - sv_u / n_u);

  // Standard errors with the surfaces held fixed.
  auto se_of = [&](const Eigen::ArrayXd& psi) {
    const double c = psi.mean();
    return std::sqrt((psi - c).square().mean() / double(n));
  };
  Eigen::ArrayXd in_u(n), in_v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    in_u[i] = z[i] == u ? 1.0 : 0.0;
    in_v[i] = 1.0 - in_u[i];
  }
  const Eigen::ArrayXd cu = g_u.array() - all_u;
  const Eigen::ArrayXd cv = g_v.array() - all_v;
  out.se_delta_bgate = se_of(g_u.array() - g_v.array());
  out.se_comp1 = se_of(cu * (in_u - p_u) / p_u);
  out.se_comp2 = se_of(cv * (in_v - p_v) / p_v);
  out.se_delta_gate = se_of(in_u * g_u.array() / p_u - in_v * g_v.array() / p_v);
  return out;
}

Decomposition decompose_delta_gate(const Dataset& data, const EffectTarget& target,
                                   const DmlConfig& cfg, const NuisanceSource& nuisances) {
  if (target.kind != EffectKind::DeltaBGATE && target.kind != EffectKind::DeltaGATE) {
    throw DataError("decomposition needs a delta-gate or delta-bgate target");
  }
  EffectTarget t = target;
  t.kind = EffectKind::DeltaBGATE;
  if (data.moderator_levels != 2) {
    throw DataError("decomposition needs a binary moderator");
  }
  const BgateRun run = run_bgate(data, t, cfg, nuisances, false);
  Decomposition out = decompose_surfaces(run.g_u, run.g_v, data.z, t.group_contrast.first,
                                         t.group_contrast.second);
  out.dml = estimate_from_scores(t, run.scores);
  return out;
}

nlohmann::json to_json(const Decomposition& d) {
  return {{"delta_gate", d.delta_gate},       {"delta_bgate", d.delta_bgate},
          {"comp1", d.comp1},                 {"comp2", d.comp2},
          {"se_delta_gate", d.se_delta_gate}, {"se_delta_bgate", d.se_delta_bgate},
          {"se_comp1", d.se_comp1},           {"se_comp2", d.se_comp2},
          {"residual", d.residual()},         {"dml", to_json(d.dml)}};
}

}  // namespace bgate
