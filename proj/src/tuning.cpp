#include "bgate/tuning.hpp"

#include <map>
#include <utility>

#include "bgate/dataset.hpp"
#include "bgate/dml.hpp"
#include "bgate/folds.hpp"
#include "bgate/random.hpp"

namespace bgate {

void validate(const TuningGrid& grid) {
  if (grid.depths.empty() || grid.leaves.empty()) throw DataError("tuning grid is empty");
  if (grid.folds < 2) throw DataError("tuning needs at least 2 folds");
  if (grid.draws < 1) throw DataError("tuning needs at least one draw");
  for (int d : grid.depths) {
    if (d < 1) throw DataError("grid depths must be positive");
  }
  for (int l : grid.leaves) {
    if (l < 1) throw DataError("grid leaf sizes must be positive");
  }
}

double cv_loss(const TuningProblem& problem, const ForestConfig& cfg, int folds,
               std::uint64_t seed) {
  const int n = static_cast<int>(problem.features.rows());
  const auto assignment = make_folds(n, folds, seed);
  const auto members = fold_members(assignment, folds);
  double loss = 0.0;
  for (int k = 0; k < folds; ++k) {
    std::vector<int> train;
    for (int i = 0; i < n; ++i) {
      if (assignment[i] != k) train.push_back(i);
    }
    const auto& test = members[k];
    const Eigen::MatrixXd x_train = gather_rows(problem.features, train);
    const Eigen::MatrixXd x_test = gather_rows(problem.features, test);
    ForestConfig c = cfg;
    c.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(k));
    if (problem.mode == ForestMode::regression) {
      const auto forest = fit_regression_forest(x_train, gather(problem.targets, train), c);
      const Eigen::VectorXd pred = forest.predict(x_test);
      loss += (pred - gather(problem.targets, test)).squaredNorm();
    } else {
      const auto labels = gather(problem.labels, train);
      const auto forest = fit_probability_forest(x_train, labels, problem.n_classes, c);
      const Eigen::MatrixXd prob = forest.predict_proba(x_test);
      for (std::size_t i = 0; i < test.size(); ++i) {
        for (int cl = 0; cl < problem.n_classes; ++cl) {
          const double hit = problem.labels[test[i]] == cl ? 1.0 : 0.0;
          const double e = prob(static_cast<Eigen::Index>(i), cl) - hit;
          loss += e * e;
        }
      }
    }
  }
  return loss / n;
}

ForestConfig modal_cell(const std::vector<ForestConfig>& winners, const ForestConfig& base) {
  if (winners.empty()) throw DataError("no tuning winners to vote on");
  std::map<std::pair<int, int>, int> votes;
  for (const auto& w : winners) ++votes[{w.max_depth, w.min_leaf}];
  std::pair<int, int> winner{0, 0};
  int top = -1;
  for (const auto& [cell, count] : votes) {
    const bool better = count > top ||
                        (count == top && (cell.first < winner.first ||
                                          (cell.first == winner.first && cell.second > winner.second)));
    if (better) {
      top = count;
      winner = cell;
    }
  }
  ForestConfig best = base;
  best.max_depth = winner.first;
  best.min_leaf = winner.second;
  return best;
}

TuningResult tune_forest(const std::function<TuningProblem(int)>& draw, const TuningGrid& grid,
                         const ForestConfig& base, std::uint64_t seed) {
  validate(grid);
  validate(base);
  TuningResult result;
  for (int r = 0; r < grid.draws; ++r) {
    const TuningProblem problem = draw(r);
    const std::uint64_t draw_seed = derive_seed(seed, static_cast<std::uint64_t>(r));
    double best_loss = 0.0;
    ForestConfig best;
    bool first = true;
    for (int depth : grid.depths) {
      for (int leaf : grid.leaves) {
        ForestConfig cfg = base;
        cfg.max_depth = depth;
        cfg.min_leaf = leaf;
        cfg.seed = derive_seed(draw_seed, 1);
        const double loss = cv_loss(problem, cfg, grid.folds, derive_seed(draw_seed, 2));
        if (first || loss < best_loss) {
          best_loss = loss;
          best = cfg;
          first = false;
        }
      }
    }
    best.seed = base.seed;
    result.per_draw.push_back(best);
  }
  result.best = modal_cell(result.per_draw, base);
  return result;
}

NuisanceTuning tune_nuisances(const std::function<Dataset(int)>& draw, const EffectTarget& target,
                              const TuningGrid& grid, const ForestConfig& base,
                              std::uint64_t seed) {
  validate(grid);
  validate(base);
  std::vector<Dataset> draws;
  for (int r = 0; r < grid.draws; ++r) draws.push_back(draw(r));
  check_target(target, draws.front());
  const bool second = !draws.front().w_cols.empty();
  std::vector<Eigen::VectorXd> deltas;
  if (second) {
    ForestSet first;
    first.mu = first.pi = base;
    const ForestNuisance src(first);
    for (int r = 0; r < grid.draws; ++r) {
      DmlConfig cfg;
      cfg.seed = derive_seed(seed, 0xde17a, static_cast<std::uint64_t>(r));
      deltas.push_back(cross_fitted_pseudo_outcomes(draws[r], target, cfg, src));
    }
  }
  auto subset = [](const std::vector<int>& labels, int level) {
    std::vector<int> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == level) rows.push_back(static_cast<int>(i));
    }
    return rows;
  };
  NuisanceTuning out;
  std::uint64_t role_seed = 0;
  auto run = [&](const std::string& name, const std::function<TuningProblem(int)>& problem) {
    out.roles.emplace_back(name, tune_forest(problem, grid, base, derive_seed(seed, ++role_seed)));
    return out.roles.back().second.best;
  };
  const auto [l, m] = target.treat_contrast;
  for (int d : {l, m}) {
    out.forests.mu_by_level[d] = run("mu" + std::to_string(d), [&, d](int r) {
      const Dataset& data = draws[r];
      const auto rows = subset(data.d, d);
      TuningProblem p;
      p.features = gather_rows(data.moderator_and_covariates(), rows);
      p.targets = gather(data.y, rows);
      return p;
    });
  }
  out.forests.mu = out.forests.mu_by_level[l];
  out.forests.pi = run("pi", [&](int r) {
    const Dataset& data = draws[r];
    TuningProblem p;
    p.mode = ForestMode::probability;
    p.features = data.moderator_and_covariates();
    p.labels = data.d;
    p.n_classes = data.treat_levels;
    return p;
  });
  if (second) {
    const int u = target.is_single_group() ? target.group : target.group_contrast.first;
    const int v = target.is_single_group() ? target.group : target.group_contrast.second;
    for (int z : {u, v}) {
      if (out.forests.g_by_level.count(z)) continue;
      out.forests.g_by_level[z] = run("g" + std::to_string(z), [&, z](int r) {
        const Dataset& data = draws[r];
        const auto rows = subset(data.z, z);
        TuningProblem p;
        p.features = gather_rows(data.balancing(), rows);
        p.targets = gather(deltas[r], rows);
        return p;
      });
    }
    out.forests.g = out.forests.g_by_level[u];
    out.forests.lambda = run("lambda", [&](int r) {
      const Dataset& data = draws[r];
      TuningProblem p;
      p.mode = ForestMode::probability;
      p.features = data.balancing();
      p.labels = data.z;
      p.n_classes = data.moderator_levels;
      return p;
    });
  }
  out.forests.omega = out.forests.pi;
  out.forests.lambda_x = out.forests.pi;
  return out;
}

nlohmann::json to_json(const NuisanceTuning& t) {
  nlohmann::json roles = nlohmann::json::object();
  for (const auto& [name, result] : t.roles) {
    nlohmann::json per_draw = nlohmann::json::array();
    for (const auto& c : result.per_draw) per_draw.push_back({c.max_depth, c.min_leaf});
    roles[name] = {{"max_depth", result.best.max_depth},
                   {"min_leaf", result.best.min_leaf},
                   {"per_draw", per_draw}};
  }
  return {{"roles", roles}, {"forests", to_json(t.forests)}};
}

}  // namespace bgate
