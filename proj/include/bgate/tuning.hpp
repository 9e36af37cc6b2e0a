#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "bgate/dataset.hpp"
#include "bgate/effect.hpp"
#include "bgate/forest.hpp"
#include "bgate/nuisance.hpp"
#include "json.hpp"

namespace bgate {

struct TuningGrid {
  std::vector<int> depths{2, 3, 5, 10, 20};
  std::vector<int> leaves{5, 10, 15, 20, 30, 50};
  int folds = 5;
  int draws = 20;
};

void validate(const TuningGrid& grid);

/// One learning problem for the tuner. Regression problems use `targets`,
/// probability problems use `labels` with `n_classes` levels.
struct TuningProblem {
  ForestMode mode = ForestMode::regression;
  Eigen::MatrixXd features;
  Eigen::VectorXd targets;
  std::vector<int> labels;
  int n_classes = 2;
};

/// Cross-validated loss (MSE or Brier score) of one configuration.
double cv_loss(const TuningProblem& problem, const ForestConfig& cfg, int folds,
               std::uint64_t seed);

struct TuningResult {
  ForestConfig best;
  std::vector<ForestConfig> per_draw;  // winning cell of every draw
};

/// Most frequent (max_depth, min_leaf) among `winners`; ties go to the smaller
/// depth, then the larger leaf size. Other fields come from `base`.
ForestConfig modal_cell(const std::vector<ForestConfig>& winners, const ForestConfig& base);

/// Grid search over (max_depth, min_leaf). Each draw asks `draw` for a problem,
/// picks the cell with the smallest CV loss, and the modal cell across draws
/// wins; ties go to the smaller depth, then the larger leaf size. Other fields
/// are copied from `base`.
TuningResult tune_forest(const std::function<TuningProblem(int)>& draw, const TuningGrid& grid,
                         const ForestConfig& base, std::uint64_t seed);

/// Tuned cells per nuisance role, named mu<d>, pi, g<z> and lambda after the
/// level codes of the target's contrasts.
struct NuisanceTuning {
  std::vector<std::pair<std::string, TuningResult>> roles;
  ForestSet forests;
};

/// Tunes every forest of the cross-fitted difference estimators. `draw(r)`
/// supplies the dataset of draw r. Second-stage problems regress
/// pseudo-outcomes built with `base` forests; they are skipped when W is empty.
NuisanceTuning tune_nuisances(const std::function<Dataset(int)>& draw, const EffectTarget& target,
                              const TuningGrid& grid, const ForestConfig& base,
                              std::uint64_t seed);

nlohmann::json to_json(const NuisanceTuning& t);

}  // namespace bgate
