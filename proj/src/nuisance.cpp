#include "bgate/nuisance.hpp"

#include <string>

#include "bgate/random.hpp"
#include "bgate/scores.hpp"

namespace bgate {

ForestConfig ForestSet::mu_for(int d) const {
  const auto it = mu_by_level.find(d);
  return it == mu_by_level.end() ? mu : it->second;
}

ForestConfig ForestSet::g_for(int z) const {
  const auto it = g_by_level.find(z);
  return it == g_by_level.end() ? g : it->second;
}

void ForestSet::set_trees(int n_trees) {
  for (ForestConfig* c : {&mu, &pi, &g, &lambda, &omega, &lambda_x}) c->n_trees = n_trees;
  for (auto& [level, c] : mu_by_level) c.n_trees = n_trees;
  for (auto& [level, c] : g_by_level) c.n_trees = n_trees;
}

namespace {

nlohmann::json level_map_json(const std::map<int, ForestConfig>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [level, cfg] : m) j[std::to_string(level)] = to_json(cfg);
  return j;
}

void read_level_map(const nlohmann::json& j, const char* key, const ForestConfig& role_default,
                    std::map<int, ForestConfig>& out) {
  if (!j.contains(key)) return;
  const auto& m = j.at(key);
  if (!m.is_object()) throw DataError(std::string(key) + " must be an object");
  for (const auto& [name, cfg] : m.items()) {
    int level = 0;
    try {
      level = std::stoi(name);
    } catch (const std::exception&) {
      throw DataError(std::string(key) + ": level keys must be integers");
    }
    const auto it = out.find(level);
    out[level] = forest_config_from_json(cfg, it == out.end() ? role_default : it->second);
  }
}

Eigen::MatrixXd z_and_x(const Dataset& data, std::span<const int> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), data.p() + 1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    out(i, 0) = data.z[rows[r]];
    out.row(i).tail(data.p()) = data.x.row(rows[r]);
  }
  return out;
}

Eigen::MatrixXd w_only(const Dataset& data, std::span<const int> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(data.w_cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < data.w_cols.size(); ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          data.x(rows[r], data.w_cols[c]);
    }
  }
  return out;
}

Eigen::MatrixXd x_only(const Dataset& data, std::span<const int> rows) {
  return gather_rows(data.x, rows);
}

ForestConfig seeded(ForestConfig cfg, std::uint64_t seed) {
  cfg.seed = derive_seed(seed, cfg.seed);
  return cfg;
}

void require_rows(std::span<const int> rows, const std::string& what) {
  if (rows.empty()) throw EstimationError("no training rows for " + what);
}

Eigen::VectorXd regress(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train,
                        const Eigen::MatrixXd& x_eval, const ForestConfig& cfg) {
  if (x_train.cols() == 0) {
    return Eigen::VectorXd::Constant(x_eval.rows(), y_train.mean());
  }
  return fit_regression_forest(x_train, y_train, cfg).predict(x_eval);
}

Eigen::MatrixXd classify(const Eigen::MatrixXd& x_train, const std::vector<int>& labels,
                         int n_classes, const Eigen::MatrixXd& x_eval, const ForestConfig& cfg,
                         const std::string& what) {
  std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
  for (int l : labels) ++counts[l];
  int present = 0;
  for (int c : counts) present += c > 0;
  if (present < 2) throw EstimationError(what + ": training rows contain a single level");
  if (x_train.cols() == 0) {
    Eigen::RowVectorXd freq(n_classes);
    for (int c = 0; c < n_classes; ++c) freq[c] = double(counts[c]) / labels.size();
    return freq.replicate(x_eval.rows(), 1);
  }
  return fit_probability_forest(x_train, labels, n_classes, cfg).predict_proba(x_eval);
}

}  // namespace

nlohmann::json to_json(const ForestSet& set) {
  return {{"mu", to_json(set.mu)},
          {"mu_by_level", level_map_json(set.mu_by_level)},
          {"pi", to_json(set.pi)},
          {"g", to_json(set.g)},
          {"g_by_level", level_map_json(set.g_by_level)},
          {"lambda", to_json(set.lambda)},
          {"omega", to_json(set.omega)},
          {"lambda_x", to_json(set.lambda_x)}};
}

ForestSet forest_set_from_json(const nlohmann::json& j, ForestSet base) {
  if (!j.is_object()) throw DataError("forest set must be a JSON object");
  auto read = [&](const char* key, ForestConfig& cfg) {
    if (j.contains(key)) cfg = forest_config_from_json(j.at(key), cfg);
  };
  read("mu", base.mu);
  read("pi", base.pi);
  read("g", base.g);
  read("lambda", base.lambda);
  read("omega", base.omega);
  read("lambda_x", base.lambda_x);
  read_level_map(j, "mu_by_level", base.mu, base.mu_by_level);
  read_level_map(j, "g_by_level", base.g, base.g_by_level);
  return base;
}

Eigen::VectorXd ForestNuisance::outcome(const Dataset& data, std::span<const int> train, int d,
                                        std::span<const int> eval, std::uint64_t seed) const {
  const auto rows = rows_with(data.d, train, d);
  require_rows(rows, "outcome model of treatment " + std::to_string(d));
  return regress(z_and_x(data, rows), gather(data.y, rows), z_and_x(data, eval),
                 seeded(set_.mu_for(d), seed));
}

Eigen::MatrixXd ForestNuisance::treatment_propensity(const Dataset& data,
                                                     std::span<const int> train,
                                                     std::span<const int> eval,
                                                     std::uint64_t seed) const {
  return classify(z_and_x(data, train), gather(data.d, train), data.treat_levels,
                  z_and_x(data, eval), seeded(set_.pi, seed), "treatment propensity");
}

Eigen::VectorXd ForestNuisance::pseudo_outcome_regression(const Dataset& data,
                                                          const Eigen::VectorXd& delta,
                                                          std::span<const int> train, int z,
                                                          std::span<const int> eval,
                                                          std::uint64_t seed) const {
  const auto rows = rows_with(data.z, train, z);
  require_rows(rows, "pseudo-outcome regression of group " + std::to_string(z));
  return regress(w_only(data, rows), gather(delta, rows), w_only(data, eval),
                 seeded(set_.g_for(z), seed));
}

Eigen::MatrixXd ForestNuisance::moderator_propensity(const Dataset& data,
                                                     std::span<const int> train,
                                                     std::span<const int> eval,
                                                     std::uint64_t seed) const {
  return classify(w_only(data, train), gather(data.z, train), data.moderator_levels,
                  w_only(data, eval), seeded(set_.lambda, seed), "moderator propensity");
}

Eigen::VectorXd ForestNuisance::cell_outcome(const Dataset& data, std::span<const int> train,
                                             int d, int z, std::span<const int> eval,
                                             std::uint64_t seed) const {
  std::vector<int> rows;
  for (int i : train) {
    if (data.d[i] == d && data.z[i] == z) rows.push_back(i);
  }
  require_rows(rows, "cell (" + std::to_string(d) + ", " + std::to_string(z) + ")");
  return regress(x_only(data, rows), gather(data.y, rows), x_only(data, eval),
                 seeded(set_.mu_for(d), seed));
}

Eigen::MatrixXd ForestNuisance::joint_propensity(const Dataset& data, std::span<const int> train,
                                                 std::span<const int> eval,
                                                 std::uint64_t seed) const {
  std::vector<int> labels;
  labels.reserve(train.size());
  for (int i : train) labels.push_back(cell_code(data.d[i], data.z[i], data.moderator_levels));
  return classify(x_only(data, train), labels, data.treat_levels * data.moderator_levels,
                  x_only(data, eval), seeded(set_.omega, seed), "joint propensity");
}

Eigen::MatrixXd ForestNuisance::moderator_propensity_x(const Dataset& data,
                                                       std::span<const int> train,
                                                       std::span<const int> eval,
                                                       std::uint64_t seed) const {
  return classify(x_only(data, train), gather(data.z, train), data.moderator_levels,
                  x_only(data, eval), seeded(set_.lambda_x, seed), "moderator propensity");
}

std::unique_ptr<NuisanceSource> ForestNuisance::for_rows(std::vector<int>) const {
  return std::make_unique<ForestNuisance>(set_);
}

}  // namespace bgate
