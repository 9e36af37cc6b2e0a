#include "bgate/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "bgate/dataset.hpp"
#include "bgate/parallel.hpp"
#include "bgate/random.hpp"

namespace bgate {

namespace {

// Small per-node generator; node streams are keyed by the node's path so a
// deeper tree refines a shallower one grown from the same seed.
struct SplitMix {
  using result_type = std::uint64_t;
  std::uint64_t state;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
};

struct TrainingSet {
  const Eigen::MatrixXd& x;
  const double* y = nullptr;
  const int* labels = nullptr;
  int n_classes = 1;
  std::vector<std::vector<int>> sorted;  // rows ordered by each feature
};

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double score = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const TrainingSet& set, const ForestConfig& cfg, ForestMode mode, int mtry,
              std::uint64_t tree_seed)
      : set_(set), cfg_(cfg), mode_(mode), mtry_(mtry), tree_seed_(tree_seed) {}

  template <class Tree>
  void build(Tree& tree) {
    const int n = static_cast<int>(set_.x.rows());
    if (cfg_.bootstrap) {
      Rng rng(tree_seed_);
      std::uniform_int_distribution<int> pick(0, n - 1);
      idx_.resize(static_cast<std::size_t>(n));
      for (auto& r : idx_) r = pick(rng);
    } else {
      idx_ = iota_rows(n);
    }
    mult_.assign(static_cast<std::size_t>(n), 0);
    features_.resize(static_cast<std::size_t>(set_.x.cols()));
    std::iota(features_.begin(), features_.end(), 0);
    counts_.assign(static_cast<std::size_t>(set_.n_classes), 0.0);
    left_counts_.assign(static_cast<std::size_t>(set_.n_classes), 0.0);
    build_node(tree, 0, n, 0, 1);
  }

 private:
  template <class Tree>
  int build_node(Tree& tree, int begin, int end, int depth, std::uint64_t node_key) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    Split split;
    const int size = end - begin;
    if (depth < cfg_.max_depth && size >= 2 * cfg_.min_leaf && !is_pure(begin, end)) {
      split = find_split(begin, end, node_key);
    }
    if (split.feature < 0) {
      tree.nodes[id].value = static_cast<int>(tree.values.size());
      write_leaf(tree.values, begin, end);
      return id;
    }
    const auto& x = set_.x;
    auto mid_it = std::partition(idx_.begin() + begin, idx_.begin() + end, [&](int r) {
      return x(r, split.feature) <= split.threshold;
    });
    const int mid = static_cast<int>(mid_it - idx_.begin());
    const int left = build_node(tree, begin, mid, depth + 1, derive_seed(node_key, 1));
    const int right = build_node(tree, mid, end, depth + 1, derive_seed(node_key, 2));
    auto& node = tree.nodes[id];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left;
    node.right = right;
    return id;
  }

  bool is_pure(int begin, int end) const {
    if (mode_ == ForestMode::regression) {
      const double first = set_.y[idx_[begin]];
      for (int i = begin + 1; i < end; ++i) {
        if (set_.y[idx_[i]] != first) return false;
      }
      return true;
    }
    const int first = set_.labels[idx_[begin]];
    for (int i = begin + 1; i < end; ++i) {
      if (set_.labels[idx_[i]] != first) return false;
    }
    return true;
  }

  void write_leaf(std::vector<double>& values, int begin, int end) const {
    const double size = end - begin;
    if (mode_ == ForestMode::regression) {
      double sum = 0.0;
      for (int i = begin; i < end; ++i) sum += set_.y[idx_[i]];
      values.push_back(sum / size);
      return;
    }
    const auto offset = values.size();
    values.resize(offset + static_cast<std::size_t>(set_.n_classes), 0.0);
    for (int i = begin; i < end; ++i) values[offset + set_.labels[idx_[i]]] += 1.0;
    for (int c = 0; c < set_.n_classes; ++c) values[offset + c] /= size;
  }

  // Fills vals_/rows_ with the node's samples ordered by feature f.
  void sorted_samples(int begin, int end, int f, bool scan) {
    const int size = end - begin;
    vals_.resize(static_cast<std::size_t>(size));
    rows_.resize(static_cast<std::size_t>(size));
    const auto& x = set_.x;
    if (scan) {
      int k = 0;
      for (int r : set_.sorted[f]) {
        for (int c = 0; c < mult_[r]; ++c) {
          vals_[k] = x(r, f);
          rows_[k] = r;
          ++k;
        }
      }
      return;
    }
    pairs_.resize(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) {
      const int r = idx_[begin + i];
      pairs_[i] = {x(r, f), r};
    }
    std::sort(pairs_.begin(), pairs_.end());
    for (int i = 0; i < size; ++i) {
      vals_[i] = pairs_[i].first;
      rows_[i] = pairs_[i].second;
    }
  }

  Split find_split(int begin, int end, std::uint64_t node_key) {
    const int size = end - begin;
    const int n_rows = static_cast<int>(set_.x.rows());
    const bool scan = 1.5 * size * std::log2(size + 1.0) >= n_rows;
    if (scan) {
      for (int i = begin; i < end; ++i) ++mult_[idx_[i]];
    }

    // Parent score and the gain threshold below which a split is noise.
    double parent = 0.0;
    double scale = 0.0;
    if (mode_ == ForestMode::regression) {
      double sum = 0.0;
      for (int i = begin; i < end; ++i) {
        const double v = set_.y[idx_[i]];
        sum += v;
        scale += v * v;
      }
      parent = sum * sum / size;
    } else {
      std::fill(counts_.begin(), counts_.end(), 0.0);
      for (int i = begin; i < end; ++i) counts_[set_.labels[idx_[i]]] += 1.0;
      for (double c : counts_) parent += c * c;
      parent /= size;
      scale = size;
    }
    const double min_gain = 1e-12 * std::max(scale, 1.0);

    SplitMix rng{derive_seed(tree_seed_, node_key)};
    const int p = static_cast<int>(features_.size());
    Split best;
    best.score = parent + min_gain;
    int inspected = 0;
    for (int k = 0; k < p; ++k) {
      std::uniform_int_distribution<int> pick(k, p - 1);
      std::swap(features_[k], features_[pick(rng)]);
      const int f = features_[k];
      sorted_samples(begin, end, f, scan);
      if (mode_ == ForestMode::regression) {
        sweep_regression(f, size, best);
      } else {
        sweep_classification(f, size, best);
      }
      ++inspected;
      if (inspected >= mtry_ && best.feature >= 0) break;
    }

    if (scan) {
      for (int i = begin; i < end; ++i) mult_[idx_[i]] = 0;
    }
    return best;
  }

  void sweep_regression(int f, int size, Split& best) {
    double total = 0.0;
    for (int i = 0; i < size; ++i) total += set_.y[rows_[i]];
    double left = 0.0;
    const int min_leaf = cfg_.min_leaf;
    for (int i = 0; i < size - 1; ++i) {
      left += set_.y[rows_[i]];
      const int nl = i + 1;
      const int nr = size - nl;
      if (nr < min_leaf) break;
      if (nl < min_leaf || vals_[i] == vals_[i + 1]) continue;
      const double right = total - left;
      const double score = left * left / nl + right * right / nr;
      if (score > best.score) record(f, i, score, best);
    }
  }

  void sweep_classification(int f, int size, Split& best) {
    std::fill(counts_.begin(), counts_.end(), 0.0);
    std::fill(left_counts_.begin(), left_counts_.end(), 0.0);
    for (int i = 0; i < size; ++i) counts_[set_.labels[rows_[i]]] += 1.0;
    const int min_leaf = cfg_.min_leaf;
    const int k = set_.n_classes;
    for (int i = 0; i < size - 1; ++i) {
      left_counts_[set_.labels[rows_[i]]] += 1.0;
      const int nl = i + 1;
      const int nr = size - nl;
      if (nr < min_leaf) break;
      if (nl < min_leaf || vals_[i] == vals_[i + 1]) continue;
      double sl = 0.0;
      double sr = 0.0;
      for (int c = 0; c < k; ++c) {
        sl += left_counts_[c] * left_counts_[c];
        const double rc = counts_[c] - left_counts_[c];
        sr += rc * rc;
      }
      const double score = sl / nl + sr / nr;
      if (score > best.score) record(f, i, score, best);
    }
  }

  void record(int f, int i, double score, Split& best) const {
    double threshold = 0.5 * (vals_[i] + vals_[i + 1]);
    if (threshold >= vals_[i + 1]) threshold = vals_[i];
    best.feature = f;
    best.threshold = threshold;
    best.score = score;
  }

  const TrainingSet& set_;
  const ForestConfig& cfg_;
  ForestMode mode_;
  int mtry_;
  std::uint64_t tree_seed_;
  std::vector<int> idx_;
  std::vector<int> mult_;
  std::vector<int> features_;
  std::vector<double> vals_;
  std::vector<int> rows_;
  std::vector<std::pair<double, int>> pairs_;
  std::vector<double> counts_;
  std::vector<double> left_counts_;
};

int resolve_mtry(const ForestConfig& cfg, int p, ForestMode mode) {
  if (p == 0) return 0;
  int mtry = cfg.features_per_split;
  if (mtry <= 0) {
    mtry = mode == ForestMode::regression ? (p + 2) / 3
                                          : static_cast<int>(std::ceil(std::sqrt(double(p))));
  }
  return std::clamp(mtry, 1, p);
}

std::vector<std::vector<int>> presort(const Eigen::MatrixXd& x) {
  std::vector<std::vector<int>> sorted(static_cast<std::size_t>(x.cols()));
  const int n = static_cast<int>(x.rows());
  for (int f = 0; f < x.cols(); ++f) {
    auto& order = sorted[f];
    order = iota_rows(n);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return x(a, f) < x(b, f); });
  }
  return sorted;
}

}  // namespace

nlohmann::json to_json(const ForestConfig& cfg) {
  return {{"n_trees", cfg.n_trees},
          {"max_depth", cfg.max_depth},
          {"min_leaf", cfg.min_leaf},
          {"features_per_split", cfg.features_per_split},
          {"bootstrap", cfg.bootstrap},
          {"seed", cfg.seed}};
}

ForestConfig forest_config_from_json(const nlohmann::json& j, ForestConfig base) {
  if (!j.is_object()) throw DataError("forest configuration must be a JSON object");
  try {
    if (j.contains("n_trees")) base.n_trees = j.at("n_trees").get<int>();
    if (j.contains("max_depth")) base.max_depth = j.at("max_depth").get<int>();
    if (j.contains("min_leaf")) base.min_leaf = j.at("min_leaf").get<int>();
    if (j.contains("features_per_split")) {
      base.features_per_split = j.at("features_per_split").get<int>();
    }
    if (j.contains("bootstrap")) base.bootstrap = j.at("bootstrap").get<bool>();
    if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid forest configuration: ") + e.what());
  }
  validate(base);
  return base;
}

void validate(const ForestConfig& cfg) {
  if (cfg.n_trees < 1) throw DataError("n_trees must be positive");
  if (cfg.max_depth < 1) throw DataError("max_depth must be positive");
  if (cfg.min_leaf < 1) throw DataError("min_leaf must be at least 1");
  if (cfg.features_per_split < 0) throw DataError("features_per_split must be non-negative");
}

const double* Forest::leaf_values(const Tree& tree, const Eigen::MatrixXd& x,
                                  Eigen::Index row) const {
  int node = 0;
  while (tree.nodes[node].feature >= 0) {
    const auto& nd = tree.nodes[node];
    node = x(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
  }
  return tree.values.data() + tree.nodes[node].value;
}

Eigen::VectorXd Forest::predict(const Eigen::MatrixXd& x) const {
  if (mode_ != ForestMode::regression) {
    throw DataError("predict() needs a regression forest; use predict_proba()");
  }
  if (x.cols() != n_features_) throw DataError("feature count does not match the fitted forest");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
  for (const auto& tree : trees_) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) out[r] += *leaf_values(tree, x, r);
  }
  return out / static_cast<double>(trees_.size());
}

Eigen::MatrixXd Forest::predict_proba(const Eigen::MatrixXd& x) const {
  if (mode_ != ForestMode::probability) {
    throw DataError("predict_proba() needs a probability forest");
  }
  if (x.cols() != n_features_) throw DataError("feature count does not match the fitted forest");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), n_classes_);
  for (const auto& tree : trees_) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double* v = leaf_values(tree, x, r);
      for (int c = 0; c < n_classes_; ++c) out(r, c) += v[c];
    }
  }
  return out / static_cast<double>(trees_.size());
}

namespace {

template <class ForestT, class TreeT>
void grow(std::vector<TreeT>& trees, const TrainingSet& set, const ForestConfig& cfg,
          ForestMode mode) {
  const int mtry = resolve_mtry(cfg, static_cast<int>(set.x.cols()), mode);
  trees.resize(static_cast<std::size_t>(cfg.n_trees));
  parallel_for(cfg.n_trees, [&](int t) {
    TreeBuilder builder(set, cfg, mode, mtry, derive_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    builder.build(trees[t]);
  });
}

}  // namespace

Forest fit_regression_forest(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                             const ForestConfig& cfg) {
  validate(cfg);
  if (features.rows() != targets.size()) throw DataError("features and targets differ in length");
  if (features.rows() == 0) throw DataError("cannot fit a forest on zero rows");
  Forest forest;
  forest.mode_ = ForestMode::regression;
  forest.n_features_ = static_cast<int>(features.cols());
  forest.n_classes_ = 1;
  TrainingSet set{features, targets.data(), nullptr, 1, presort(features)};
  grow<Forest>(forest.trees_, set, cfg, ForestMode::regression);
  return forest;
}

Forest fit_probability_forest(const Eigen::MatrixXd& features, std::span<const int> labels,
                              int n_classes, const ForestConfig& cfg) {
  validate(cfg);
  if (features.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw DataError("features and labels differ in length");
  }
  if (n_classes < 2) throw DataError("a probability forest needs at least two classes");
  std::vector<int> seen(static_cast<std::size_t>(n_classes), 0);
  for (int label : labels) {
    if (label < 0 || label >= n_classes) throw DataError("class label out of range");
    seen[label] = 1;
  }
  if (std::accumulate(seen.begin(), seen.end(), 0) < 2) {
    throw DataError("labels have a single level; cannot fit a probability forest");
  }
  Forest forest;
  forest.mode_ = ForestMode::probability;
  forest.n_features_ = static_cast<int>(features.cols());
  forest.n_classes_ = n_classes;
  TrainingSet set{features, nullptr, labels.data(), n_classes, presort(features)};
  grow<Forest>(forest.trees_, set, cfg, ForestMode::probability);
  return forest;
}

}  // namespace bgate
