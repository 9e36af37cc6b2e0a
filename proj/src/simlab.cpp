#include "bgate/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <boost/math/special_functions/beta.hpp>

#include "bgate/parallel.hpp"
#include "bgate/random.hpp"
#include "bgate/reweight.hpp"

namespace bgate {

double beta_cdf(double x, double a, double b) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return boost::math::ibeta(a, b, x);
}

double beta24_cdf(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double q = 1.0 - x;
  return 1.0 - std::pow(q, 5) - 5.0 * x * std::pow(q, 4);
}

namespace {

struct Unit {
  double x[kDgpCovariates];
  double mu0, mu1_z1, mu1_z0, p_z, p_d_z1, p_d_z0;
};

Unit draw_unit(Rng& rng) {
  static const double sd = std::sqrt(1.0 / 12.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> norm(0.5, sd);
  Unit u{};
  u.x[0] = unif(rng);
  u.x[1] = unif(rng);
  for (int c = 2; c < kDgpCovariates; ++c) u.x[c] = norm(rng);
  const double* x = u.x;
  u.mu0 = std::sin(std::numbers::pi * x[0] * x[1]) + (x[2] - 0.5) * (x[2] - 0.5) + 0.1 * x[3] +
          0.3 * x[5];
  u.mu1_z1 = u.mu0 + std::sin(4.9 * x[0]) + std::sin(2.0 * x[1]) + 0.7 * std::pow(x[2], 4) +
             0.4 * x[5] + 0.2;
  u.mu1_z0 = u.mu0 + std::sin(1.4 * x[0]) + std::sin(6.0 * x[1]) + 0.6 * x[2] * x[2] + 0.3 * x[5];
  u.p_z = 0.1 + 0.8 * beta_cdf(x[0] * x[1], 2.0, 4.0);
  const double s = x[0] + x[1] + x[2] + x[5];
  u.p_d_z1 = 0.2 + 0.6 * beta_cdf((s + 1.0) / 5.0, 2.0, 4.0);
  u.p_d_z0 = 0.2 + 0.6 * beta_cdf(s / 5.0, 2.0, 4.0);
  return u;
}

}  // namespace

DgpSample generate(int n, std::uint64_t seed) {
  if (n < 1) throw DataError("sample size must be positive");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  DgpSample s;
  Eigen::VectorXd y(n);
  std::vector<int> d(n), z(n);
  Eigen::MatrixXd x(n, kDgpCovariates);
  s.mu0.resize(n);
  s.mu1_z1.resize(n);
  s.mu1_z0.resize(n);
  s.y0.resize(n);
  s.y1.resize(n);
  s.p_z.resize(n);
  s.p_d_z1.resize(n);
  s.p_d_z0.resize(n);
  for (int i = 0; i < n; ++i) {
    const Unit u = draw_unit(rng);
    for (int c = 0; c < kDgpCovariates; ++c) x(i, c) = u.x[c];
    z[i] = unif(rng) < u.p_z ? 1 : 0;
    const double p_d = z[i] ? u.p_d_z1 : u.p_d_z0;
    d[i] = unif(rng) < p_d ? 1 : 0;
    double e[2][2];
    for (auto& row : e) {
      for (double& v : row) v = noise(rng);
    }
    s.mu0[i] = u.mu0;
    s.mu1_z1[i] = u.mu1_z1;
    s.mu1_z0[i] = u.mu1_z0;
    s.p_z[i] = u.p_z;
    s.p_d_z1[i] = u.p_d_z1;
    s.p_d_z0[i] = u.p_d_z0;
    s.y0[i] = u.mu0 + e[0][z[i]];
    s.y1[i] = (z[i] ? u.mu1_z1 : u.mu1_z0) + e[1][z[i]];
    y[i] = d[i] ? s.y1[i] : s.y0[i];
  }
  std::vector<std::string> names;
  for (int c = 0; c < kDgpCovariates; ++c) names.push_back("x" + std::to_string(c));
  // Tiny samples may miss a level; keep the declared binary coding regardless.
  s.data.y = std::move(y);
  s.data.d = std::move(d);
  s.data.z = std::move(z);
  s.data.x = std::move(x);
  s.data.covariate_names = std::move(names);
  s.data.treat_levels = 2;
  s.data.moderator_levels = 2;
  return s;
}

std::string to_string(SimTarget t) {
  switch (t) {
    case SimTarget::DeltaBgateX0: return "delta-bgate-x0";
    case SimTarget::DeltaBgateX2: return "delta-bgate-x2";
    case SimTarget::DeltaGate: return "delta-gate";
    case SimTarget::DeltaCbgate: return "delta-cbgate";
  }
  return "";
}

SimTarget sim_target_from_string(const std::string& name) {
  for (auto t : {SimTarget::DeltaBgateX0, SimTarget::DeltaBgateX2, SimTarget::DeltaGate,
                 SimTarget::DeltaCbgate}) {
    if (to_string(t) == name) return t;
  }
  throw DataError("unknown simulation effect '" + name +
                  "' (expected delta-bgate-x0, delta-bgate-x2, delta-gate or delta-cbgate)");
}

EffectTarget effect_target(SimTarget t) {
  switch (t) {
    case SimTarget::DeltaBgateX0:
    case SimTarget::DeltaBgateX2: return EffectTarget::delta_bgate();
    case SimTarget::DeltaGate: return EffectTarget::delta_gate();
    case SimTarget::DeltaCbgate: return EffectTarget::delta_cbgate();
  }
  return {};
}

std::vector<int> balancing_columns(SimTarget t) {
  if (t == SimTarget::DeltaBgateX0) return {0};
  if (t == SimTarget::DeltaBgateX2) return {2};
  return {};
}

int BinnedSurfaces::bin(double w) const {
  return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), w) - edges.begin());
}

Truth true_effect(SimTarget target, int n_truth, std::uint64_t seed, int bins) {
  if (n_truth < 100000) throw DataError("truth sample must have at least 1e5 units");
  if (bins < 1) throw DataError("bins must be positive");
  const DgpSample s = generate(n_truth, seed);
  const int n = n_truth;
  Truth truth;
  auto finish = [&](const Eigen::ArrayXd& psi, double value) {
    truth.value = value;
    truth.se = std::sqrt((psi - psi.mean()).square().mean() / n);
  };
  if (target == SimTarget::DeltaCbgate) {
    Eigen::ArrayXd diff = (s.mu1_z1 - s.mu1_z0).array();
    finish(diff, diff.mean());
    return truth;
  }
  const Eigen::ArrayXd p = s.p_z.array();
  const Eigen::ArrayXd t1 = (s.mu1_z1 - s.mu0).array();
  const Eigen::ArrayXd t0 = (s.mu1_z0 - s.mu0).array();
  if (target == SimTarget::DeltaGate) {
    // E[tau(X,1) | Z=1] - E[tau(X,0) | Z=0] through the known P(Z=1 | X).
    const double p1 = p.mean();
    const double g1 = (t1 * p).mean() / p1;
    const double g0 = (t0 * (1.0 - p)).mean() / (1.0 - p1);
    const Eigen::ArrayXd psi = p * (t1 - g1) / p1 - (1.0 - p) * (t0 - g0) / (1.0 - p1);
    finish(psi, g1 - g0);
    return truth;
  }

  BinnedSurfaces surf;
  surf.w_col = balancing_columns(target).front();
  std::vector<double> w(s.data.x.col(surf.w_col).data(), s.data.x.col(surf.w_col).data() + n);
  std::vector<double> sorted = w;
  std::sort(sorted.begin(), sorted.end());
  for (int b = 1; b < bins; ++b) surf.edges.push_back(sorted[static_cast<std::size_t>(b) * n / bins]);
  std::vector<int> bin(n);
  for (int i = 0; i < n; ++i) bin[i] = surf.bin(w[i]);
  std::vector<double> cnt(bins, 0.0), sp(bins, 0.0), s1(bins, 0.0), s0(bins, 0.0);
  for (int i = 0; i < n; ++i) {
    const int b = bin[i];
    cnt[b] += 1.0;
    sp[b] += p[i];
    s1[b] += t1[i] * p[i];
    s0[b] += t0[i] * (1.0 - p[i]);
  }
  surf.g[0].resize(bins);
  surf.g[1].resize(bins);
  surf.lambda.resize(bins);
  surf.share.resize(bins);
  double value = 0.0;
  for (int b = 0; b < bins; ++b) {
    surf.lambda[b] = sp[b] / cnt[b];
    surf.g[1][b] = s1[b] / sp[b];
    surf.g[0][b] = s0[b] / (cnt[b] - sp[b]);
    surf.share[b] = cnt[b] / n;
    value += surf.share[b] * (surf.g[1][b] - surf.g[0][b]);
  }
  Eigen::ArrayXd psi(n);
  for (int i = 0; i < n; ++i) {
    const int b = bin[i];
    const double lam = surf.lambda[b];
    psi[i] = surf.g[1][b] - surf.g[0][b] + p[i] * (t1[i] - surf.g[1][b]) / lam -
             (1.0 - p[i]) * (t0[i] - surf.g[0][b]) / (1.0 - lam);
  }
  finish(psi, value);
  truth.surfaces = std::move(surf);
  return truth;
}

OracleNuisance::OracleNuisance(std::shared_ptr<const DgpSample> sample,
                               std::optional<BinnedSurfaces> surfaces, std::vector<int> source_rows)
    : sample_(std::move(sample)), surfaces_(std::move(surfaces)), rows_(std::move(source_rows)) {
  if (!sample_) throw DataError("oracle nuisances need a sample");
}

const BinnedSurfaces& OracleNuisance::surfaces() const {
  if (!surfaces_) throw DataError("oracle second-stage functions need binned surfaces");
  return *surfaces_;
}

Eigen::VectorXd OracleNuisance::outcome(const Dataset&, std::span<const int>, int d,
                                        std::span<const int> eval, std::uint64_t) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(eval.size()));
  for (std::size_t r = 0; r < eval.size(); ++r) {
    const int i = source(eval[r]);
    const int z = sample_->data.z[i];
    out[r] = d ? (z ? sample_->mu1_z1[i] : sample_->mu1_z0[i]) : sample_->mu0[i];
  }
  return out;
}

Eigen::MatrixXd OracleNuisance::treatment_propensity(const Dataset&, std::span<const int>,
                                                     std::span<const int> eval,
                                                     std::uint64_t) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(eval.size()), 2);
  for (std::size_t r = 0; r < eval.size(); ++r) {
    const double p = sample_->p_d(source(eval[r]));
    out(r, 0) = 1.0 - p;
    out(r, 1) = p;
  }
  return out;
}

Eigen::VectorXd OracleNuisance::pseudo_outcome_regression(const Dataset& data,
                                                          const Eigen::VectorXd&,
                                                          std::span<const int>, int z,
                                                          std::span<const int> eval,
                                                          std::uint64_t) const {
  const auto& s = surfaces();
  Eigen::VectorXd out(static_cast<Eigen::Index>(eval.size()));
  for (std::size_t r = 0; r < eval.size(); ++r) {
    out[r] = s.g[z][s.bin(data.x(eval[r], s.w_col))];
  }
  return out;
}

Eigen::MatrixXd OracleNuisance::moderator_propensity(const Dataset& data, std::span<const int>,
                                                     std::span<const int> eval,
                                                     std::uint64_t) const {
  const auto& s = surfaces();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(eval.size()), 2);
  for (std::size_t r = 0; r < eval.size(); ++r) {
    const double lam = s.lambda[s.bin(data.x(eval[r], s.w_col))];
    out(r, 0) = 1.0 - lam;
    out(r, 1) = lam;
  }
  return out;
}

Eigen::VectorXd OracleNuisance::cell_outcome(const Dataset&, std::span<const int>, int d, int z,
                                             std::span<const int> eval, std::uint64_t) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(eval.size()));
  for (std::size_t r = 0; r < eval.size(); ++r) {
    const int i = source(eval[r]);
    out[r] = d ? (z ? sample_->mu1_z1[i] : sample_->mu1_z0[i]) : sample_->mu0[i];
  }
  return out;
}

Eigen::MatrixXd OracleNuisance::joint_propensity(const Dataset&, std::span<const int>,
                                                 std::span<const int> eval, std::uint64_t) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(eval.size()), 4);
  for (std::size_t r = 0; r < eval.size(); ++r) {
    const int i = source(eval[r]);
    const double pz = sample_->p_z[i];
    for (int d = 0; d < 2; ++d) {
      for (int z = 0; z < 2; ++z) {
        const double pd1 = z ? sample_->p_d_z1[i] : sample_->p_d_z0[i];
        out(r, cell_code(d, z, 2)) = (d ? pd1 : 1.0 - pd1) * (z ? pz : 1.0 - pz);
      }
    }
  }
  return out;
}

Eigen::MatrixXd OracleNuisance::moderator_propensity_x(const Dataset&, std::span<const int>,
                                                       std::span<const int> eval,
                                                       std::uint64_t) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(eval.size()), 2);
  for (std::size_t r = 0; r < eval.size(); ++r) {
    const double pz = sample_->p_z[source(eval[r])];
    out(r, 0) = 1.0 - pz;
    out(r, 1) = pz;
  }
  return out;
}

std::unique_ptr<NuisanceSource> OracleNuisance::for_rows(std::vector<int> source_rows) const {
  for (int& r : source_rows) r = source(r);
  return std::make_unique<OracleNuisance>(sample_, surfaces_, std::move(source_rows));
}

ForestSet tabulated_forest_set(SimTarget target, int n) {
  struct Cell {
    int depth, leaf;
  };
  // mu1, mu0, pi, g1, g0, lambda per tabulated size.
  static const int sizes[4] = {1250, 2500, 5000, 10000};
  static const Cell x0[4][6] = {{{20, 5}, {2, 5}, {10, 10}, {2, 5}, {2, 50}, {2, 50}},
                                {{20, 5}, {3, 5}, {5, 10}, {2, 10}, {2, 50}, {2, 50}},
                                {{10, 5}, {3, 5}, {10, 20}, {2, 5}, {2, 50}, {2, 50}},
                                {{10, 5}, {5, 5}, {10, 15}, {2, 5}, {2, 50}, {2, 50}}};
  static const Cell x2[4][6] = {{{20, 5}, {2, 5}, {10, 10}, {2, 5}, {2, 50}, {2, 50}},
                                {{20, 5}, {3, 5}, {5, 10}, {2, 5}, {2, 5}, {2, 50}},
                                {{10, 5}, {3, 5}, {10, 20}, {2, 5}, {2, 5}, {2, 5}},
                                {{10, 5}, {5, 5}, {10, 15}, {2, 5}, {2, 5}, {2, 50}}};
  static const Cell gate[4][3] = {{{20, 5}, {2, 30}, {10, 10}},
                                  {{20, 5}, {2, 50}, {5, 10}},
                                  {{10, 5}, {3, 50}, {10, 30}},
                                  {{10, 10}, {3, 5}, {10, 50}}};
  int row = 0;
  for (int r = 1; r < 4; ++r) {
    if (std::abs(n - sizes[r]) < std::abs(n - sizes[row])) row = r;
  }
  auto cfg = [](Cell c) {
    ForestConfig f;
    f.max_depth = c.depth;
    f.min_leaf = c.leaf;
    return f;
  };
  ForestSet set;
  if (target == SimTarget::DeltaGate) {
    set.mu_by_level[1] = cfg(gate[row][0]);
    set.mu_by_level[0] = cfg(gate[row][1]);
    set.pi = cfg(gate[row][2]);
    set.mu = set.mu_by_level[1];
    return set;
  }
  const auto& t = target == SimTarget::DeltaBgateX2 ? x2[row] : x0[row];
  set.mu_by_level[1] = cfg(t[0]);
  set.mu_by_level[0] = cfg(t[1]);
  set.mu = set.mu_by_level[1];
  set.pi = cfg(t[2]);
  set.g_by_level[1] = cfg(t[3]);
  set.g_by_level[0] = cfg(t[4]);
  set.g = set.g_by_level[1];
  set.lambda = cfg(t[5]);
  set.omega = set.pi;
  set.lambda_x = set.pi;
  return set;
}

PerformanceReport performance_measures(std::span<const double> estimates,
                                       std::span<const double> ses, double truth) {
  if (estimates.size() != ses.size()) throw DataError("estimates and ses differ in length");
  if (estimates.size() < 2) throw DataError("performance measures need at least 2 replications");
  const auto r = static_cast<double>(estimates.size());
  PerformanceReport rep;
  rep.replications = static_cast<int>(estimates.size());
  rep.truth = truth;
  double mean = 0.0, mean_se = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    mean += estimates[i];
    mean_se += ses[i];
    rep.abs_bias += std::abs(estimates[i] - truth);
    rep.rmse += (estimates[i] - truth) * (estimates[i] - truth);
    if (std::abs(estimates[i] - truth) <= 1.96 * ses[i]) rep.coverage_95 += 1.0;
  }
  mean /= r;
  mean_se /= r;
  rep.bias = mean - truth;
  rep.abs_bias /= r;
  rep.rmse = std::sqrt(rep.rmse / r);
  rep.coverage_95 /= r;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double e : estimates) {
    const double c = e - mean;
    m2 += c * c;
    m3 += c * c * c;
    m4 += c * c * c * c;
  }
  m2 /= r;
  m3 /= r;
  m4 /= r;
  rep.std = std::sqrt(m2);
  if (m2 > 0.0) {
    rep.skew = m3 / std::pow(m2, 1.5);
    rep.ex_kurt = m4 / (m2 * m2) - 3.0;
  }
  rep.bias_se = mean_se - rep.std;
  return rep;
}

nlohmann::json to_json(const PerformanceReport& r) {
  return {{"bias", r.bias},         {"abs_bias", r.abs_bias},       {"std", r.std},
          {"rmse", r.rmse},         {"skew", r.skew},               {"ex_kurt", r.ex_kurt},
          {"bias_se", r.bias_se},   {"coverage_95", r.coverage_95}, {"replications", r.replications},
          {"truth", r.truth}};
}

std::string to_string(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::dml: return "dml";
    case EstimatorKind::autodml: return "autodml";
    case EstimatorKind::reweight: return "reweight";
  }
  return "";
}

EstimatorKind estimator_kind_from_string(const std::string& name) {
  for (auto e : {EstimatorKind::dml, EstimatorKind::autodml, EstimatorKind::reweight}) {
    if (to_string(e) == name) return e;
  }
  throw DataError("unknown estimator '" + name + "' (expected dml, autodml or reweight)");
}

void validate(const StudySpec& spec) {
  if (spec.reps < 2) throw DataError("reps must be at least 2");
  if (spec.n < 1) throw DataError("n must be positive");
  if (spec.k < 2 || spec.j < 2) throw DataError("k and j must be at least 2");
  if (spec.n < spec.k * spec.j) throw DataError("n is too small for the requested folds");
  if (spec.n_trees < 1) throw DataError("n_trees must be positive");
  if (spec.truth_n < 100000) throw DataError("truth_n must be at least 100000");
  const bool balanced = spec.target == SimTarget::DeltaBgateX0 ||
                        spec.target == SimTarget::DeltaBgateX2;
  if (spec.estimator == EstimatorKind::reweight && !balanced) {
    throw DataError("unsupported combination: reweight needs a delta-bgate effect");
  }
  if (spec.estimator == EstimatorKind::autodml && spec.oracle) {
    throw DataError("unsupported combination: autodml learns its own nuisances");
  }
  if (spec.estimator == EstimatorKind::autodml && !balanced) {
    throw DataError("unsupported combination: autodml needs a delta-bgate effect");
  }
  validate(spec.stage1);
  validate(spec.stage2);
}

nlohmann::json to_json(const StudySpec& spec) {
  nlohmann::json j = {{"effect", to_string(spec.target)},
                      {"estimator", to_string(spec.estimator)},
                      {"n", spec.n},
                      {"reps", spec.reps},
                      {"seed", spec.base_seed},
                      {"trees", spec.n_trees},
                      {"k", spec.k},
                      {"j", spec.j},
                      {"cbgate_version", to_string(spec.cbgate_version)},
                      {"truth_n", spec.truth_n}};
  j["oracle"] = spec.oracle;
  if (spec.estimator == EstimatorKind::autodml) {
    j["stage1"] = to_json(spec.stage1);
    j["stage2"] = to_json(spec.stage2);
  } else if (!spec.oracle) {
    j["forests"] = to_json(study_forests(spec));
  }
  return j;
}

ForestSet study_forests(const StudySpec& spec) {
  if (spec.forests) return *spec.forests;
  ForestSet set = tabulated_forest_set(
      spec.estimator == EstimatorKind::reweight ? SimTarget::DeltaGate : spec.target, spec.n);
  set.set_trees(spec.n_trees);
  return set;
}

std::uint64_t replication_seed(std::uint64_t base_seed, int rep) {
  return derive_seed(base_seed, 0x5eed, static_cast<std::uint64_t>(rep));
}

EffectEstimate run_replication(const StudySpec& spec, const Truth& truth, int rep) {
  const std::uint64_t seed = replication_seed(spec.base_seed, rep);
  auto sample = std::make_shared<DgpSample>(generate(spec.n, seed));
  sample->data = with_balancing(sample->data, balancing_columns(spec.target));
  validate(sample->data);
  const Dataset& data = sample->data;
  const EffectTarget target = effect_target(spec.target);
  DmlConfig cfg{spec.k, spec.j, seed, WeightMode::normalized};

  std::unique_ptr<NuisanceSource> nuisances;
  if (spec.oracle) {
    nuisances = std::make_unique<OracleNuisance>(sample, truth.surfaces);
  } else if (spec.estimator != EstimatorKind::autodml) {
    nuisances = std::make_unique<ForestNuisance>(study_forests(spec));
  }
  switch (spec.estimator) {
    case EstimatorKind::autodml: {
      AutoDmlConfig a{spec.stage1, spec.stage2, spec.k, spec.j, seed};
      return estimate_auto_dml_delta_bgate(data, target, a);
    }
    case EstimatorKind::reweight:
      return estimate_delta_bgate_reweighted(data, target, cfg, *nuisances);
    case EstimatorKind::dml:
      return estimate_dml(data, target, cfg, *nuisances, spec.cbgate_version);
  }
  throw DataError("unknown estimator");
}

StudyResult run_study(const StudySpec& spec, const Truth* truth) {
  validate(spec);
  StudyResult result;
  result.spec = spec;
  result.truth = truth ? *truth : true_effect(spec.target, spec.truth_n);
  result.rows.resize(static_cast<std::size_t>(spec.reps));
  parallel_for(
      spec.reps,
      [&](int rep) {
        StudyRow& row = result.rows[rep];
        row.rep = rep;
        row.seed = replication_seed(spec.base_seed, rep);
        try {
          const EffectEstimate est = run_replication(spec, result.truth, rep);
          row.coef = est.coef;
          row.se = est.se;
          if (!std::isfinite(est.coef) || !std::isfinite(est.se)) {
            row.ok = false;
            row.error = "non-finite estimate";
          }
        } catch (const std::exception& e) {
          row.ok = false;
          row.error = e.what();
        }
      },
      spec.threads);
  std::vector<double> coefs, ses;
  for (const auto& row : result.rows) {
    if (row.ok) {
      coefs.push_back(row.coef);
      ses.push_back(row.se);
    } else {
      ++result.failures;
    }
  }
  if (coefs.size() < 2) {
    throw EstimationError("fewer than two replications succeeded");
  }
  result.report = performance_measures(coefs, ses, result.truth.value);
  return result;
}

void write_results_csv(const std::string& path, const StudyResult& result) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "rep,seed,estimator,target,n,coef,se,truth\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& row : result.rows) {
    out << row.rep << ',' << row.seed << ',' << to_string(result.spec.estimator) << ','
        << to_string(result.spec.target) << ',' << result.spec.n << ','
        << (row.ok ? num(row.coef) : "nan") << ',' << (row.ok ? num(row.se) : "nan") << ','
        << num(result.truth.value) << '\n';
  }
}

nlohmann::json report_json(const StudyResult& result) {
  nlohmann::json failed = nlohmann::json::array();
  for (const auto& row : result.rows) {
    if (!row.ok) failed.push_back({{"rep", row.rep}, {"error", row.error}});
  }
  return {{"config", to_json(result.spec)},
          {"truth", {{"value", result.truth.value}, {"se", result.truth.se}}},
          {"report", to_json(result.report)},
          {"failures", result.failures},
          {"failed", failed}};
}

}  // namespace bgate
