#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bgate/dataset.hpp"
#include "bgate/dml.hpp"
#include "bgate/nuisance.hpp"
#include "bgate/riesz.hpp"
#include "json.hpp"

namespace bgate {

/// Regularized incomplete beta function I_x(a, b).
double beta_cdf(double x, double a, double b);
/// Closed form of I_x(2, 4).
double beta24_cdf(double x);

/// One draw of the simulation design with its latent quantities. All latent
/// vectors are per unit; "_z1"/"_z0" refer to the moderator set to 1 / 0.
struct DgpSample {
  Dataset data;
  Eigen::VectorXd mu0;     // untreated response
  Eigen::VectorXd mu1_z1;  // treated response with Z = 1
  Eigen::VectorXd mu1_z0;  // treated response with Z = 0
  Eigen::VectorXd y0, y1;  // potential outcomes at the observed moderator
  Eigen::VectorXd p_z;     // P(Z = 1 | X)
  Eigen::VectorXd p_d_z1;  // P(D = 1 | X, Z = 1)
  Eigen::VectorXd p_d_z0;  // P(D = 1 | X, Z = 0)

  /// Conditional effect tau(X, z) for the unit's observed or a fixed z.
  double tau(int i, int z) const { return (z ? mu1_z1[i] : mu1_z0[i]) - mu0[i]; }
  double p_d(int i) const { return data.z[i] ? p_d_z1[i] : p_d_z0[i]; }
};

inline constexpr int kDgpCovariates = 10;

/// Draws n units: X0, X1 ~ U[0,1], X2..X9 ~ N(0.5, 1/12), binary Z and D
/// from beta-CDF propensities and unit-variance normal noise.
DgpSample generate(int n, std::uint64_t seed);

enum class SimTarget { DeltaBgateX0, DeltaBgateX2, DeltaGate, DeltaCbgate };

std::string to_string(SimTarget t);
SimTarget sim_target_from_string(const std::string& name);
EffectTarget effect_target(SimTarget t);
/// Balancing columns used by the target (X0, X2 or none).
std::vector<int> balancing_columns(SimTarget t);

/// Piecewise-constant surfaces on equal-frequency bins of a scalar W:
/// g[z][b] = E[tau(X, z) | Z = z, W in bin b], lambda[b] = P(Z = 1 | W in bin b).
struct BinnedSurfaces {
  int w_col = -1;
  std::vector<double> edges;  // interior cut points, ascending
  std::vector<double> g[2];
  std::vector<double> lambda;
  std::vector<double> share;  // population share of each bin

  int bin(double w) const;
};

struct Truth {
  double value = 0.0;
  double se = 0.0;
  std::optional<BinnedSurfaces> surfaces;
};

inline constexpr std::uint64_t kTruthSeed = 0x7275746873656564ULL;

/// Monte Carlo truth of the target on a fresh sample of n_truth units.
Truth true_effect(SimTarget target, int n_truth = 1000000, std::uint64_t seed = kTruthSeed,
                  int bins = 200);

/// Injects the true nuisance functions of a DgpSample.
class OracleNuisance : public NuisanceSource {
 public:
  OracleNuisance(std::shared_ptr<const DgpSample> sample,
                 std::optional<BinnedSurfaces> surfaces, std::vector<int> source_rows = {});

  Eigen::VectorXd outcome(const Dataset& data, std::span<const int> train, int d,
                          std::span<const int> eval, std::uint64_t seed) const override;
  Eigen::MatrixXd treatment_propensity(const Dataset& data, std::span<const int> train,
                                       std::span<const int> eval,
                                       std::uint64_t seed) const override;
  Eigen::VectorXd pseudo_outcome_regression(const Dataset& data, const Eigen::VectorXd& delta,
                                            std::span<const int> train, int z,
                                            std::span<const int> eval,
                                            std::uint64_t seed) const override;
  Eigen::MatrixXd moderator_propensity(const Dataset& data, std::span<const int> train,
                                       std::span<const int> eval,
                                       std::uint64_t seed) const override;
  Eigen::VectorXd cell_outcome(const Dataset& data, std::span<const int> train, int d, int z,
                               std::span<const int> eval, std::uint64_t seed) const override;
  Eigen::MatrixXd joint_propensity(const Dataset& data, std::span<const int> train,
                                   std::span<const int> eval, std::uint64_t seed) const override;
  Eigen::MatrixXd moderator_propensity_x(const Dataset& data, std::span<const int> train,
                                         std::span<const int> eval,
                                         std::uint64_t seed) const override;
  std::unique_ptr<NuisanceSource> for_rows(std::vector<int> source_rows) const override;

 private:
  int source(int row) const { return rows_.empty() ? row : rows_[row]; }
  const BinnedSurfaces& surfaces() const;

  std::shared_ptr<const DgpSample> sample_;
  std::optional<BinnedSurfaces> surfaces_;
  std::vector<int> rows_;
};

/// Tuned forest settings per target and sample size (nearest tabulated size).
ForestSet tabulated_forest_set(SimTarget target, int n);

struct PerformanceReport {
  double bias = 0.0;
  double abs_bias = 0.0;
  double std = 0.0;
  double rmse = 0.0;
  double skew = 0.0;
  double ex_kurt = 0.0;
  double bias_se = 0.0;
  double coverage_95 = 0.0;
  int replications = 0;
  double truth = 0.0;
};

/// Replication-level measures: std uses 1/R so rmse^2 = bias^2 + std^2.
PerformanceReport performance_measures(std::span<const double> estimates,
                                       std::span<const double> ses, double truth);
nlohmann::json to_json(const PerformanceReport& r);

enum class EstimatorKind { dml, autodml, reweight };
std::string to_string(EstimatorKind e);
EstimatorKind estimator_kind_from_string(const std::string& name);

struct StudySpec {
  SimTarget target = SimTarget::DeltaBgateX0;
  EstimatorKind estimator = EstimatorKind::dml;
  int n = 2500;
  int reps = 200;
  std::uint64_t base_seed = 1;
  int n_trees = 1000;
  std::optional<ForestSet> forests;  // defaults to study_forests()
  /// Replace fitted nuisances by the true DGP functions (dml and reweight).
  bool oracle = false;
  int k = 2;
  int j = 2;
  CbgateVersion cbgate_version = CbgateVersion::joint;
  RieszNetConfig stage1 = RieszNetConfig::first_stage();
  RieszNetConfig stage2 = RieszNetConfig::second_stage();
  int truth_n = 1000000;
  int threads = 0;
};

void validate(const StudySpec& spec);
nlohmann::json to_json(const StudySpec& spec);

/// Forest set a study uses: spec.forests if given, else the tabulated tuning for
/// the target (the delta-gate row for reweighting), with n_trees applied.
ForestSet study_forests(const StudySpec& spec);

struct StudyRow {
  int rep = 0;
  std::uint64_t seed = 0;
  double coef = 0.0;
  double se = 0.0;
  bool ok = true;
  std::string error;
};

struct StudyResult {
  StudySpec spec;
  Truth truth;
  std::vector<StudyRow> rows;
  PerformanceReport report;
  int failures = 0;
};

/// Seed of replication r.
std::uint64_t replication_seed(std::uint64_t base_seed, int rep);

/// Runs one replication of the study on a freshly generated sample.
EffectEstimate run_replication(const StudySpec& spec, const Truth& truth, int rep);

/// Runs all replications (in parallel across reps) and summarizes them.
/// Failed replications are counted and excluded from the measures.
StudyResult run_study(const StudySpec& spec, const Truth* truth = nullptr);

void write_results_csv(const std::string& path, const StudyResult& result);
nlohmann::json report_json(const StudyResult& result);

}  // namespace bgate
