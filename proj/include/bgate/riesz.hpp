#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "bgate/dataset.hpp"
#include "bgate/effect.hpp"
#include "json.hpp"

namespace bgate {

struct RieszNetConfig {
  int common_units = 200;
  int head_units = 100;
  double learning_rate = 1e-4;
  int patience = 10;
  double min_delta = 1e-4;
  int max_epochs = 600;
  double lambda1 = 0.1;
  double lambda2 = 1.0;
  int folds = 2;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  int batch_size = 64;  // 0 trains on the full batch

  static RieszNetConfig first_stage();
  static RieszNetConfig second_stage();
};

void validate(const RieszNetConfig& cfg);
nlohmann::json to_json(const RieszNetConfig& cfg);
RieszNetConfig riesz_config_from_json(const nlohmann::json& j, RieszNetConfig base);

/// Training rows: binary treatment t, covariates x (treatment excluded), outcome y.
struct RieszBatch {
  Eigen::VectorXd t;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;

  int n() const { return static_cast<int>(y.size()); }
};

struct RieszLosses {
  double total = 0.0;
  double reg = 0.0;
  double rr = 0.0;
  double tmle = 0.0;
};

struct RieszOutput {
  Eigen::VectorXd mu;
  Eigen::VectorXd alpha;
};

/// Shared ELU layer on (t, x), two ELU regression heads (one per treatment
/// level) and a linear Riesz head on the shared layer, plus the scalar TMLE
/// coefficient epsilon. All parameters live in one flat vector.
class RieszNet {
 public:
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization, epsilon = 0.
  RieszNet(int inputs, int common_units, int head_units, std::uint64_t seed);
  static RieszNet zeros(int inputs, int common_units, int head_units);

  int inputs() const { return p_; }
  int common_units() const { return c_; }
  int head_units() const { return h_; }

  /// Head prediction and Riesz value with the treatment set to `level`.
  RieszOutput forward(const Eigen::MatrixXd& x, int level) const;
  RieszLosses loss(const RieszBatch& batch, double lambda1, double lambda2) const;
  RieszLosses loss_and_gradient(const RieszBatch& batch, double lambda1, double lambda2,
                                Eigen::VectorXd& grad) const;

  const Eigen::VectorXd& parameters() const { return theta_; }
  void set_parameters(const Eigen::VectorXd& theta);
  int parameter_count() const { return static_cast<int>(theta_.size()); }

  /// Views on the parameter blocks. shared_weights is common x (1 + inputs)
  /// with column 0 multiplying the treatment.
  Eigen::Map<Eigen::MatrixXd> shared_weights();
  Eigen::Map<Eigen::VectorXd> shared_bias();
  Eigen::Map<Eigen::VectorXd> riesz_weights();
  double& riesz_bias();
  Eigen::Map<Eigen::MatrixXd> head_weights(int level);  // head x common
  Eigen::Map<Eigen::VectorXd> head_bias(int level);
  Eigen::Map<Eigen::VectorXd> head_output_weights(int level);
  double& head_output_bias(int level);
  double& epsilon();

  /// Named offsets of the parameter blocks, in storage order.
  struct Block {
    const char* name;
    int offset;
    int size;
  };
  std::vector<Block> blocks() const;

  nlohmann::json to_json() const;
  static RieszNet from_json(const nlohmann::json& j);

 private:
  RieszNet(int inputs, int common_units, int head_units);

  struct Layout {
    int ws, bs, a, a0, w[2], b[2], v[2], c[2], eps, size;
  };
  static Layout layout(int p, int c, int h);

  int p_, c_, h_;
  Layout lay_;
  Eigen::VectorXd theta_;
};

struct TrainResult {
  RieszNet net;
  std::vector<double> train_loss;  // mean batch loss per epoch
  std::vector<double> val_loss;    // validation total loss per epoch
  int best_epoch = 0;
  double initial_val_loss = 0.0;
};

/// Adam on the combined loss with early stopping on a random validation
/// split. The returned net is the snapshot with the lowest validation loss.
TrainResult train(RieszNet net, const RieszBatch& data, const RieszNetConfig& cfg);

struct AutoDmlConfig {
  RieszNetConfig stage1 = RieszNetConfig::first_stage();
  RieszNetConfig stage2 = RieszNetConfig::second_stage();
  int k = 2;
  int j = 2;
  std::uint64_t seed = 0;
};

/// Difference of balanced GATEs with Riesz-representer networks in both
/// stages. Binary treatment and moderator only.
EffectEstimate estimate_auto_dml_delta_bgate(const Dataset& data, const EffectTarget& target,
                                             const AutoDmlConfig& cfg);

}  // namespace bgate
