#include <algorithm>
#include <cmath>
#include <random>

#include "bgate/riesz.hpp"
#include "discrete_dgp.hpp"
#include "doctest.h"

using namespace bgate;

namespace {

double elu(double v) { return v > 0 ? v : std::expm1(v); }

RieszBatch random_batch(int n, int p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> e(0, 1);
  RieszBatch b;
  b.t.resize(n);
  b.x.resize(n, p);
  b.y.resize(n);
  for (int i = 0; i < n; ++i) {
    b.t[i] = i % 3 == 0 ? 1.0 : static_cast<double>(e(rng) > 0);
    for (int c = 0; c < p; ++c) b.x(i, c) = e(rng);
    b.y[i] = e(rng) + b.t[i];
  }
  return b;
}

RieszNet tiny() {
  RieszNet net = RieszNet::zeros(2, 2, 1);
  net.shared_weights() << 0.5, 1.0, -1.0, -0.5, 0.2, 0.3;
  net.shared_bias() << 0.1, -0.2;
  net.riesz_weights() << 1.0, -2.0;
  net.riesz_bias() = 0.5;
  net.head_weights(1) << 0.7, -0.4;
  net.head_bias(1) << 0.05;
  net.head_output_weights(1) << 2.0;
  net.head_output_bias(1) = 0.1;
  net.head_weights(0) << -0.3, 0.9;
  net.head_bias(0) << 0.0;
  net.head_output_weights(0) << -1.0;
  net.head_output_bias(0) = 0.2;
  return net;
}

}  // namespace

TEST_CASE("all-zero network outputs zero") {
  const auto net = RieszNet::zeros(3, 4, 2);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 3);
  for (int level : {0, 1}) {
    const auto out = net.forward(x, level);
    CHECK(out.mu.cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.alpha.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("forward pass of a hand-set network") {
  const auto net = tiny();
  Eigen::MatrixXd x(1, 2);
  x << 1.0, 2.0;
  const double h1 = elu(0.5 * 1 + 1.0 * 1 - 1.0 * 2 + 0.1);
  const double h2 = elu(-0.5 * 1 + 0.2 * 1 + 0.3 * 2 - 0.2);
  const auto out1 = net.forward(x, 1);
  CHECK(out1.alpha[0] == doctest::Approx(h1 - 2 * h2 + 0.5).epsilon(1e-14));
  CHECK(out1.mu[0] == doctest::Approx(2.0 * elu(0.7 * h1 - 0.4 * h2 + 0.05) + 0.1).epsilon(1e-14));
  const double g1 = elu(0.5 * 0 + 1.0 * 1 - 1.0 * 2 + 0.1);
  const double g2 = elu(-0.5 * 0 + 0.2 * 1 + 0.3 * 2 - 0.2);
  const auto out0 = net.forward(x, 0);
  CHECK(out0.alpha[0] == doctest::Approx(g1 - 2 * g2 + 0.5).epsilon(1e-14));
  CHECK(out0.mu[0] == doctest::Approx(-1.0 * elu(-0.3 * g1 + 0.9 * g2) + 0.2).epsilon(1e-14));
  CHECK_THROWS_AS(net.forward(Eigen::MatrixXd::Zero(1, 3), 1), DataError);
  const auto big = net.forward(Eigen::MatrixXd::Constant(4, 2, 1e6), 1);
  CHECK(big.mu.allFinite());
  CHECK(big.alpha.allFinite());
}

TEST_CASE("loss components") {
  auto net = tiny();
  RieszBatch one;
  one.t = Eigen::VectorXd::Constant(1, 1.0);
  one.x.resize(1, 2);
  one.x << 1.0, 2.0;
  one.y = Eigen::VectorXd::Constant(1, 0.75);
  const auto a1 = net.forward(one.x, 1);
  const auto a0 = net.forward(one.x, 0);
  net.epsilon() = 0.3;
  const auto l = net.loss(one, 0.1, 1.0);
  const double res = 0.75 - a1.mu[0];
  CHECK(l.reg == doctest::Approx(res * res).epsilon(1e-14));
  CHECK(l.rr == doctest::Approx(a1.alpha[0] * a1.alpha[0] - 2 * (a1.alpha[0] - a0.alpha[0])).epsilon(1e-14));
  const double t = res - 0.3 * a1.alpha[0];
  CHECK(l.tmle == doctest::Approx(t * t).epsilon(1e-14));
  CHECK(l.total == doctest::Approx(l.reg + 0.1 * l.rr + l.tmle).epsilon(1e-14));

  net.epsilon() = 0.0;
  const auto b = random_batch(20, 2, 1);
  const auto l0 = net.loss(b, 0.1, 1.0);
  CHECK(l0.tmle == l0.reg);
  auto no_alpha = tiny();
  no_alpha.riesz_weights().setZero();
  no_alpha.riesz_bias() = 0.0;
  CHECK(no_alpha.loss(b, 0.1, 1.0).rr == 0.0);
}

TEST_CASE("analytic gradients match central differences in every block") {
  RieszNet net(3, 6, 4, 7);
  net.epsilon() = 0.37;
  const auto batch = random_batch(10, 3, 2);
  Eigen::VectorXd grad;
  net.loss_and_gradient(batch, 0.1, 1.0, grad);
  const double h = 1e-5;
  for (const auto& block : net.blocks()) {
    double worst = 0.0;
    for (int k = 0; k < block.size; ++k) {
      const int idx = block.offset + k;
      Eigen::VectorXd theta = net.parameters();
      RieszNet plus = net, minus = net;
      theta[idx] += h;
      plus.set_parameters(theta);
      theta[idx] -= 2 * h;
      minus.set_parameters(theta);
      const double fd = (plus.loss(batch, 0.1, 1.0).total - minus.loss(batch, 0.1, 1.0).total) / (2 * h);
      const double rel = std::abs(fd - grad[idx]) / std::max(1.0, std::max(std::abs(fd), std::abs(grad[idx])));
      worst = std::max(worst, rel);
    }
    INFO("block " << block.name);
    CHECK(worst < 1e-4);
  }
  CHECK(net.blocks().back().size == 1);
}

TEST_CASE("network json round trip") {
  RieszNet net(2, 3, 2, 9);
  net.epsilon() = -0.2;
  const auto j = net.to_json();
  CHECK(j["shape"] == nlohmann::json::array({2, 3, 2}));
  const auto back = RieszNet::from_json(j);
  CHECK(back.parameters() == net.parameters());
  auto cfg = RieszNetConfig::second_stage();
  const auto c = riesz_config_from_json(to_json(cfg), RieszNetConfig::first_stage());
  CHECK(c.common_units == 600);
  CHECK(c.head_units == 300);
  CHECK(c.patience == 70);
  CHECK(c.max_epochs == 1800);
  const auto f = RieszNetConfig::first_stage();
  CHECK(f.common_units == 200);
  CHECK(f.head_units == 100);
  CHECK(f.learning_rate == 1e-4);
  CHECK(f.patience == 10);
  CHECK(f.min_delta == 1e-4);
  CHECK(f.max_epochs == 600);
  CHECK(f.lambda1 == 0.1);
  CHECK(f.lambda2 == 1.0);
  CHECK(f.folds == 2);
  RieszNetConfig bad;
  bad.validation_fraction = 1.0;
  CHECK_THROWS_AS(validate(bad), DataError);
}

TEST_CASE("training improves the loss, keeps the best snapshot and is deterministic") {
  const int n = 2000;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> e(0, 1);
  RieszBatch data;
  data.t.resize(n);
  data.x.resize(n, 1);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    data.x(i, 0) = e(rng);
    data.t[i] = e(rng) > 0;
    data.y[i] = data.x(i, 0) + data.t[i] + 0.5 * e(rng);
  }
  RieszNetConfig cfg;
  cfg.common_units = 20;
  cfg.head_units = 10;
  cfg.learning_rate = 1e-3;
  cfg.max_epochs = 150;
  cfg.patience = 20;
  cfg.seed = 4;
  const auto res = train(RieszNet(1, 20, 10, 5), data, cfg);
  REQUIRE(!res.val_loss.empty());
  const auto best = std::min_element(res.val_loss.begin(), res.val_loss.end());
  CHECK(std::min(*best, res.initial_val_loss) <= res.initial_val_loss);
  if (*best < res.initial_val_loss) {
    CHECK(best - res.val_loss.begin() == res.best_epoch);
    for (std::size_t e2 = res.best_epoch; e2 < res.val_loss.size(); ++e2) {
      CHECK(res.val_loss[res.best_epoch] <= res.val_loss[e2]);
    }
  }
  const auto l = res.net.loss(data, 0.1, 1.0);
  CHECK(l.reg < 1.2 * 0.25);
  const auto again = train(RieszNet(1, 20, 10, 5), data, cfg);
  CHECK(again.val_loss == res.val_loss);
  CHECK(again.train_loss == res.train_loss);
  CHECK(again.net.parameters() == res.net.parameters());
}

TEST_CASE("representer of the mean difference under randomization") {
  const int n = 5000;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> e(0, 1);
  RieszBatch data;
  data.t.resize(n);
  data.x.resize(n, 2);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    data.x(i, 0) = e(rng);
    data.x(i, 1) = e(rng);
    data.t[i] = e(rng) > 0;
    data.y[i] = data.x(i, 0) + 2 * data.t[i] + e(rng);
  }
  RieszNetConfig cfg;
  cfg.common_units = 20;
  cfg.head_units = 10;
  cfg.learning_rate = 1e-3;
  cfg.max_epochs = 200;
  cfg.patience = 20;
  cfg.seed = 8;
  const auto res = train(RieszNet(2, 20, 10, 9), data, cfg);
  const Eigen::VectorXd a1 = res.net.forward(data.x, 1).alpha;
  const Eigen::VectorXd a0 = res.net.forward(data.x, 0).alpha;
  CHECK(std::abs(a1.mean() - 2.0) < 0.3);
  CHECK(std::abs(a0.mean() + 2.0) < 0.3);
  double mse = 0.0;
  for (int i = 0; i < n; ++i) {
    const double truth = data.t[i] ? 2.0 : -2.0;
    const double fit = data.t[i] ? a1[i] : a0[i];
    mse += (fit - truth) * (fit - truth);
  }
  CHECK(mse / n < 0.2);
}

TEST_CASE("automatic estimator finds no effect where there is none") {
  bgate::testing::DiscreteDgp dgp;
  dgp.t0 = dgp.tz = dgp.t1 = dgp.t2 = dgp.tzx = 0.0;
  const auto s = bgate::testing::draw(dgp, 2000, 11);
  AutoDmlConfig cfg;
  for (auto* c : {&cfg.stage1, &cfg.stage2}) {
    c->common_units = 16;
    c->head_units = 8;
    c->learning_rate = 1e-3;
    c->max_epochs = 60;
    c->patience = 10;
  }
  cfg.seed = 12;
  const auto est = estimate_auto_dml_delta_bgate(s.data, EffectTarget::delta_bgate(), cfg);
  CHECK(std::isfinite(est.coef));
  CHECK(est.se > 0.0);
  CHECK(std::abs(est.coef) < 2 * est.se);
  CHECK(est.coef == doctest::Approx(est.scores.mean()).epsilon(1e-12));
}
