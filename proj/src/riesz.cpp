#include "bgate/riesz.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "bgate/folds.hpp"
#include "bgate/random.hpp"

namespace bgate {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd elu(const MatrixXd& a) {
  return a.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
}

MatrixXd elu_grad(const MatrixXd& a) {
  return a.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
}

}  // namespace

RieszNetConfig RieszNetConfig::first_stage() { return {}; }

RieszNetConfig RieszNetConfig::second_stage() {
  RieszNetConfig cfg;
  cfg.common_units = 600;
  cfg.head_units = 300;
  cfg.patience = 70;
  cfg.max_epochs = 1800;
  return cfg;
}

void validate(const RieszNetConfig& cfg) {
  if (cfg.common_units < 1 || cfg.head_units < 1) throw DataError("layer sizes must be positive");
  if (!(cfg.learning_rate > 0.0)) throw DataError("learning_rate must be positive");
  if (cfg.patience < 1) throw DataError("patience must be positive");
  if (cfg.min_delta < 0.0) throw DataError("min_delta must be nonnegative");
  if (cfg.max_epochs < 1) throw DataError("max_epochs must be positive");
  if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0) throw DataError("loss weights must be nonnegative");
  if (cfg.folds < 2) throw DataError("folds must be at least 2");
  if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0)) {
    throw DataError("validation_fraction must lie in (0, 1)");
  }
  if (cfg.batch_size < 0) throw DataError("batch_size must be nonnegative");
}

nlohmann::json to_json(const RieszNetConfig& cfg) {
  return {{"common_units", cfg.common_units},
          {"head_units", cfg.head_units},
          {"learning_rate", cfg.learning_rate},
          {"patience", cfg.patience},
          {"min_delta", cfg.min_delta},
          {"max_epochs", cfg.max_epochs},
          {"lambda1", cfg.lambda1},
          {"lambda2", cfg.lambda2},
          {"folds", cfg.folds},
          {"seed", cfg.seed},
          {"validation_fraction", cfg.validation_fraction},
          {"batch_size", cfg.batch_size}};
}

RieszNetConfig riesz_config_from_json(const nlohmann::json& j, RieszNetConfig base) {
  if (!j.is_object()) throw DataError("network configuration must be a JSON object");
  try {
    if (j.contains("common_units")) base.common_units = j.at("common_units").get<int>();
    if (j.contains("head_units")) base.head_units = j.at("head_units").get<int>();
    if (j.contains("learning_rate")) base.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("patience")) base.patience = j.at("patience").get<int>();
    if (j.contains("min_delta")) base.min_delta = j.at("min_delta").get<double>();
    if (j.contains("max_epochs")) base.max_epochs = j.at("max_epochs").get<int>();
    if (j.contains("lambda1")) base.lambda1 = j.at("lambda1").get<double>();
    if (j.contains("lambda2")) base.lambda2 = j.at("lambda2").get<double>();
    if (j.contains("folds")) base.folds = j.at("folds").get<int>();
    if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("validation_fraction")) {
      base.validation_fraction = j.at("validation_fraction").get<double>();
    }
    if (j.contains("batch_size")) base.batch_size = j.at("batch_size").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid network configuration: ") + e.what());
  }
  validate(base);
  return base;
}

RieszNet::Layout RieszNet::layout(int p, int c, int h) {
  Layout l{};
  int off = 0;
  l.ws = off;
  off += c * (p + 1);
  l.bs = off;
  off += c;
  l.a = off;
  off += c;
  l.a0 = off;
  off += 1;
  for (int k = 0; k < 2; ++k) {
    l.w[k] = off;
    off += h * c;
    l.b[k] = off;
    off += h;
    l.v[k] = off;
    off += h;
    l.c[k] = off;
    off += 1;
  }
  l.eps = off;
  off += 1;
  l.size = off;
  return l;
}

RieszNet::RieszNet(int inputs, int common_units, int head_units)
    : p_(inputs), c_(common_units), h_(head_units), lay_(layout(inputs, common_units, head_units)) {
  if (inputs < 0 || common_units < 1 || head_units < 1) throw DataError("invalid network shape");
  theta_ = VectorXd::Zero(lay_.size);
}

RieszNet RieszNet::zeros(int inputs, int common_units, int head_units) {
  return RieszNet(inputs, common_units, head_units);
}

RieszNet::RieszNet(int inputs, int common_units, int head_units, std::uint64_t seed)
    : RieszNet(inputs, common_units, head_units) {
  Rng rng(seed);
  auto fill = [&](int offset, int size, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (int i = 0; i < size; ++i) theta_[offset + i] = u(rng);
  };
  fill(lay_.ws, c_ * (p_ + 1), p_ + 1);
  fill(lay_.bs, c_, p_ + 1);
  fill(lay_.a, c_, c_);
  fill(lay_.a0, 1, c_);
  for (int k = 0; k < 2; ++k) {
    fill(lay_.w[k], h_ * c_, c_);
    fill(lay_.b[k], h_, c_);
    fill(lay_.v[k], h_, h_);
    fill(lay_.c[k], 1, h_);
  }
  theta_[lay_.eps] = 0.0;
}

void RieszNet::set_parameters(const VectorXd& theta) {
  if (theta.size() != theta_.size()) throw DataError("parameter vector has the wrong length");
  theta_ = theta;
}

Eigen::Map<MatrixXd> RieszNet::shared_weights() {
  return {theta_.data() + lay_.ws, c_, p_ + 1};
}
Eigen::Map<VectorXd> RieszNet::shared_bias() { return {theta_.data() + lay_.bs, c_}; }
Eigen::Map<VectorXd> RieszNet::riesz_weights() { return {theta_.data() + lay_.a, c_}; }
double& RieszNet::riesz_bias() { return theta_[lay_.a0]; }
Eigen::Map<MatrixXd> RieszNet::head_weights(int level) {
  return {theta_.data() + lay_.w[level], h_, c_};
}
Eigen::Map<VectorXd> RieszNet::head_bias(int level) { return {theta_.data() + lay_.b[level], h_}; }
Eigen::Map<VectorXd> RieszNet::head_output_weights(int level) {
  return {theta_.data() + lay_.v[level], h_};
}
double& RieszNet::head_output_bias(int level) { return theta_[lay_.c[level]]; }
double& RieszNet::epsilon() { return theta_[lay_.eps]; }

std::vector<RieszNet::Block> RieszNet::blocks() const {
  return {{"shared_weights", lay_.ws, c_ * (p_ + 1)},
          {"shared_bias", lay_.bs, c_},
          {"riesz_weights", lay_.a, c_},
          {"riesz_bias", lay_.a0, 1},
          {"head0_weights", lay_.w[0], h_ * c_},
          {"head0_bias", lay_.b[0], h_},
          {"head0_output_weights", lay_.v[0], h_},
          {"head0_output_bias", lay_.c[0], 1},
          {"head1_weights", lay_.w[1], h_ * c_},
          {"head1_bias", lay_.b[1], h_},
          {"head1_output_weights", lay_.v[1], h_},
          {"head1_output_bias", lay_.c[1], 1},
          {"epsilon", lay_.eps, 1}};
}


RieszOutput RieszNet::forward(const MatrixXd& x, int level) const {
  if (x.cols() != p_) throw DataError("input arity does not match the network");
  if (level != 0 && level != 1) throw DataError("treatment level must be 0 or 1");
  const double* t = theta_.data();
  Eigen::Map<const MatrixXd> ws(t + lay_.ws, c_, p_ + 1);
  Eigen::Map<const VectorXd> bs(t + lay_.bs, c_);
  Eigen::Map<const VectorXd> a(t + lay_.a, c_);
  Eigen::Map<const MatrixXd> w(t + lay_.w[level], h_, c_);
  Eigen::Map<const VectorXd> b(t + lay_.b[level], h_);
  Eigen::Map<const VectorXd> v(t + lay_.v[level], h_);
  MatrixXd pre = x * ws.rightCols(p_).transpose();
  VectorXd shift = bs;
  if (level) shift += ws.col(0);
  pre.rowwise() += shift.transpose();
  const MatrixXd hid = elu(pre);
  MatrixXd head_pre = hid * w.transpose();
  head_pre.rowwise() += b.transpose();
  RieszOutput out;
  out.mu = (elu(head_pre) * v).array() + t[lay_.c[level]];
  out.alpha = (hid * a).array() + t[lay_.a0];
  return out;
}

RieszLosses RieszNet::loss(const RieszBatch& batch, double lambda1, double lambda2) const {
  const int n = batch.n();
  if (n == 0) throw DataError("loss needs a nonempty batch");
  const RieszOutput o1 = forward(batch.x, 1);
  const RieszOutput o0 = forward(batch.x, 0);
  const double eps = theta_[lay_.eps];
  RieszLosses l;
  for (int i = 0; i < n; ++i) {
    const bool treated = batch.t[i] > 0.5;
    const double mu = treated ? o1.mu[i] : o0.mu[i];
    const double alpha = treated ? o1.alpha[i] : o0.alpha[i];
    const double r = batch.y[i] - mu;
    const double s = r - eps * alpha;
    l.reg += r * r;
    l.rr += alpha * alpha - 2.0 * (o1.alpha[i] - o0.alpha[i]);
    l.tmle += s * s;
  }
  l.reg /= n;
  l.rr /= n;
  l.tmle /= n;
  l.total = l.reg + lambda1 * l.rr + lambda2 * l.tmle;
  return l;
}

RieszLosses RieszNet::loss_and_gradient(const RieszBatch& batch, double lambda1, double lambda2,
                                        VectorXd& grad) const {
  const int n = batch.n();
  if (n == 0) throw DataError("loss needs a nonempty batch");
  if (batch.x.cols() != p_) throw DataError("input arity does not match the network");
  const double* t = theta_.data();
  Eigen::Map<const MatrixXd> ws(t + lay_.ws, c_, p_ + 1);
  Eigen::Map<const VectorXd> bs(t + lay_.bs, c_);
  Eigen::Map<const VectorXd> a(t + lay_.a, c_);
  const double a0 = t[lay_.a0];
  const double eps = t[lay_.eps];

  grad = VectorXd::Zero(lay_.size);
  Eigen::Map<MatrixXd> g_ws(grad.data() + lay_.ws, c_, p_ + 1);
  Eigen::Map<VectorXd> g_bs(grad.data() + lay_.bs, c_);
  Eigen::Map<VectorXd> g_a(grad.data() + lay_.a, c_);

  // Shared layer at both treatment values.
  MatrixXd base = batch.x * ws.rightCols(p_).transpose();
  base.rowwise() += bs.transpose();
  MatrixXd pre1 = base;
  pre1.rowwise() += ws.col(0).transpose();
  const MatrixXd& pre0 = base;
  const MatrixXd h1 = elu(pre1);
  const MatrixXd h0 = elu(pre0);
  const VectorXd alpha1 = (h1 * a).array() + a0;
  const VectorXd alpha0 = (h0 * a).array() + a0;

  std::vector<int> rows[2];
  for (int i = 0; i < n; ++i) rows[batch.t[i] > 0.5 ? 1 : 0].push_back(i);

  // Heads on the rows observed at each level.
  VectorXd mu(n);
  MatrixXd head_pre[2], head_hid[2], h_obs[2];
  for (int k = 0; k < 2; ++k) {
    const auto& r = rows[k];
    if (r.empty()) continue;
    const MatrixXd& h = k ? h1 : h0;
    h_obs[k] = gather_rows(h, r);
    Eigen::Map<const MatrixXd> w(t + lay_.w[k], h_, c_);
    Eigen::Map<const VectorXd> b(t + lay_.b[k], h_);
    Eigen::Map<const VectorXd> v(t + lay_.v[k], h_);
    head_pre[k] = h_obs[k] * w.transpose();
    head_pre[k].rowwise() += b.transpose();
    head_hid[k] = elu(head_pre[k]);
    const VectorXd out = (head_hid[k] * v).array() + t[lay_.c[k]];
    for (std::size_t q = 0; q < r.size(); ++q) mu[r[q]] = out[static_cast<Eigen::Index>(q)];
  }

  RieszLosses l;
  VectorXd g_mu(n), g_alpha1(n), g_alpha0(n);
  double g_eps = 0.0;
  const double inv = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    const bool treated = batch.t[i] > 0.5;
    const double alpha = treated ? alpha1[i] : alpha0[i];
    const double r = batch.y[i] - mu[i];
    const double s = r - eps * alpha;
    l.reg += r * r;
    l.rr += alpha * alpha - 2.0 * (alpha1[i] - alpha0[i]);
    l.tmle += s * s;
    g_mu[i] = -2.0 * inv * (r + lambda2 * s);
    const double g_alpha = 2.0 * inv * (lambda1 * alpha - lambda2 * eps * s);
    g_eps += -2.0 * inv * lambda2 * s * alpha;
    g_alpha1[i] = (treated ? g_alpha : 0.0) - 2.0 * inv * lambda1;
    g_alpha0[i] = (treated ? 0.0 : g_alpha) + 2.0 * inv * lambda1;
  }
  l.reg *= inv;
  l.rr *= inv;
  l.tmle *= inv;
  l.total = l.reg + lambda1 * l.rr + lambda2 * l.tmle;
  grad[lay_.eps] = g_eps;

  g_a = h1.transpose() * g_alpha1 + h0.transpose() * g_alpha0;
  grad[lay_.a0] = g_alpha1.sum() + g_alpha0.sum();
  MatrixXd g_h1 = g_alpha1 * a.transpose();
  MatrixXd g_h0 = g_alpha0 * a.transpose();

  for (int k = 0; k < 2; ++k) {
    const auto& r = rows[k];
    if (r.empty()) continue;
    Eigen::Map<const MatrixXd> w(t + lay_.w[k], h_, c_);
    Eigen::Map<const VectorXd> v(t + lay_.v[k], h_);
    VectorXd g_out(static_cast<Eigen::Index>(r.size()));
    for (std::size_t q = 0; q < r.size(); ++q) g_out[static_cast<Eigen::Index>(q)] = g_mu[r[q]];
    Eigen::Map<VectorXd>(grad.data() + lay_.v[k], h_) = head_hid[k].transpose() * g_out;
    grad[lay_.c[k]] = g_out.sum();
    const MatrixXd g_pre = (g_out * v.transpose()).cwiseProduct(elu_grad(head_pre[k]));
    Eigen::Map<MatrixXd>(grad.data() + lay_.w[k], h_, c_) = g_pre.transpose() * h_obs[k];
    Eigen::Map<VectorXd>(grad.data() + lay_.b[k], h_) = g_pre.colwise().sum().transpose();
    const MatrixXd g_hobs = g_pre * w;
    MatrixXd& g_h = k ? g_h1 : g_h0;
    for (std::size_t q = 0; q < r.size(); ++q) g_h.row(r[q]) += g_hobs.row(static_cast<Eigen::Index>(q));
  }

  const MatrixXd g_pre1 = g_h1.cwiseProduct(elu_grad(pre1));
  const MatrixXd g_pre0 = g_h0.cwiseProduct(elu_grad(pre0));
  const MatrixXd g_pre = g_pre1 + g_pre0;
  g_ws.rightCols(p_) = g_pre.transpose() * batch.x;
  g_ws.col(0) = g_pre1.colwise().sum().transpose();
  g_bs = g_pre.colwise().sum().transpose();
  return l;
}

nlohmann::json RieszNet::to_json() const {
  return {{"shape", {p_, c_, h_}},
          {"params", std::vector<double>(theta_.data(), theta_.data() + theta_.size())}};
}

RieszNet RieszNet::from_json(const nlohmann::json& j) {
  try {
    const auto shape = j.at("shape").get<std::vector<int>>();
    if (shape.size() != 3) throw DataError("network shape must list 3 layer sizes");
    RieszNet net(shape[0], shape[1], shape[2]);
    const auto params = j.at("params").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(params.size()) != net.theta_.size()) {
      throw DataError("parameter count does not match the network shape");
    }
    net.theta_ = Eigen::Map<const VectorXd>(params.data(), static_cast<Eigen::Index>(params.size()));
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid network JSON: ") + e.what());
  }
}

namespace {

RieszBatch subset(const RieszBatch& data, std::span<const int> rows) {
  return {gather(data.t, rows), gather_rows(data.x, rows), gather(data.y, rows)};
}

}  // namespace

TrainResult train(RieszNet net, const RieszBatch& data, const RieszNetConfig& cfg) {
  validate(cfg);
  const int n = data.n();
  if (n < 10) throw DataError("training needs at least 10 rows");
  Rng rng(cfg.seed);
  std::vector<int> order = iota_rows(n);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_val = std::clamp(static_cast<int>(std::lround(cfg.validation_fraction * n)), 1, n - 1);
  const std::vector<int> val_rows(order.begin(), order.begin() + n_val);
  std::vector<int> train_rows(order.begin() + n_val, order.end());
  const RieszBatch val = subset(data, val_rows);
  const int batch = cfg.batch_size == 0 ? static_cast<int>(train_rows.size())
                                        : std::min<int>(cfg.batch_size, static_cast<int>(train_rows.size()));

  const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
  VectorXd m = VectorXd::Zero(net.parameter_count());
  VectorXd v = VectorXd::Zero(net.parameter_count());
  VectorXd grad;
  VectorXd theta = net.parameters();
  long step = 0;

  TrainResult result{net, {}, {}, 0, net.loss(val, cfg.lambda1, cfg.lambda2).total};
  double best = result.initial_val_loss;
  double reference = best;  // last value that counted as an improvement
  int stale = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    if (cfg.batch_size != 0) std::shuffle(train_rows.begin(), train_rows.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < train_rows.size(); start += batch) {
      const std::size_t stop = std::min(train_rows.size(), start + batch);
      const RieszBatch b = subset(data, std::span<const int>(train_rows.data() + start, stop - start));
      const RieszLosses l = net.loss_and_gradient(b, cfg.lambda1, cfg.lambda2, grad);
      if (!std::isfinite(l.total) || !grad.allFinite()) {
        throw EstimationError("network training diverged at epoch " + std::to_string(epoch));
      }
      ++step;
      m = b1 * m + (1 - b1) * grad;
      v = b2 * v + (1 - b2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(b1, double(step));
      const double c2 = 1.0 - std::pow(b2, double(step));
      theta.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + adam_eps);
      net.set_parameters(theta);
      epoch_loss += l.total;
      ++batches;
    }
    const double val_loss = net.loss(val, cfg.lambda1, cfg.lambda2).total;
    if (!std::isfinite(val_loss)) {
      throw EstimationError("network training diverged at epoch " + std::to_string(epoch));
    }
    result.train_loss.push_back(epoch_loss / batches);
    result.val_loss.push_back(val_loss);
    if (val_loss < best) {
      best = val_loss;
      result.net = net;
      result.best_epoch = epoch;
    }
    if (val_loss < reference - cfg.min_delta) {
      reference = val_loss;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  return result;
}

namespace {

struct Scaler {
  Eigen::RowVectorXd mean, scale;

  static Scaler fit(const MatrixXd& x) {
    Scaler s;
    s.mean = x.colwise().mean();
    s.scale = ((x.rowwise() - s.mean).array().square().colwise().mean()).sqrt().matrix();
    for (Eigen::Index c = 0; c < s.scale.size(); ++c) {
      if (!(s.scale[c] > 0.0)) s.scale[c] = 1.0;
    }
    return s;
  }
  MatrixXd apply(const MatrixXd& x) const {
    return ((x.rowwise() - mean).array().rowwise() / scale.array()).matrix();
  }
};

// A trained net together with its input scaling.
struct FittedNet {
  RieszNet net;
  Scaler scaler;

  RieszOutput at(const MatrixXd& x, int level) const { return net.forward(scaler.apply(x), level); }
};

FittedNet fit_net(const VectorXd& t, const MatrixXd& x, const VectorXd& y, const RieszNetConfig& cfg,
                  std::uint64_t seed) {
  Scaler scaler = Scaler::fit(x);
  RieszNetConfig c = cfg;
  c.seed = derive_seed(seed, 1);
  RieszNet init(static_cast<int>(x.cols()), cfg.common_units, cfg.head_units, derive_seed(seed, 2));
  RieszBatch batch{t, scaler.apply(x), y};
  return {train(std::move(init), batch, c).net, scaler};
}

MatrixXd zx_rows(const Dataset& data, std::span<const int> rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), data.p() + 1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out(static_cast<Eigen::Index>(r), 0) = data.z[rows[r]];
    out.row(static_cast<Eigen::Index>(r)).tail(data.p()) = data.x.row(rows[r]);
  }
  return out;
}

MatrixXd w_rows(const Dataset& data, std::span<const int> rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(data.w_cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < data.w_cols.size(); ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = data.x(rows[r], data.w_cols[c]);
    }
  }
  return out;
}

VectorXd indicator(const std::vector<int>& labels, std::span<const int> rows, int level) {
  VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Eigen::Index>(r)] = labels[rows[r]] == level;
  return out;
}

void require_both(const std::vector<int>& labels, std::span<const int> rows, int a, int b,
                  const char* what) {
  bool has_a = false, has_b = false;
  for (int i : rows) {
    has_a |= labels[i] == a;
    has_b |= labels[i] == b;
  }
  if (!has_a || !has_b) throw EstimationError(std::string(what) + " level missing in a fold");
}

}  // namespace

EffectEstimate estimate_auto_dml_delta_bgate(const Dataset& data, const EffectTarget& target,
                                             const AutoDmlConfig& cfg) {
  if (target.kind != EffectKind::DeltaBGATE) throw DataError("target must be delta-bgate");
  check_target(target, data);
  validate(cfg.stage1);
  validate(cfg.stage2);
  if (data.treat_levels != 2 || data.moderator_levels != 2) {
    throw DataError("the network estimator supports binary treatment and moderator only");
  }
  if (cfg.k < 2 || cfg.j < 2) throw DataError("k and j must be at least 2");
  const int n = data.n();
  if (n < cfg.k * cfg.j) throw DataError("sample too small for the requested folds");
  const auto [l, m] = target.treat_contrast;
  const auto [u, v] = target.group_contrast;
  const FoldPlan plan = make_fold_plan(n, cfg.k, cfg.j, derive_seed(cfg.seed, 1));

  VectorXd delta = VectorXd::Zero(n);
  VectorXd scores = VectorXd::Zero(n);
  for (int k = 0; k < cfg.k; ++k) {
    const auto train_rows = plan.outer_complement(k);
    const auto eval = plan.outer_members(k);
    require_both(data.d, train_rows, l, m, "treatment");
    const FittedNet first =
        fit_net(indicator(data.d, train_rows, l), zx_rows(data, train_rows), gather(data.y, train_rows),
                cfg.stage1, derive_seed(cfg.seed, 2, static_cast<std::uint64_t>(k)));
    const MatrixXd x_eval = zx_rows(data, eval);
    const RieszOutput o1 = first.at(x_eval, 1);
    const RieszOutput o0 = first.at(x_eval, 0);
    for (std::size_t r = 0; r < eval.size(); ++r) {
      const auto q = static_cast<Eigen::Index>(r);
      const int i = eval[r];
      const bool treated = data.d[i] == l;
      const double mu_obs = treated ? o1.mu[q] : o0.mu[q];
      const double alpha = treated ? o1.alpha[q] : o0.alpha[q];
      delta[i] = o1.mu[q] - o0.mu[q] + alpha * (data.y[i] - mu_obs);
    }
    for (int jj = 0; jj < cfg.j; ++jj) {
      const auto tr = plan.inner_complement(k, jj);
      const auto ev = plan.inner_members(k, jj);
      require_both(data.z, tr, u, v, "moderator");
      const FittedNet second =
          fit_net(indicator(data.z, tr, u), w_rows(data, tr), gather(delta, tr), cfg.stage2,
                  derive_seed(cfg.seed, 3, static_cast<std::uint64_t>(k * cfg.j + jj)));
      const MatrixXd w_eval = w_rows(data, ev);
      const RieszOutput g1 = second.at(w_eval, 1);
      const RieszOutput g0 = second.at(w_eval, 0);
      for (std::size_t r = 0; r < ev.size(); ++r) {
        const auto q = static_cast<Eigen::Index>(r);
        const int i = ev[r];
        const bool in_u = data.z[i] == u;
        const double g_obs = in_u ? g1.mu[q] : g0.mu[q];
        const double alpha = in_u ? g1.alpha[q] : g0.alpha[q];
        scores[i] = g1.mu[q] - g0.mu[q] + alpha * (delta[i] - g_obs);
      }
    }
  }
  return estimate_from_scores(target, std::move(scores));
}

}  // namespace bgate
