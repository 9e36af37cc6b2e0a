#pragma once

// Fully enumerable design: two binary covariates, binary moderator and
// treatment, Gaussian noise. Every population quantity is a finite sum.

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <random>

#include "bgate/dataset.hpp"
#include "bgate/nuisance.hpp"
#include "bgate/random.hpp"
#include "bgate/scores.hpp"

namespace bgate::testing {

struct DiscreteDgp {
  double p_x1 = 0.5;
  double p_x2 = 0.4;
  // moderator: P(Z=1 | x) = z0 + z1 x1 + z2 x2
  double z0 = 0.3, z1 = 0.3, z2 = 0.1;
  // treatment: P(D=1 | z, x) = d0 + dz z + d1 x1 + d2 x2
  double d0 = 0.3, dz = 0.2, d1 = 0.15, d2 = -0.1;
  // outcome: base + d * effect
  double b0 = 1.0, b1 = 0.5, b2 = 0.3, bz = 0.2;
  double t0 = 1.0, tz = 0.7, t1 = 0.8, t2 = -0.4, tzx = 0.5;
  double noise = 1.0;

  double px(int x1, int x2) const {
    return (x1 ? p_x1 : 1 - p_x1) * (x2 ? p_x2 : 1 - p_x2);
  }
  double lambda1(int x1, int x2) const { return z0 + z1 * x1 + z2 * x2; }
  double lambda(int z, int x1, int x2) const { return z ? lambda1(x1, x2) : 1 - lambda1(x1, x2); }
  double pi1(int z, int x1, int x2) const { return d0 + dz * z + d1 * x1 + d2 * x2; }
  double pi(int d, int z, int x1, int x2) const { return d ? pi1(z, x1, x2) : 1 - pi1(z, x1, x2); }
  double tau(int z, int x1, int x2) const { return t0 + tz * z + t1 * x1 + t2 * x2 + tzx * z * x1; }
  double mu(int d, int z, int x1, int x2) const {
    return b0 + b1 * x1 + b2 * x2 + bz * z + d * tau(z, x1, x2);
  }

  template <class F>
  void each_x(F f) const {
    for (int x1 = 0; x1 < 2; ++x1)
      for (int x2 = 0; x2 < 2; ++x2) f(x1, x2);
  }

  double p_z(int z) const {
    double s = 0;
    each_x([&](int a, int b) { s += px(a, b) * lambda(z, a, b); });
    return s;
  }
  double ate() const {
    double s = 0;
    each_x([&](int a, int b) {
      for (int z = 0; z < 2; ++z) s += px(a, b) * lambda(z, a, b) * tau(z, a, b);
    });
    return s;
  }
  double gate(int z) const {
    double s = 0;
    each_x([&](int a, int b) { s += px(a, b) * lambda(z, a, b) * tau(z, a, b); });
    return s / p_z(z);
  }
  // Balancing on W = x1.
  double p_w(int w) const { return w ? p_x1 : 1 - p_x1; }
  double lambda_w(int z, int w) const {
    double num = 0, den = 0;
    for (int b = 0; b < 2; ++b) {
      num += px(w, b) * lambda(z, w, b);
      den += px(w, b);
    }
    return num / den;
  }
  // g_z(w) = E[tau(z, X) | Z = z, W = w]
  double g(int z, int w) const {
    double num = 0, den = 0;
    for (int b = 0; b < 2; ++b) {
      num += px(w, b) * lambda(z, w, b) * tau(z, w, b);
      den += px(w, b) * lambda(z, w, b);
    }
    return num / den;
  }
  double bgate(int z) const { return p_w(0) * g(z, 0) + p_w(1) * g(z, 1); }
  double delta_bgate() const { return bgate(1) - bgate(0); }
  double delta_gate() const { return gate(1) - gate(0); }
  double delta_cbgate() const {
    double s = 0;
    each_x([&](int a, int b) { s += px(a, b) * (tau(1, a, b) - tau(0, a, b)); });
    return s;
  }
  // E[g_z(W) | Z = s]
  double mean_g_given(int z, int s) const {
    double num = 0;
    for (int w = 0; w < 2; ++w) num += p_w(w) * lambda_w(s, w) * g(z, w);
    return num / p_z(s);
  }
};

struct DiscreteSample {
  Dataset data;  // x columns: x1, x2; W = {x1}
  std::vector<int> x1, x2;
};

inline DiscreteSample draw(const DiscreteDgp& dgp, int n, std::uint64_t seed,
                           std::vector<int> w_cols = {0}) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> e(0, dgp.noise);
  DiscreteSample s;
  Eigen::VectorXd y(n);
  Eigen::MatrixXd x(n, 2);
  std::vector<int> d(n), z(n);
  for (int i = 0; i < n; ++i) {
    const int a = u(rng) < dgp.p_x1, b = u(rng) < dgp.p_x2;
    z[i] = u(rng) < dgp.lambda1(a, b);
    d[i] = u(rng) < dgp.pi1(z[i], a, b);
    y[i] = dgp.mu(d[i], z[i], a, b) + e(rng);
    x(i, 0) = a;
    x(i, 1) = b;
    s.x1.push_back(a);
    s.x2.push_back(b);
  }
  s.data = make_dataset(y, d, z, x, std::move(w_cols), {"x1", "x2"});
  return s;
}

// Nuisance source built from closed-form functions; any role can be swapped
// for a deliberately wrong function.
struct DiscreteNuisance : NuisanceSource {
  DiscreteDgp dgp;
  std::function<double(int d, int z, int x1, int x2)> mu_fn;
  std::function<double(int d, int z, int x1, int x2)> pi_fn;
  std::function<double(int z, int w)> g_fn;
  std::function<double(int z, int w)> lambda_fn;
  std::function<double(int z, int x1, int x2)> lambda_x_fn;

  explicit DiscreteNuisance(DiscreteDgp d) : dgp(d) {
    mu_fn = [d](int dd, int z, int a, int b) { return d.mu(dd, z, a, b); };
    pi_fn = [d](int dd, int z, int a, int b) { return d.pi(dd, z, a, b); };
    g_fn = [d](int z, int w) { return d.g(z, w); };
    lambda_fn = [d](int z, int w) { return d.lambda_w(z, w); };
    lambda_x_fn = [d](int z, int a, int b) { return d.lambda(z, a, b); };
  }

  static int xi(const Dataset& data, int r, int c) { return static_cast<int>(data.x(r, c)); }

  Eigen::VectorXd outcome(const Dataset& data, std::span<const int>, int d,
                          std::span<const int> eval, std::uint64_t) const override {
    Eigen::VectorXd out(eval.size());
    for (std::size_t r = 0; r < eval.size(); ++r) {
      const int i = eval[r];
      out[r] = mu_fn(d, data.z[i], xi(data, i, 0), xi(data, i, 1));
    }
    return out;
  }
  Eigen::MatrixXd treatment_propensity(const Dataset& data, std::span<const int>,
                                       std::span<const int> eval, std::uint64_t) const override {
    Eigen::MatrixXd out(eval.size(), 2);
    for (std::size_t r = 0; r < eval.size(); ++r) {
      const int i = eval[r];
      for (int d = 0; d < 2; ++d) out(r, d) = pi_fn(d, data.z[i], xi(data, i, 0), xi(data, i, 1));
    }
    return out;
  }
  Eigen::VectorXd pseudo_outcome_regression(const Dataset& data, const Eigen::VectorXd&,
                                            std::span<const int>, int z,
                                            std::span<const int> eval,
                                            std::uint64_t) const override {
    Eigen::VectorXd out(eval.size());
    for (std::size_t r = 0; r < eval.size(); ++r) out[r] = g_fn(z, xi(data, eval[r], 0));
    return out;
  }
  Eigen::MatrixXd moderator_propensity(const Dataset& data, std::span<const int>,
                                       std::span<const int> eval, std::uint64_t) const override {
    Eigen::MatrixXd out(eval.size(), 2);
    for (std::size_t r = 0; r < eval.size(); ++r) {
      for (int z = 0; z < 2; ++z) out(r, z) = lambda_fn(z, xi(data, eval[r], 0));
    }
    return out;
  }
  Eigen::VectorXd cell_outcome(const Dataset& data, std::span<const int>, int d, int z,
                               std::span<const int> eval, std::uint64_t) const override {
    Eigen::VectorXd out(eval.size());
    for (std::size_t r = 0; r < eval.size(); ++r) {
      out[r] = mu_fn(d, z, xi(data, eval[r], 0), xi(data, eval[r], 1));
    }
    return out;
  }
  Eigen::MatrixXd joint_propensity(const Dataset& data, std::span<const int>,
                                   std::span<const int> eval, std::uint64_t) const override {
    Eigen::MatrixXd out(eval.size(), 4);
    for (std::size_t r = 0; r < eval.size(); ++r) {
      const int a = xi(data, eval[r], 0), b = xi(data, eval[r], 1);
      for (int d = 0; d < 2; ++d)
        for (int z = 0; z < 2; ++z)
          out(r, cell_code(d, z, 2)) = pi_fn(d, z, a, b) * lambda_x_fn(z, a, b);
    }
    return out;
  }
  Eigen::MatrixXd moderator_propensity_x(const Dataset& data, std::span<const int>,
                                         std::span<const int> eval, std::uint64_t) const override {
    Eigen::MatrixXd out(eval.size(), 2);
    for (std::size_t r = 0; r < eval.size(); ++r) {
      for (int z = 0; z < 2; ++z) out(r, z) = lambda_x_fn(z, xi(data, eval[r], 0), xi(data, eval[r], 1));
    }
    return out;
  }
  std::unique_ptr<NuisanceSource> for_rows(std::vector<int>) const override {
    return std::make_unique<DiscreteNuisance>(*this);
  }
};

}  // namespace bgate::testing
