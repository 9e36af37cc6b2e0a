#pragma once

// Exact population means of the orthogonal scores on the discrete design,
// with every nuisance shifted along a fixed direction by r. Scores are linear
// in y, so E[score | d, z, x] is the score evaluated at y = mu(d, z, x).

#include <functional>

#include "discrete_dgp.hpp"

namespace bgate::testing {

struct Directions {
  double mu = 1.0, pi = 1.0, g = 1.0, lambda = 1.0;
};

inline double h_mu(int d, int z, int a, int b) { return 0.3 + 0.2 * a - 0.4 * d * b + 0.1 * z + 0.25 * d * z; }
inline double h_pi(int z, int a, int b) { return 0.08 - 0.1 * a + 0.05 * b * z; }
inline double h_g(int z, int w) { return 0.4 - 0.3 * w + 0.2 * z; }
inline double h_lambda(int w) { return 0.1 - 0.15 * w; }

// Mean of the difference-of-balanced-GATEs score, contrast (1,0) x (1,0),
// W = x1. With `plug_in` the residual corrections are dropped.
inline double delta_bgate_mean(const DiscreteDgp& dgp, double r, Directions dir = {},
                               bool plug_in = false) {
  double total = 0;
  dgp.each_x([&](int a, int b) {
    for (int z = 0; z < 2; ++z) {
      for (int d = 0; d < 2; ++d) {
        const double pr = dgp.px(a, b) * dgp.lambda(z, a, b) * dgp.pi(d, z, a, b);
        const double y = dgp.mu(d, z, a, b);
        const double m1 = dgp.mu(1, z, a, b) + r * dir.mu * h_mu(1, z, a, b);
        const double m0 = dgp.mu(0, z, a, b) + r * dir.mu * h_mu(0, z, a, b);
        const double p1 = dgp.pi1(z, a, b) + r * dir.pi * h_pi(z, a, b);
        const double delta = m1 - m0 + (d == 1) * (y - m1) / p1 - (d == 0) * (y - m0) / (1 - p1);
        const double g1 = dgp.g(1, a) + r * dir.g * h_g(1, a);
        const double g0 = dgp.g(0, a) + r * dir.g * h_g(0, a);
        const double l1 = dgp.lambda_w(1, a) + r * dir.lambda * h_lambda(a);
        double score = g1 - g0;
        if (!plug_in) score += (z == 1) * (delta - g1) / l1 - (z == 0) * (delta - g0) / (1 - l1);
        total += pr * score;
      }
    }
  });
  return total;
}

// Mean of the causal interaction score with cell propensities
// pi(d | z, x) lambda(z | x).
inline double delta_cbgate_mean(const DiscreteDgp& dgp, double r, Directions dir = {},
                                bool plug_in = false) {
  double total = 0;
  dgp.each_x([&](int a, int b) {
    auto mu = [&](int d, int z) { return dgp.mu(d, z, a, b) + r * dir.mu * h_mu(d, z, a, b); };
    auto omega = [&](int d, int z) {
      const double p1 = dgp.pi1(z, a, b) + r * dir.pi * h_pi(z, a, b);
      const double l1 = dgp.lambda1(a, b) + r * dir.lambda * h_lambda(a);
      return (d ? p1 : 1 - p1) * (z ? l1 : 1 - l1);
    };
    for (int z = 0; z < 2; ++z) {
      for (int d = 0; d < 2; ++d) {
        const double pr = dgp.px(a, b) * dgp.lambda(z, a, b) * dgp.pi(d, z, a, b);
        const double y = dgp.mu(d, z, a, b);
        double score = mu(1, 1) - mu(0, 1) - mu(1, 0) + mu(0, 0);
        if (!plug_in) {
          const double sign = (d == z) ? 1.0 : -1.0;
          score += sign * (y - mu(d, z)) / omega(d, z);
        }
        total += pr * score;
      }
    }
  });
  return total;
}

}  // namespace bgate::testing
