#include <cmath>
#include <random>

#include "bgate/dml.hpp"
#include "bgate/scores.hpp"
#include "discrete_dgp.hpp"
#include "doctest.h"
#include "population.hpp"

using namespace bgate;
using namespace bgate::testing;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("weight pipeline matches the traced examples bit for bit") {
  {
    const std::vector<int> d(4, 1);
    const std::vector<double> p(4, 0.5);
    const auto st = normalize_truncate_stages(d, 1, p);
    CHECK(st.raw == vec({2, 2, 2, 2}));
    CHECK(st.capped == vec({0.05, 0.05, 0.05, 0.05}));
    CHECK(st.weights == vec({1, 1, 1, 1}));
  }
  {
    const std::vector<int> d(1000, 1);
    const std::vector<double> p(1000, 0.5);
    const auto w = normalize_truncate_weights(d, 1, p);
    CHECK((w.array() == 1.0).all());
  }
  {
    const std::vector<int> d(100, 1);
    std::vector<double> p(100, 0.5);
    p[7] = 1e-6;
    const auto st = normalize_truncate_stages(d, 1, p);
    CHECK(st.raw[7] == 1.0 / 1e-4);
    CHECK(st.capped[7] == 0.05);
    CHECK(st.weights[7] == 0x1.201eaa9e52ab6p+6);
    CHECK(st.weights[0] == 0x1.214e702db5dd8p-2);
  }
}

TEST_CASE("weight pipeline invariants on random inputs") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 1 + static_cast<int>(u(rng) * 300);
    std::vector<int> d(n);
    std::vector<double> p(n);
    for (int i = 0; i < n; ++i) {
      d[i] = u(rng) < 0.4;
      p[i] = std::pow(u(rng), 3);
    }
    d[0] = 1;
    const auto st = normalize_truncate_stages(d, 1, p);
    CHECK(std::abs(st.weights.sum() - n) <= 1e-9 * n);
    CHECK(st.capped.maxCoeff() <= kWeightCap + 1e-12);
    for (int i = 0; i < n; ++i) {
      if (d[i] != 1) CHECK(st.weights[i] == 0.0);
      CHECK(st.weights[i] >= 0.0);
    }
  }
  CHECK_THROWS_AS(normalize_truncate_weights(std::vector<int>{0, 0}, 1, std::vector<double>{0.5, 0.5}),
                  DataError);
  CHECK_THROWS_AS(normalize_truncate_weights(std::vector<int>{1}, 1, std::vector<double>{0.5, 0.5}),
                  DataError);
}

TEST_CASE("raw weights are plain inverse propensities") {
  const std::vector<int> d{1, 0, 1};
  const std::vector<double> p{0.25, 0.5, 0.8};
  const auto w = inverse_propensity_weights(d, 1, p, WeightMode::raw);
  CHECK(w == vec({4, 0, 1.25}));
  CHECK_THROWS_AS(inverse_propensity_weights(d, 1, std::vector<double>{0, 0.5, 0.8}, WeightMode::raw),
                  DataError);
}

TEST_CASE("pseudo-outcome examples") {
  const auto same = pseudo_outcome(vec({0.7}), vec({0.7}), vec({0.1}), vec({3}), vec({0}));
  CHECK(same[0] == doctest::Approx(0.6));
  const auto ex = pseudo_outcome(vec({1}), vec({0.5}), vec({0.2}), vec({2}), vec({0}));
  CHECK(ex[0] == doctest::Approx(1.3));
  CHECK_THROWS_AS(pseudo_outcome(vec({1, 2}), vec({0.5}), vec({0.2}), vec({2}), vec({0})),
                  DataError);
}

TEST_CASE("second-stage score examples") {
  const auto c = Eigen::VectorXd::Constant(5, 0.8);
  const auto w = vec({2, 0, 2, 0, 2});
  CHECK(second_stage_score(c, c, c, w, vec({0, 2, 0, 2, 0})).cwiseAbs().maxCoeff() == 0.0);
  const auto ones = Eigen::VectorXd::Ones(3);
  const auto zeros = Eigen::VectorXd::Zero(3);
  CHECK(second_stage_score(vec({1, 0, 1}), ones, zeros, vec({2, 0, 2}), vec({0, 2, 0})) ==
        Eigen::VectorXd(ones));
  // six units, lambda = 0.5 so w = 2 I(z = group)
  const auto delta = vec({1.0, 2.0, -1.0, 0.5, 3.0, 0.0});
  const auto gu = vec({0.5, 0.5, 1.0, 1.0, 2.0, 2.0});
  const auto gv = vec({0.0, 1.0, 0.0, 1.0, 0.0, 1.0});
  const auto wu = vec({2, 0, 2, 0, 2, 0});
  const auto wv = vec({0, 2, 0, 2, 0, 2});
  const auto phi = second_stage_score(delta, gu, gv, wu, wv);
  const std::vector<double> expected{1.5, -2.5, -3.0, 1.0, 4.0, 3.0};
  for (int i = 0; i < 6; ++i) CHECK(phi[i] == doctest::Approx(expected[i]).epsilon(1e-15));
  const auto single = single_group_score(delta, gu, wu);
  CHECK(single[0] == doctest::Approx(1.5));
  CHECK(single[1] == doctest::Approx(0.5));
}

TEST_CASE("interaction score examples") {
  CellValues mu{vec({3.0}), vec({1.0}), vec({2.0}), vec({0.5})};
  CellValues zero{vec({0}), vec({0}), vec({0}), vec({0})};
  CHECK(cbgate_score(vec({7}), mu, zero)[0] == doctest::Approx(3.0 - 1.0 - 2.0 + 0.5));
  // randomized cells, omega = 0.25: unit observed in (l, u), (m, u), (l, v), (m, v)
  CellValues w{vec({4, 0, 0, 0}), vec({0, 4, 0, 0}), vec({0, 0, 4, 0}), vec({0, 0, 0, 4})};
  CellValues m4{vec({1, 1, 1, 1}), vec({0.5, 0.5, 0.5, 0.5}), vec({0.25, 0.25, 0.25, 0.25}),
                vec({0, 0, 0, 0})};
  const auto s = cbgate_score(vec({2, 1, 1, 1}), m4, w);
  const double base = 1 - 0.5 - 0.25 + 0;
  CHECK(s[0] == doctest::Approx(base + 4 * (2 - 1)));
  CHECK(s[1] == doctest::Approx(base - 4 * (1 - 0.5)));
  CHECK(s[2] == doctest::Approx(base - 4 * (1 - 0.25)));
  CHECK(s[3] == doctest::Approx(base + 4 * (1 - 0)));
}

TEST_CASE("population scores recover the enumerated targets") {
  const DiscreteDgp dgp;
  CHECK(delta_bgate_mean(dgp, 0.0) == doctest::Approx(dgp.delta_bgate()).epsilon(1e-13));
  CHECK(delta_cbgate_mean(dgp, 0.0) == doctest::Approx(dgp.delta_cbgate()).epsilon(1e-13));
  // closed form of the interaction: tz + tzx E[x1]
  CHECK(dgp.delta_cbgate() == doctest::Approx(dgp.tz + dgp.tzx * dgp.p_x1).epsilon(1e-14));
}

TEST_CASE("orthogonality check: corrected scores are flat, plug-ins are not") {
  const DiscreteDgp dgp;
  const std::vector<double> grid{0.1, 0.05, 0.025, 0.0125};
  auto shrinking = [](const OrthogonalityResult& r) {
    // r ascending: each halving of r must at least halve the slope.
    for (std::size_t i = 1; i < r.slope.size(); ++i) {
      if (std::abs(r.slope[i - 1]) > 0.5 * std::abs(r.slope[i]) + 1e-12) return false;
    }
    return true;
  };
  for (Directions dir : {Directions{1, 0, 0, 0}, Directions{0, 1, 0, 0}, Directions{0, 0, 1, 0},
                         Directions{0, 0, 0, 1}, Directions{}}) {
    const auto b = orthogonality_check([&](double r) { return delta_bgate_mean(dgp, r, dir); }, grid);
    CHECK(shrinking(b));
    CHECK(std::abs(b.slope.front()) < 1e-3);
    const auto c = orthogonality_check([&](double r) { return delta_cbgate_mean(dgp, r, dir); }, grid);
    CHECK(shrinking(c));
    CHECK(std::abs(c.slope.front()) < 1e-3);
  }
  const auto plug_b = orthogonality_check(
      [&](double r) { return delta_bgate_mean(dgp, r, {}, true); }, grid);
  CHECK_FALSE(shrinking(plug_b));
  CHECK(std::abs(plug_b.slope.front()) > 0.1);
  const auto plug_c = orthogonality_check(
      [&](double r) { return delta_cbgate_mean(dgp, r, {}, true); }, grid);
  CHECK_FALSE(shrinking(plug_c));
  CHECK(std::abs(plug_c.slope.front()) > 0.05);
  const auto flat = orthogonality_check([](double) { return 1.5; }, grid);
  for (double s : flat.slope) CHECK(s == 0.0);
  CHECK(flat.m0 == 1.5);
}

TEST_CASE("first stage is doubly robust") {
  const DiscreteDgp dgp;
  const auto s = draw(dgp, 20000, 77);
  DmlConfig cfg;
  cfg.seed = 5;
  const auto target = EffectTarget::ate();
  auto check_mean = [&](const DiscreteNuisance& src) {
    const auto delta = cross_fitted_pseudo_outcomes(s.data, target, cfg, src);
    const double mean = delta.mean();
    const double mcse = std::sqrt((delta.array() - mean).square().mean() / delta.size());
    CHECK(std::abs(mean - dgp.ate()) < 2 * mcse);
  };
  DiscreteNuisance truth(dgp);
  check_mean(truth);
  DiscreteNuisance wrong_mu(dgp);
  wrong_mu.mu_fn = [](int d, int, int a, int b) { return 3.0 - 2.0 * a + d * (b - 1.0); };
  check_mean(wrong_mu);
  DiscreteNuisance wrong_pi(dgp);
  wrong_pi.pi_fn = [](int d, int, int a, int) { return d ? 0.35 + 0.3 * a : 0.65 - 0.3 * a; };
  check_mean(wrong_pi);
}

TEST_CASE("second stage is doubly robust") {
  const DiscreteDgp dgp;
  const auto s = draw(dgp, 20000, 78);
  DmlConfig cfg;
  cfg.seed = 6;
  const auto target = EffectTarget::delta_bgate();
  auto check = [&](const DiscreteNuisance& src) {
    const auto est = estimate_delta_bgate(s.data, target, cfg, src);
    CHECK(std::abs(est.coef - dgp.delta_bgate()) < 2 * est.se);
  };
  check(DiscreteNuisance(dgp));
  DiscreteNuisance wrong_g(dgp);
  wrong_g.g_fn = [](int z, int w) { return 0.5 * z - w; };
  check(wrong_g);
  DiscreteNuisance wrong_lambda(dgp);
  wrong_lambda.lambda_fn = [](int z, int) { return z ? 0.5 : 0.5; };
  check(wrong_lambda);
}

TEST_CASE("centered score has mean zero at the true nuisances") {
  const DiscreteDgp dgp;
  const auto s = draw(dgp, 20000, 79);
  DmlConfig cfg;
  cfg.weights = WeightMode::raw;
  const auto est = estimate_delta_bgate(s.data, EffectTarget::delta_bgate(), cfg, DiscreteNuisance(dgp));
  const Eigen::ArrayXd centered = est.scores.array() - dgp.delta_bgate();
  const double mcse = std::sqrt((centered - centered.mean()).square().mean() / centered.size());
  CHECK(std::abs(centered.mean()) < 2 * mcse);
}
