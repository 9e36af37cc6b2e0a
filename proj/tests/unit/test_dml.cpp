#include <cmath>
#include <numeric>
#include <random>

#include "bgate/dml.hpp"
#include "bgate/simlab.hpp"
#include "discrete_dgp.hpp"
#include "doctest.h"

using namespace bgate;
using namespace bgate::testing;

namespace {

ForestNuisance small_forests(int trees = 100) {
  ForestSet set;
  set.mu.max_depth = 5;
  set.mu.min_leaf = 20;
  set.pi.max_depth = 5;
  set.pi.min_leaf = 20;
  set.omega = set.pi;
  set.lambda_x = set.pi;
  set.set_trees(trees);
  return ForestNuisance(set);
}

DiscreteDgp no_effect() {
  DiscreteDgp d;
  d.t0 = d.tz = d.t1 = d.t2 = d.tzx = 0.0;
  return d;
}

}  // namespace

TEST_CASE("null effect is not detected") {
  const auto s = draw(no_effect(), 3000, 1);
  DmlConfig cfg;
  cfg.seed = 2;
  const auto est = estimate_delta_bgate(s.data, EffectTarget::delta_bgate(), cfg, small_forests());
  CHECK(std::abs(est.coef) < 2 * est.se);
  CHECK(est.se > 0.0);
  CHECK(est.scores.size() == 3000);
  CHECK(est.coef == doctest::Approx(est.scores.mean()).epsilon(1e-12));
}

TEST_CASE("with empty W the balanced difference reduces to the GATE difference") {
  const DiscreteDgp dgp;
  auto s = draw(dgp, 4000, 3, {});
  DmlConfig cfg;
  cfg.seed = 4;
  const auto src = small_forests();
  const auto b = estimate_delta_bgate(s.data, EffectTarget::delta_bgate(), cfg, src);
  const auto g = estimate_delta_gate(s.data, EffectTarget::delta_gate(), cfg, src);
  CHECK(std::abs(b.coef - g.coef) < 2 * std::max(b.se, g.se));
  CHECK(std::abs(g.coef - dgp.delta_gate()) < 2 * g.se);
}

TEST_CASE("single-group balanced GATEs difference to the joint estimate") {
  const DiscreteDgp dgp;
  const auto s = draw(dgp, 4000, 5);
  DmlConfig cfg;
  cfg.seed = 6;
  const auto src = small_forests();
  const auto d = estimate_delta_bgate(s.data, EffectTarget::delta_bgate(), cfg, src);
  const auto b1 = estimate_bgate(s.data, EffectTarget::bgate(1), cfg, src);
  const auto b0 = estimate_bgate(s.data, EffectTarget::bgate(0), cfg, src);
  CHECK(std::abs(b1.coef - b0.coef - d.coef) <= 0.02);
  CHECK(std::abs(b1.coef - dgp.bgate(1)) < 2 * b1.se);
  CHECK_THROWS_AS(estimate_bgate(s.data, EffectTarget::bgate(2), cfg, src), DataError);
}

TEST_CASE("homogeneous effects are recovered by every estimator") {
  DiscreteDgp dgp = no_effect();
  dgp.t0 = 1.5;
  const auto s = draw(dgp, 4000, 7);
  DmlConfig cfg;
  cfg.seed = 8;
  const auto src = small_forests();
  const auto b = estimate_bgate(s.data, EffectTarget::bgate(1), cfg, src);
  CHECK(std::abs(b.coef - 1.5) < 2 * b.se);
  const auto a = estimate_ate(s.data, EffectTarget::ate(), cfg, src);
  CHECK(std::abs(a.coef - 1.5) < 2 * a.se);
  const auto g = estimate_gate(s.data, EffectTarget::gate(0), cfg, src);
  CHECK(std::abs(g.coef - 1.5) < 2 * g.se);
}

TEST_CASE("identical groups give a zero GATE difference") {
  DiscreteDgp dgp;
  dgp.z1 = dgp.z2 = 0.0;
  dgp.z0 = 0.5;
  dgp.tz = dgp.tzx = dgp.bz = dgp.dz = 0.0;
  const auto s = draw(dgp, 4000, 9);
  DmlConfig cfg;
  cfg.seed = 10;
  const auto g = estimate_delta_gate(s.data, EffectTarget::delta_gate(), cfg, small_forests());
  CHECK(std::abs(g.coef) < 2 * g.se);
  CHECK_THROWS_AS(estimate_delta_gate(s.data, EffectTarget::delta_gate(1, 2), cfg, small_forests()),
                  DataError);
}

TEST_CASE("difference of GATEs has SE sqrt(Var_u + Var_v)") {
  const DiscreteDgp dgp;
  const auto s = draw(dgp, 5000, 11);
  DmlConfig cfg;
  cfg.seed = 12;
  cfg.weights = WeightMode::raw;
  const DiscreteNuisance truth(dgp);
  const auto g = estimate_delta_gate(s.data, EffectTarget::delta_gate(), cfg, truth);
  const auto gu = estimate_gate(s.data, EffectTarget::gate(1), cfg, truth);
  const auto gv = estimate_gate(s.data, EffectTarget::gate(0), cfg, truth);
  CHECK(g.coef == doctest::Approx(gu.coef - gv.coef).epsilon(1e-12));
  CHECK(g.se == doctest::Approx(std::hypot(gu.se, gv.se)).epsilon(1e-10));
  CHECK(std::abs(g.coef - dgp.delta_gate()) < 2 * g.se);
}

TEST_CASE("interaction estimator on randomized cells") {
  DiscreteDgp dgp;
  dgp.z0 = 0.5;
  dgp.z1 = dgp.z2 = 0.0;
  dgp.d0 = 0.5;
  dgp.dz = dgp.d1 = dgp.d2 = 0.0;
  dgp.tzx = 0.0;
  const auto s = draw(dgp, 4000, 13);
  DmlConfig cfg;
  cfg.seed = 14;
  const auto src = small_forests();
  const auto joint = estimate_delta_cbgate(s.data, EffectTarget::delta_cbgate(), cfg, src,
                                           CbgateVersion::joint);
  const auto product = estimate_delta_cbgate(s.data, EffectTarget::delta_cbgate(), cfg, src,
                                             CbgateVersion::product);
  CHECK(std::abs(joint.coef - dgp.delta_cbgate()) < 2 * joint.se);
  CHECK(std::abs(joint.coef - product.coef) < joint.se);

  DiscreteDgp flat = dgp;
  flat.tz = 0.0;
  const auto f = draw(flat, 4000, 15);
  const auto zero = estimate_delta_cbgate(f.data, EffectTarget::delta_cbgate(), cfg, src);
  CHECK(std::abs(zero.coef) < 2 * zero.se);
}

TEST_CASE("true nuisances recover every target") {
  const DiscreteDgp dgp;
  const DiscreteNuisance truth(dgp);
  struct Case {
    const char* name;
    EffectTarget target;
    CbgateVersion version;
    double value;
  };
  const std::vector<Case> cases{
      {"delta-bgate", EffectTarget::delta_bgate(), CbgateVersion::joint, dgp.delta_bgate()},
      {"delta-gate", EffectTarget::delta_gate(), CbgateVersion::joint, dgp.delta_gate()},
      {"delta-cbgate joint", EffectTarget::delta_cbgate(), CbgateVersion::joint,
       dgp.delta_cbgate()},
      {"delta-cbgate product", EffectTarget::delta_cbgate(), CbgateVersion::product,
       dgp.delta_cbgate()},
      {"bgate", EffectTarget::bgate(0), CbgateVersion::joint, dgp.bgate(0)},
      {"ate", EffectTarget::ate(), CbgateVersion::joint, dgp.ate()}};
  const int reps = 60;
  std::vector<std::vector<double>> err(cases.size()), ses(cases.size());
  for (int r = 0; r < reps; ++r) {
    const auto s = draw(dgp, 3000, 1700 + r);
    DmlConfig cfg;
    cfg.seed = 18 + r;
    for (std::size_t c = 0; c < cases.size(); ++c) {
      const auto e = estimate_dml(s.data, cases[c].target, cfg, truth, cases[c].version);
      err[c].push_back(e.coef - cases[c].value);
      ses[c].push_back(e.se);
    }
  }
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const double mean = std::accumulate(err[c].begin(), err[c].end(), 0.0) / reps;
    double ss = 0;
    for (double e : err[c]) ss += (e - mean) * (e - mean);
    const double sd = std::sqrt(ss / (reps - 1));
    const double se = std::accumulate(ses[c].begin(), ses[c].end(), 0.0) / reps;
    MESSAGE(std::string(cases[c].name) << ": bias " << mean << " sd " << sd << " mean se " << se);
    CHECK(std::abs(mean) < 3 * sd / std::sqrt(reps));
    CHECK(se == doctest::Approx(sd).epsilon(0.3));
  }
}

TEST_CASE("folds below the minimum are rejected") {
  const auto s = draw(DiscreteDgp{}, 200, 19);
  DmlConfig cfg;
  cfg.k = 1;
  CHECK_THROWS_AS(estimate_delta_bgate(s.data, EffectTarget::delta_bgate(), cfg, small_forests(10)),
                  DataError);
}

TEST_CASE("raw-weight oracle estimates do not depend on the row order") {
  const DiscreteDgp dgp;
  const auto s = draw(dgp, 2000, 21);
  std::vector<int> perm(2000);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
  Dataset shuffled = s.data;
  shuffled.y = gather(s.data.y, perm);
  shuffled.d = gather(s.data.d, perm);
  shuffled.z = gather(s.data.z, perm);
  shuffled.x = gather_rows(s.data.x, perm);
  DmlConfig cfg;
  cfg.weights = WeightMode::raw;
  const DiscreteNuisance truth(dgp);
  const auto a = estimate_delta_bgate(s.data, EffectTarget::delta_bgate(), cfg, truth);
  const auto b = estimate_delta_bgate(shuffled, EffectTarget::delta_bgate(), cfg, truth);
  CHECK(a.coef == doctest::Approx(b.coef).epsilon(1e-12));
  CHECK(a.se == doctest::Approx(b.se).epsilon(1e-10));
}

TEST_CASE("decomposition identity at population level") {
  for (double z1 : {0.3, 0.0}) {
    DiscreteDgp dgp;
    dgp.z1 = z1;
    const double p1 = dgp.p_z(1), p0 = dgp.p_z(0);
    const double eg1 = dgp.p_w(0) * dgp.g(1, 0) + dgp.p_w(1) * dgp.g(1, 1);
    const double eg0 = dgp.p_w(0) * dgp.g(0, 0) + dgp.p_w(1) * dgp.g(0, 1);
    const double comp1 = p0 / p1 * (eg1 - dgp.mean_g_given(1, 0));
    const double comp2 = p1 / p0 * (eg0 - dgp.mean_g_given(0, 1));
    CHECK(std::abs(dgp.delta_gate() - (dgp.delta_bgate() + comp1 - comp2)) < 1e-12);
    if (z1 == 0.0) {
      CHECK(std::abs(comp1) < 1e-12);
      CHECK(std::abs(comp2) < 1e-12);
      CHECK(std::abs(dgp.delta_gate() - dgp.delta_bgate()) < 1e-12);
    }
  }
}

TEST_CASE("decomposition identity on fitted and arbitrary surfaces") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> e(0, 3);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 50 + rep;
    Eigen::VectorXd gu(n), gv(n);
    std::vector<int> z(n);
    for (int i = 0; i < n; ++i) {
      gu[i] = e(rng);
      gv[i] = e(rng) * 10;
      z[i] = (i * 7 + rep) % 3 == 0;
    }
    const auto d = decompose_surfaces(gu, gv, z, 1, 0);
    CHECK(std::abs(d.residual()) <= 1e-9);
  }
  const DiscreteDgp dgp;
  const auto s = draw(dgp, 3000, 23);
  DmlConfig cfg;
  cfg.seed = 24;
  const auto d = decompose_delta_gate(s.data, EffectTarget::delta_bgate(), cfg, small_forests());
  CHECK(std::abs(d.residual()) <= 1e-9);
  CHECK(d.se_comp1 > 0.0);
  CHECK(std::abs(d.dml.coef - dgp.delta_bgate()) < 2 * d.dml.se);
}

TEST_CASE("compositional effects vanish when W is balanced and appear when it is not") {
  DiscreteDgp balanced;
  balanced.z1 = 0.0;
  const auto s = draw(balanced, 4000, 25);
  DmlConfig cfg;
  cfg.seed = 26;
  const auto d = decompose_delta_gate(s.data, EffectTarget::delta_bgate(), cfg, small_forests());
  CHECK(std::abs(d.comp1) < 2 * d.se_comp1);
  CHECK(std::abs(d.comp2) < 2 * d.se_comp2);

  int positive = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto sample = generate(2000, seed);
    const Dataset data = with_balancing(sample.data, {0});
    DmlConfig c;
    c.seed = seed;
    const auto dec = decompose_delta_gate(data, EffectTarget::delta_bgate(), c, small_forests(50));
    const double comp = dec.comp1 - dec.comp2;
    CHECK(std::abs(comp) > 0.0);
    positive += comp > 0;
  }
  CHECK((positive == 0 || positive == 3));
}

TEST_CASE("json of configurations round trips") {
  ForestSet set;
  set.mu_by_level[1].max_depth = 7;
  set.g_by_level[0].min_leaf = 3;
  const auto back = forest_set_from_json(to_json(set));
  CHECK(back.mu_for(1).max_depth == 7);
  CHECK(back.g_for(0).min_leaf == 3);
  CHECK(back.g_for(1) == set.g);
  CHECK(cbgate_version_from_string("product") == CbgateVersion::product);
  CHECK_THROWS_AS(cbgate_version_from_string("other"), DataError);
}
