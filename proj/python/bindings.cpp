#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bgate/cli.hpp"
#include "bgate/dml.hpp"
#include "bgate/reweight.hpp"
#include "bgate/riesz.hpp"
#include "bgate/simlab.hpp"

namespace py = pybind11;
using namespace bgate;

namespace {

Dataset dataset(const Eigen::VectorXd& y, const std::vector<int>& d, const std::vector<int>& z,
                const Eigen::MatrixXd& x, const std::vector<int>& balance) {
  return make_dataset(y, d, z, x, balance);
}

EffectTarget target_for(const std::string& effect, std::pair<int, int> treat,
                        std::pair<int, int> groups, int group) {
  EffectTarget t;
  t.kind = effect_kind_from_string(effect);
  t.treat_contrast = treat;
  t.group_contrast = groups;
  t.group = group;
  return t;
}

ForestNuisance forests(int trees) {
  ForestSet set;
  set.set_trees(trees);
  return ForestNuisance(set);
}

py::dict estimate_dict(const EffectEstimate& e) {
  py::dict out;
  out["coef"] = e.coef;
  out["se"] = e.se;
  out["p_value"] = e.p_value;
  out["n"] = e.n;
  out["scores"] = e.scores;
  return out;
}

py::dict estimate(const Eigen::VectorXd& y, const std::vector<int>& d, const std::vector<int>& z,
                  const Eigen::MatrixXd& x, const std::string& effect,
                  const std::vector<int>& balance, const std::string& estimator,
                  std::uint64_t seed, int trees, int k, int j, const std::string& weights,
                  const std::string& cbgate_version, std::pair<int, int> treat,
                  std::pair<int, int> groups, int group) {
  const Dataset data = dataset(y, d, z, x, balance);
  const EffectTarget target = target_for(effect, treat, groups, group);
  if (weights != "raw" && weights != "normalized") {
    throw DataError("weights must be normalized or raw");
  }
  DmlConfig cfg{k, j, seed, weights == "raw" ? WeightMode::raw : WeightMode::normalized};
  validate(cfg);
  EffectEstimate est;
  {
    py::gil_scoped_release release;
    if (estimator == "dml") {
      est = estimate_dml(data, target, cfg, forests(trees),
                         cbgate_version_from_string(cbgate_version));
    } else if (estimator == "reweight") {
      est = estimate_delta_bgate_reweighted(data, target, cfg, forests(trees));
    } else if (estimator == "autodml") {
      AutoDmlConfig a;
      a.k = k;
      a.j = j;
      a.seed = seed;
      est = estimate_auto_dml_delta_bgate(data, target, a);
    } else {
      throw DataError("estimator must be dml, autodml or reweight");
    }
  }
  return estimate_dict(est);
}

py::dict decompose(const Eigen::VectorXd& y, const std::vector<int>& d, const std::vector<int>& z,
                   const Eigen::MatrixXd& x, const std::vector<int>& balance, std::uint64_t seed,
                   int trees, std::pair<int, int> groups) {
  const Dataset data = dataset(y, d, z, x, balance);
  DmlConfig cfg;
  cfg.seed = seed;
  const auto dec = decompose_delta_gate(
      data, EffectTarget::delta_bgate(groups.first, groups.second), cfg, forests(trees));
  py::dict out;
  out["delta_gate"] = dec.delta_gate;
  out["delta_bgate"] = dec.delta_bgate;
  out["comp1"] = dec.comp1;
  out["comp2"] = dec.comp2;
  out["se_delta_gate"] = dec.se_delta_gate;
  out["se_delta_bgate"] = dec.se_delta_bgate;
  out["se_comp1"] = dec.se_comp1;
  out["se_comp2"] = dec.se_comp2;
  out["dml"] = estimate_dict(dec.dml);
  return out;
}

py::dict rebalance_dict(const Eigen::VectorXd& y, const std::vector<int>& d,
                        const std::vector<int>& z, const Eigen::MatrixXd& x,
                        const std::vector<int>& balance) {
  const auto r = rebalance(dataset(y, d, z, x, balance));
  py::dict out;
  out["source_row"] = r.plan.source_row;
  out["assigned"] = r.plan.assigned;
  out["donor"] = r.plan.donor;
  out["distance"] = r.plan.distance;
  out["units"] = r.sample.units;
  out["s"] = r.sample.s;
  out["weights"] = r.sample.weights();
  return out;
}

py::dict generate_dict(int n, std::uint64_t seed) {
  const auto s = generate(n, seed);
  py::dict out;
  out["y"] = s.data.y;
  out["d"] = s.data.d;
  out["z"] = s.data.z;
  out["x"] = s.data.x;
  out["columns"] = s.data.covariate_names;
  return out;
}

py::dict study(const std::string& target, const std::string& estimator, int n, int reps,
               std::uint64_t seed, int trees, bool oracle, int truth_n, int threads) {
  StudySpec spec;
  spec.target = sim_target_from_string(target);
  spec.estimator = estimator_kind_from_string(estimator);
  spec.n = n;
  spec.reps = reps;
  spec.base_seed = seed;
  spec.n_trees = trees;
  spec.oracle = oracle;
  spec.truth_n = truth_n;
  spec.threads = threads;
  validate(spec);
  StudyResult res;
  {
    py::gil_scoped_release release;
    res = run_study(spec);
  }
  py::list rows;
  for (const auto& r : res.rows) {
    py::dict row;
    row["rep"] = r.rep;
    row["seed"] = r.seed;
    row["coef"] = r.coef;
    row["se"] = r.se;
    row["ok"] = r.ok;
    row["error"] = r.error;
    rows.append(row);
  }
  py::dict out;
  out["truth"] = res.truth.value;
  out["truth_se"] = res.truth.se;
  out["failures"] = res.failures;
  out["report"] = py::module_::import("json").attr("loads")(to_json(res.report).dump());
  out["rows"] = rows;
  return out;
}

py::tuple cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = run_cli(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Balanced group average treatment effects";
  py::register_exception<EstimationError>(m, "EstimationError", PyExc_RuntimeError);

  m.def("generate", &generate_dict, py::arg("n"), py::arg("seed"),
        "Draw a sample from the simulation design.");
  m.def("estimate", &estimate, py::arg("y"), py::arg("d"), py::arg("z"), py::arg("x"),
        py::arg("effect") = "delta-bgate", py::arg("balance") = std::vector<int>{},
        py::arg("estimator") = "dml", py::arg("seed") = 0, py::arg("trees") = 1000,
        py::arg("k") = 2, py::arg("j") = 2, py::arg("weights") = "normalized",
        py::arg("cbgate_version") = "joint", py::arg("treat") = std::pair<int, int>{1, 0},
        py::arg("groups") = std::pair<int, int>{1, 0}, py::arg("group") = 1);
  m.def("decompose", &decompose, py::arg("y"), py::arg("d"), py::arg("z"), py::arg("x"),
        py::arg("balance"), py::arg("seed") = 0, py::arg("trees") = 1000,
        py::arg("groups") = std::pair<int, int>{1, 0});
  m.def("rebalance", &rebalance_dict, py::arg("y"), py::arg("d"), py::arg("z"), py::arg("x"),
        py::arg("balance"));
  m.def(
      "normalize_truncate_weights",
      [](const std::vector<int>& d, int level, const std::vector<double>& p) {
        return normalize_truncate_weights(d, level, p);
      },
      py::arg("d"), py::arg("level"), py::arg("p"));
  m.def(
      "weighted_variance_factor",
      [](const std::vector<int>& s) { return weighted_variance_factor(s); }, py::arg("s"));
  m.def(
      "true_effect",
      [](const std::string& target, int n_truth) {
        const Truth t = true_effect(sim_target_from_string(target), n_truth);
        return py::make_tuple(t.value, t.se);
      },
      py::arg("target"), py::arg("n_truth") = 1000000);
  m.def("run_study", &study, py::arg("target"), py::arg("estimator") = "dml", py::arg("n") = 2500,
        py::arg("reps") = 200, py::arg("seed") = 1, py::arg("trees") = 1000,
        py::arg("oracle") = false, py::arg("truth_n") = 1000000, py::arg("threads") = 0);
  m.def("run_cli", &cli, py::arg("args"),
        "Run the command line tool; returns (exit code, stdout, stderr).");
}
