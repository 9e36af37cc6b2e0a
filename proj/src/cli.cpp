#include "bgate/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "bgate/csv.hpp"
#include "bgate/dml.hpp"
#include "bgate/parallel.hpp"
#include "bgate/random.hpp"
#include "bgate/reweight.hpp"
#include "bgate/riesz.hpp"
#include "bgate/simlab.hpp"
#include "bgate/tuning.hpp"

namespace bgate {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_json(const std::string& path, const json& j) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
}

bool flag_given(const std::vector<std::string>& args, const std::string& name) {
  const std::string flag = "--" + name;
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

// Expands the --config file into flags that the command line did not set.
// Object values (forest sets, network settings) are returned separately.
std::vector<std::string> merge_config(std::vector<std::string> args, json& objects) {
  objects = json::object();
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path) return args;
  const json cfg = read_json(*path);
  if (!cfg.is_object()) throw DataError(*path + ": config must be a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    if (value.is_object()) {
      objects[key] = value;
      continue;
    }
    if (flag_given(args, key) || value.is_null()) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back("--" + key);
      continue;
    }
    std::string text;
    if (value.is_array()) {
      for (const auto& item : value) text += (text.empty() ? "" : ",") + scalar_text(item);
    } else {
      text = scalar_text(value);
    }
    args.push_back("--" + key);
    args.push_back(text);
  }
  return args;
}

struct DataFlags {
  std::string data;
  ColumnRoles roles;
  std::string effect = "delta-bgate";
  std::vector<double> groups;
  std::vector<double> treatments;
  std::optional<double> group;

  void add(CLI::App* app, bool need_effect) {
    app->add_option("--data", data, "input CSV")->required();
    app->add_option("--outcome", roles.outcome, "outcome column")->required();
    app->add_option("--treatment", roles.treatment, "treatment column")->required();
    app->add_option("--moderator", roles.moderator, "moderator column")->required();
    app->add_option("--covariates", roles.covariates, "covariate columns (default: all others)")
        ->delimiter(',');
    app->add_option("--balance", roles.balance, "balancing columns W")->delimiter(',');
    auto* e = app->add_option("--effect", effect,
                              "ate, gate, bgate, delta-gate, delta-bgate or delta-cbgate");
    if (need_effect) e->required();
    app->add_option("--groups", groups, "moderator values u,v of the group contrast")
        ->delimiter(',')
        ->expected(2);
    app->add_option("--group", group, "moderator value for gate and bgate");
    app->add_option("--treatments", treatments, "treatment values l,m of the contrast")
        ->delimiter(',')
        ->expected(2);
  }

  EffectTarget target(const CsvData& csv) const {
    EffectTarget t;
    t.kind = effect_kind_from_string(effect);
    if (!treatments.empty()) {
      t.treat_contrast = {csv.treatment_code(treatments[0]), csv.treatment_code(treatments[1])};
    }
    if (!groups.empty()) {
      t.group_contrast = {csv.moderator_code(groups[0]), csv.moderator_code(groups[1])};
    }
    t.group = group ? csv.moderator_code(*group) : t.group_contrast.first;
    check_target(t, csv.data);
    return t;
  }
};

struct ForestFlags {
  std::string forest_config;
  std::optional<int> trees;

  void add(CLI::App* app) {
    app->add_option("--forest-config", forest_config, "JSON forest set (as written by tune)");
    app->add_option("--trees", trees, "trees per forest")->check(CLI::PositiveNumber);
  }

  std::optional<ForestSet> resolve(const json& objects, std::optional<ForestSet> base) const {
    if (objects.contains("forests")) base = forest_set_from_json(objects["forests"], base.value_or(ForestSet{}));
    if (!forest_config.empty()) {
      json j = read_json(forest_config);
      if (j.contains("forests")) j = j["forests"];
      if (j.contains("config") && j["config"].contains("forests")) j = j["config"]["forests"];
      base = forest_set_from_json(j, base.value_or(ForestSet{}));
    }
    if (trees) {
      if (!base) base = ForestSet{};
      base->set_trees(*trees);
    }
    return base;
  }
};

void print_estimate(std::ostream& out, const EffectEstimate& est, const std::string& estimator) {
  out << std::left << std::setw(10) << "effect" << to_string(est.target.kind) << '\n'
      << std::setw(10) << "estimator" << estimator << '\n'
      << std::setprecision(6) << std::setw(10) << "coef" << est.coef << '\n'
      << std::setw(10) << "se" << est.se << '\n'
      << std::setw(10) << "p_value" << est.p_value << '\n'
      << std::setw(10) << "n" << est.n << '\n';
}

json roles_json(const ColumnRoles& r) {
  return {{"outcome", r.outcome},
          {"treatment", r.treatment},
          {"moderator", r.moderator},
          {"covariates", r.covariates},
          {"balance", r.balance}};
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  json objects;
};

int cmd_estimate(Context& ctx, const DataFlags& df, const ForestFlags& ff,
                 const std::string& estimator, const DmlConfig& cfg,
                 const std::string& version_name, const std::string& weights,
                 const std::string& out_path, const std::string& balanced_out) {
  if (estimator != "dml" && estimator != "autodml" && estimator != "reweight") {
    throw DataError("--estimator must be dml, autodml or reweight");
  }
  const EffectKind kind = effect_kind_from_string(df.effect);
  if ((estimator == "reweight" || estimator == "autodml") && kind != EffectKind::DeltaBGATE) {
    throw DataError("unsupported combination: --estimator " + estimator + " with --effect " +
                    df.effect + " (only delta-bgate)");
  }
  const CbgateVersion version = cbgate_version_from_string(version_name);
  DmlConfig dml = cfg;
  if (weights == "raw") {
    dml.weights = WeightMode::raw;
  } else if (weights != "normalized") {
    throw DataError("--weights must be normalized or raw");
  }
  validate(dml);
  const ForestSet forests = ff.resolve(ctx.objects, std::nullopt).value_or(ForestSet{});
  AutoDmlConfig autodml;
  autodml.k = dml.k;
  autodml.j = dml.j;
  autodml.seed = dml.seed;
  if (ctx.objects.contains("stage1")) autodml.stage1 = riesz_config_from_json(ctx.objects["stage1"], autodml.stage1);
  if (ctx.objects.contains("stage2")) autodml.stage2 = riesz_config_from_json(ctx.objects["stage2"], autodml.stage2);
  validate(autodml.stage1);
  validate(autodml.stage2);

  const CsvData csv = load_csv(df.data, df.roles);
  if ((kind == EffectKind::BGATE || kind == EffectKind::DeltaBGATE) && csv.data.w_cols.empty()) {
    throw DataError("--balance is required for " + df.effect);
  }
  const EffectTarget target = df.target(csv);
  const ForestNuisance nuisances(forests);

  EffectEstimate est;
  if (estimator == "dml") {
    est = estimate_dml(csv.data, target, dml, nuisances, version);
  } else if (estimator == "reweight") {
    est = estimate_delta_bgate_reweighted(csv.data, target, dml, nuisances);
    if (!balanced_out.empty()) write_balanced_csv(balanced_out, rebalance(csv.data), csv);
  } else {
    est = estimate_auto_dml_delta_bgate(csv.data, target, autodml);
  }
  print_estimate(ctx.out, est, estimator);

  if (!out_path.empty()) {
    if (fs::path(out_path).extension() == ".csv") {
      std::ofstream f(out_path);
      if (!f) throw DataError("cannot write " + out_path);
      f << estimate_csv_header() << '\n' << estimate_csv_row(est) << '\n';
    } else {
      json config = {{"data", df.data},     {"roles", roles_json(csv.roles)},
                     {"effect", df.effect}, {"estimator", estimator},
                     {"k", dml.k},          {"j", dml.j},
                     {"seed", dml.seed},    {"weights", weights}};
      if (estimator == "autodml") {
        config["stage1"] = to_json(autodml.stage1);
        config["stage2"] = to_json(autodml.stage2);
      } else {
        config["forests"] = to_json(forests);
      }
      if (kind == EffectKind::DeltaCBGATE) config["cbgate_version"] = version_name;
      write_json(out_path, {{"config", config}, {"estimate", to_json(est)}});
    }
  }
  return 0;
}

int cmd_simulate(Context& ctx, StudySpec spec, const std::string& effect,
                 const std::string& estimator, const std::string& version_name,
                 const ForestFlags& ff, const std::string& out_dir, bool emit_data) {
  spec.target = sim_target_from_string(effect);
  spec.estimator = estimator_kind_from_string(estimator);
  spec.cbgate_version = cbgate_version_from_string(version_name);
  if (ff.trees) spec.n_trees = *ff.trees;
  ForestFlags no_trees = ff;
  no_trees.trees.reset();
  spec.forests = no_trees.resolve(ctx.objects, std::nullopt);
  if (spec.forests) spec.forests->set_trees(spec.n_trees);
  if (ctx.objects.contains("stage1")) spec.stage1 = riesz_config_from_json(ctx.objects["stage1"], spec.stage1);
  if (ctx.objects.contains("stage2")) spec.stage2 = riesz_config_from_json(ctx.objects["stage2"], spec.stage2);
  validate(spec);

  fs::create_directories(out_dir);
  if (emit_data) {
    const fs::path dir = fs::path(out_dir) / "data";
    fs::create_directories(dir);
    for (int r = 0; r < spec.reps; ++r) {
      DgpSample s = generate(spec.n, replication_seed(spec.base_seed, r));
      char name[32];
      std::snprintf(name, sizeof name, "rep_%04d.csv", r);
      write_csv((dir / name).string(), as_csv_data(s.data));
    }
  }
  const StudyResult result = run_study(spec);
  write_results_csv((fs::path(out_dir) / "results.csv").string(), result);
  write_json((fs::path(out_dir) / "report.json").string(), report_json(result));

  const auto& r = result.report;
  ctx.out << std::left << std::setprecision(4) << effect << " / " << estimator << (spec.oracle ? " (oracle)" : "")
          << "  n=" << spec.n << "  reps=" << r.replications << "  failures=" << result.failures
          << '\n'
          << "truth " << result.truth.value << "  bias " << r.bias << "  std " << r.std
          << "  rmse " << r.rmse << "  coverage " << r.coverage_95 << "  bias_se " << r.bias_se
          << '\n';
  return 0;
}

int cmd_tune(Context& ctx, const DataFlags& df, bool from_data, const std::string& sim_effect,
             int sim_n, const TuningGrid& grid, int trees, std::uint64_t seed,
             const std::string& out_path) {
  validate(grid);
  ForestConfig base;
  base.n_trees = trees;
  std::function<Dataset(int)> draw;
  EffectTarget target = EffectTarget::delta_bgate();
  if (from_data) {
    if (df.data.empty()) throw DataError("tune needs --data or --simulate");
    auto csv = std::make_shared<CsvData>(load_csv(df.data, df.roles));
    target = df.target(*csv);
    draw = [csv](int) { return csv->data; };
  } else {
    const SimTarget st = sim_target_from_string(sim_effect);
    if (st == SimTarget::DeltaCbgate) throw DataError("tune --simulate supports delta-bgate and delta-gate effects");
    target = effect_target(st);
    draw = [st, sim_n, seed](int r) {
      DgpSample s = generate(sim_n, derive_seed(seed, 0x7d9e, static_cast<std::uint64_t>(r)));
      return with_balancing(s.data, balancing_columns(st));
    };
  }
  const NuisanceTuning t = tune_nuisances(draw, target, grid, base, seed);
  ctx.out << std::left << std::setw(8) << "role" << "max_depth/min_leaf\n";
  for (const auto& [name, result] : t.roles) {
    ctx.out << std::setw(8) << name << result.best.max_depth << '/' << result.best.min_leaf
            << '\n';
  }
  if (!out_path.empty()) write_json(out_path, to_json(t));
  return 0;
}

int cmd_decompose(Context& ctx, const DataFlags& df, const ForestFlags& ff, const DmlConfig& cfg,
                  const std::string& out_path) {
  validate(cfg);
  const ForestSet forests = ff.resolve(ctx.objects, std::nullopt).value_or(ForestSet{});
  const CsvData csv = load_csv(df.data, df.roles);
  if (csv.data.w_cols.empty()) throw DataError("--balance is required for decompose");
  DataFlags flags = df;
  flags.effect = "delta-bgate";
  const EffectTarget target = flags.target(csv);
  const Decomposition d = decompose_delta_gate(csv.data, target, cfg, ForestNuisance(forests));
  auto row = [&](const char* name, double v, double se) {
    ctx.out << std::left << std::setw(22) << name << std::right << std::setw(12) << v
            << std::setw(12) << se << '\n';
  };
  ctx.out << std::setprecision(5) << std::left << std::setw(22) << "component" << std::right
          << std::setw(12) << "value" << std::setw(12) << "se" << '\n';
  row("delta-gate", d.delta_gate, d.se_delta_gate);
  row("delta-bgate (direct)", d.delta_bgate, d.se_delta_bgate);
  row("compositional (1)", d.comp1, d.se_comp1);
  row("compositional (2)", d.comp2, d.se_comp2);
  row("delta-bgate (dml)", d.dml.coef, d.dml.se);
  ctx.out << std::left << std::setw(22) << "identity residual" << std::right << std::setw(12)
          << d.residual() << '\n';
  if (!out_path.empty()) {
    json config = {{"data", df.data}, {"roles", roles_json(csv.roles)}, {"k", cfg.k},
                   {"j", cfg.j},      {"seed", cfg.seed},               {"forests", to_json(forests)}};
    write_json(out_path, {{"config", config}, {"decomposition", to_json(d)}});
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  Context ctx{out, err, json::object()};
  std::vector<std::string> args;
  try {
    args = merge_config(raw_args, ctx.objects);
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"Balanced group average treatment effects", "bgate"};
  app.require_subcommand(1);
  std::string config_path;
  int threads = 0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config; flags override its values");
    sub->add_option("--threads", threads, "worker threads (default: all cores)")
        ->check(CLI::NonNegativeNumber);
  };

  DataFlags df;
  ForestFlags ff;
  DmlConfig dml;
  std::string estimator = "dml", version = "joint", weights = "normalized", out_path, balanced_out;

  auto* est = app.add_subcommand("estimate", "estimate an effect on a CSV file");
  common(est);
  df.add(est, true);
  ff.add(est);
  est->add_option("--estimator", estimator, "dml, autodml or reweight");
  est->add_option("--k", dml.k, "outer folds");
  est->add_option("--j", dml.j, "inner folds");
  est->add_option("--seed", dml.seed, "random seed");
  est->add_option("--cbgate-version", version, "joint or product");
  est->add_option("--weights", weights, "normalized or raw");
  est->add_option("--out", out_path, "report path (.json or .csv)");
  est->add_option("--balanced-out", balanced_out, "write the rebalanced sample (reweight)");

  StudySpec spec;
  std::string sim_effect, sim_out = ".";
  bool emit_data = false;
  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo study on the simulation design");
  common(sim);
  ff.add(sim);
  sim->add_option("--n", spec.n, "sample size");
  sim->add_option("--reps", spec.reps, "replications");
  sim->add_option("--effect", sim_effect, "delta-bgate-x0, delta-bgate-x2, delta-gate or delta-cbgate")
      ->required();
  sim->add_option("--estimator", estimator, "dml, autodml or reweight");
  sim->add_option("--seed", spec.base_seed, "base seed");
  sim->add_option("--k", spec.k, "outer folds");
  sim->add_option("--j", spec.j, "inner folds");
  sim->add_option("--cbgate-version", version, "joint or product");
  sim->add_option("--truth-n", spec.truth_n, "sample size of the truth computation");
  sim->add_flag("--oracle", spec.oracle, "use the true nuisance functions");
  sim->add_option("--out", sim_out, "output directory");
  sim->add_flag("--emit-data", emit_data, "write every replication's sample as CSV");

  DataFlags tdf;
  TuningGrid grid;
  std::string tune_sim;
  int tune_n = 2500, tune_trees = 1000;
  std::uint64_t tune_seed = 0;
  std::string tune_out;
  auto* tune = app.add_subcommand("tune", "grid-search forest depth and leaf size per nuisance");
  common(tune);
  tune->add_option("--data", tdf.data, "input CSV");
  tune->add_option("--outcome", tdf.roles.outcome, "outcome column");
  tune->add_option("--treatment", tdf.roles.treatment, "treatment column");
  tune->add_option("--moderator", tdf.roles.moderator, "moderator column");
  tune->add_option("--covariates", tdf.roles.covariates, "covariate columns")->delimiter(',');
  tune->add_option("--balance", tdf.roles.balance, "balancing columns W")->delimiter(',');
  tune->add_option("--effect", tdf.effect, "effect whose nuisances are tuned");
  tune->add_option("--groups", tdf.groups, "moderator values u,v")->delimiter(',')->expected(2);
  tune->add_option("--treatments", tdf.treatments, "treatment values l,m")->delimiter(',')->expected(2);
  tune->add_option("--simulate", tune_sim, "tune on fresh draws of the simulation design for this effect");
  tune->add_option("--n", tune_n, "sample size of simulated draws");
  tune->add_option("--grid-depths", grid.depths, "maximum depths")->delimiter(',');
  tune->add_option("--grid-leaves", grid.leaves, "minimum leaf sizes")->delimiter(',');
  tune->add_option("--draws", grid.draws, "draws (majority vote)");
  tune->add_option("--folds", grid.folds, "cross-validation folds");
  tune->add_option("--trees", tune_trees, "trees per forest")->check(CLI::PositiveNumber);
  tune->add_option("--seed", tune_seed, "random seed");
  tune->add_option("--out", tune_out, "JSON output (usable as --forest-config)");

  DataFlags ddf;
  ForestFlags dff;
  DmlConfig ddml;
  std::string dec_out;
  auto* dec = app.add_subcommand("decompose", "split a difference of GATEs into balanced and compositional parts");
  common(dec);
  ddf.add(dec, false);
  dff.add(dec);
  dec->add_option("--k", ddml.k, "outer folds");
  dec->add_option("--j", ddml.j, "inner folds");
  dec->add_option("--seed", ddml.seed, "random seed");
  dec->add_option("--out", dec_out, "JSON report");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, eo;
    const int code = app.exit(e, o, eo);
    out << o.str();
    err << eo.str();
    return code == 0 ? 0 : 2;
  }

  try {
    set_thread_count(threads);
    if (*est) {
      return cmd_estimate(ctx, df, ff, estimator, dml, version, weights, out_path, balanced_out);
    }
    if (*sim) {
      if (spec.reps < 2) throw DataError("--reps must be at least 2");
      spec.threads = threads;
      return cmd_simulate(ctx, spec, sim_effect, estimator, version, ff, sim_out, emit_data);
    }
    if (*tune) {
      const bool from_data = tune_sim.empty();
      if (from_data && (tdf.data.empty() || tdf.roles.outcome.empty() ||
                        tdf.roles.treatment.empty() || tdf.roles.moderator.empty())) {
        throw DataError("tune needs --data with --outcome, --treatment and --moderator, or --simulate");
      }
      return cmd_tune(ctx, tdf, from_data, tune_sim, tune_n, grid, tune_trees, tune_seed, tune_out);
    }
    return cmd_decompose(ctx, ddf, dff, ddml, dec_out);
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const EstimationError& e) {
    err << "estimation failed: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "estimation failed: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace bgate
