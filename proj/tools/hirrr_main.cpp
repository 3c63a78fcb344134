#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hirrr/cohort.hpp"
#include "hirrr/config.hpp"
#include "hirrr/errors.hpp"
#include "hirrr/io.hpp"
#include "hirrr/model_selection.hpp"
#include "hirrr/parallel.hpp"
#include "hirrr/reporting.hpp"
#include "hirrr/simulation.hpp"

#ifndef HIRRR_VERSION
#define HIRRR_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace hirrr;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  unsigned threads = 1;
  bool verbose = false;
};

void log(const Globals& g, const std::string& msg) {
  if (g.verbose) std::cerr << "[hirrr] " << msg << '\n';
}

// Manifest without timestamps or thread counts so reruns are byte-identical.
Json manifest(const std::string& command, std::uint64_t seed, const Json& config, const std::vector<std::string>& flags) {
  return Json{{"tool", "hirrr"},
              {"version", HIRRR_VERSION},
              {"command", command},
              {"seed", seed},
              {"config_hash", fnv1a_hex(config.dump())},
              {"config", config},
              {"flags", flags}};
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir + "'");
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string spec;
  int reps = 20;
  std::string out;
};

int run_simulate(const Globals& g, const SimulateArgs& a) {
  const Json j = read_json_file(a.spec);
  if (!j.is_object()) throw ConfigError("simulation spec must be a JSON object");
  for (const auto& item : j.items()) {
    const std::string& k = item.key();
    if (k != "scenario" && k != "models" && k != "test_size" && k != "trim" && k != "n1_grid") {
      throw ConfigError("simulation spec: unknown key '" + k + "'");
    }
  }
  if (!j.contains("scenario") || !j.contains("models")) throw ConfigError("simulation spec needs 'scenario' and 'models'");
  ScenarioSpec spec = scenario_from_json(j.at("scenario"));
  if (g.seed_given) spec.seed = g.seed;
  const std::vector<ModelConfig> models = models_from_json(j.at("models"));
  ReplicationOptions opt;
  opt.threads = g.threads;
  if (j.contains("test_size")) opt.test_size = j.at("test_size").get<Eigen::Index>();
  if (j.contains("trim")) opt.trim = j.at("trim").get<double>();
  if (opt.test_size < 1) throw ConfigError("test_size must be positive");
  if (!(opt.trim >= 0.0 && opt.trim < 0.5)) throw ConfigError("trim must lie in [0, 0.5)");
  if (a.reps < 1) throw ArgumentError("--reps must be >= 1");
  std::vector<Eigen::Index> n1_grid;
  if (j.contains("n1_grid")) n1_grid = j.at("n1_grid").get<std::vector<Eigen::Index>>();

  Json config{{"scenario", scenario_to_json(spec)},
              {"models", models_to_json(models)},
              {"test_size", opt.test_size},
              {"trim", opt.trim},
              {"reps", a.reps}};
  if (!n1_grid.empty()) config["n1_grid"] = n1_grid;

  ensure_dir(a.out);
  log(g, "running " + std::to_string(a.reps) + " replicates");
  const ReplicationTable table = run_replications(spec, models, a.reps, opt);
  write_text_file(join(a.out, "replicates.csv"), replicates_csv(table));
  write_text_file(join(a.out, "summary.csv"), replication_table_csv(table));

  std::vector<std::string> flags;
  for (std::size_t m = 0; m < models.size(); ++m) {
    std::size_t nc = 0;
    for (const auto& rep : table.replicates) nc += rep.errors[m].empty() && !rep.converged[m];
    if (nc) flags.push_back("nonconverged:" + models[m].name + ":" + std::to_string(nc));
    if (table.failures[m]) flags.push_back("failed:" + models[m].name + ":" + std::to_string(table.failures[m]));
  }

  if (!n1_grid.empty()) {
    const ModelConfig* hm = nullptr;
    for (const auto& m : models) {
      if (m.kind == ModelKind::Hirrr) {
        hm = &m;
        break;
      }
    }
    if (hm == nullptr) throw ConfigError("n1_grid needs a hirrr model");
    log(g, "running the n1 scaling experiment");
    write_text_file(join(a.out, "scaling.csv"), scaling_csv(n1_scaling_experiment(spec, *hm, n1_grid, a.reps, opt)));
  }
  write_json_file(join(a.out, "manifest.json"), manifest("simulate", spec.seed, config, flags));
  return 0;
}

// ---- fit --------------------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string model = "hirrr";
  Eigen::Index rank = 1;
  double lambda = 1.0;
  double ridge = 0.0;
  bool shared_dispersion = false;
  double tolerance = 1e-6;
  int max_iters = 5000;
  std::string out;
};

int run_fit(const Globals& g, const FitArgs& a) {
  const Dataset ds = dataset_from_json(read_json_file(a.data));
  ModelConfig m;
  m.kind = parse_model_kind(a.model);
  m.name = a.model;
  m.rank = a.rank;
  m.lambda = a.lambda;
  m.ltilde_ridge = a.ridge;
  m.shared_dispersion = a.shared_dispersion;
  m.tolerance = a.tolerance;
  m.max_iters = a.max_iters;
  const FittedModel fm = fit_model(m, ds, g.seed, g.threads);
  std::vector<std::string> flags;
  if (!fm.fit.converged) flags.push_back("nonconverged");
  if (fm.fit.degenerate_procrustes) flags.push_back("degenerate_procrustes");
  if (fm.fit.eigen_tie) flags.push_back("eigen_tie");
  const Json config{{"data", a.data}, {"model", model_to_json(m)}};
  Json out{{"model", a.model},
           {"method", fm.fit.method},
           {"rank", fm.rank},
           {"lambda", fm.lambda},
           {"converged", fm.fit.converged},
           {"iterations", fm.fit.iterations},
           {"feature_names", ds.feature_names},
           {"outcome_names", ds.outcome_names},
           {"C", matrix_to_json(fm.fit.params.coefficients())},
           {"params", params_to_json(fm.fit.params)},
           {"manifest", manifest("fit", g.seed, config, flags)}};
  write_json_file(a.out, out);
  log(g, fm.fit.converged ? "converged" : "did not converge");
  return 0;
}

// ---- cv ---------------------------------------------------------------------

struct CvArgs {
  std::string data;
  std::string grid;
  std::string model = "hirrr";
  double ridge = 0.0;
  double tolerance = 1e-6;
  int max_iters = 5000;
  std::string out;
};

int run_cv(const Globals& g, const CvArgs& a) {
  const Dataset ds = dataset_from_json(read_json_file(a.data));
  CvGrid grid = grid_from_json(read_json_file(a.grid));
  if (g.seed_given) grid.seed = g.seed;
  const ModelKind kind = parse_model_kind(a.model);
  if (kind == ModelKind::Glm) throw ArgumentError("cv: glm has no grid to tune");
  if (kind == ModelKind::Rrr) grid.lambdas = {0.0};
  FitConfig base;
  base.tolerance = a.tolerance;
  base.max_iters = a.max_iters;
  base.ltilde_ridge = a.ridge;
  const CvResult res = cross_validate(ds, grid, kind, g.threads, base);
  write_text_file(a.out, cv_scores_csv(res));
  const Json config{{"data", a.data}, {"model", a.model}, {"grid", grid_to_json(grid)},
                    {"ltilde_ridge", a.ridge}, {"tolerance", a.tolerance}, {"max_iters", a.max_iters}};
  Json man = manifest("cv", grid.seed, config, {});
  man["best_rank"] = res.best_rank;
  man["best_lambda"] = res.best_lambda;
  write_json_file(a.out + ".manifest.json", man);
  std::cout << "best rank " << res.best_rank << " lambda " << format_number(res.best_lambda) << '\n';
  return 0;
}

// ---- cohort -----------------------------------------------------------------

struct CohortArgs {
  std::string records;
  std::string config;
  std::string out;
};

int run_cohort(const Globals& g, const CohortArgs& a) {
  const std::vector<EncounterRecord> records = parse_records_csv(read_text_file(a.records));
  const CohortConfig cfg = a.config.empty() ? CohortConfig{} : cohort_config_from_json(read_json_file(a.config));
  const Cohort cohort = build_cohort(records, cfg, g.seed);
  const Dataset ds = build_dataset(cohort, cfg);
  ensure_dir(a.out);
  write_json_file(join(a.out, "dataset.json"), dataset_to_json(ds));

  std::ostringstream pts;
  pts << "patient_id,group,is_case,age,sex,race\n";
  for (const auto* group : {&cohort.multi, &cohort.single}) {
    for (const Patient& p : *group) {
      pts << csv_escape(p.patient_id) << ',' << (p.multi_record ? "multi" : "single") << ',' << (p.is_case ? 1 : 0)
          << ',' << p.age << ',' << csv_escape(p.sex) << ',' << csv_escape(p.race) << '\n';
    }
  }
  write_text_file(join(a.out, "patients.csv"), pts.str());

  std::ostringstream feats;
  feats << "index,feature\n";
  for (std::size_t j = 0; j < ds.feature_names.size(); ++j) feats << j << ',' << csv_escape(ds.feature_names[j]) << '\n';
  write_text_file(join(a.out, "features.csv"), feats.str());

  std::vector<std::string> flags;
  if (cohort.flagged_cases) flags.push_back("cases_with_fewer_controls:" + std::to_string(cohort.flagged_cases));
  const Json config{{"records", a.records}, {"cohort", cohort_config_to_json(cfg)}};
  Json man = manifest("cohort", g.seed, config, flags);
  man["multi_record_patients"] = cohort.multi.size();
  man["single_record_patients"] = cohort.single.size();
  man["features"] = ds.p();
  write_json_file(join(a.out, "manifest.json"), man);
  return 0;
}

// ---- registry (synthetic input for cohort) ----------------------------------

struct RegistryArgs {
  std::size_t patients = 500;
  double single_fraction = 0.6;
  double attempt_rate = 0.12;
  std::string out;
};

int run_registry(const Globals& g, const RegistryArgs& a) {
  RegistryOptions opt;
  opt.patients = a.patients;
  opt.single_fraction = a.single_fraction;
  opt.attempt_rate = a.attempt_rate;
  opt.seed = g.seed;
  write_text_file(a.out, records_to_csv(generate_registry(opt)));
  return 0;
}

// ---- splits -----------------------------------------------------------------

struct SplitsArgs {
  std::string data;
  std::string plan;
  std::string models;
  std::string out;
};

int run_splits(const Globals& g, const SplitsArgs& a) {
  const Dataset ds = dataset_from_json(read_json_file(a.data));
  SplitPlan plan = plan_from_json(read_json_file(a.plan));
  if (g.seed_given) plan.seed = g.seed;
  const std::vector<ModelConfig> models = models_from_json(read_json_file(a.models));
  log(g, "running " + std::to_string(plan.repeats) + " random splits");
  const SplitResults res = run_random_splits(ds, plan, models, g.threads);
  ensure_dir(a.out);
  write_text_file(join(a.out, "split_results.csv"), split_results_csv(res));

  std::ostringstream sc;
  sc << "repeat,model,row,label,score\n";
  for (std::size_t r = 0; r < res.repeats.size(); ++r) {
    const SplitRepeat& rep = res.repeats[r];
    for (std::size_t m = 0; m < models.size(); ++m) {
      for (std::size_t i = 0; i < rep.test_rows.size(); ++i) {
        const Eigen::Index row = rep.test_rows[i];
        sc << r << ',' << csv_escape(models[m].name) << ',' << row << ',' << ds.Y(row, 0) << ','
           << format_number(rep.test_scores[m](static_cast<Eigen::Index>(i))) << '\n';
      }
    }
  }
  write_text_file(join(a.out, "scores.csv"), sc.str());

  // Per-split fits with the training-set feature sd, for `report factors`.
  const Dataset base = plan.include_all_single_records_in_training ? ds : ds.without_single_records();
  Json fits = Json::object();
  std::vector<std::string> flags;
  for (std::size_t m = 0; m < models.size(); ++m) {
    Json arr = Json::array();
    std::size_t nc = 0;
    for (std::size_t r = 0; r < res.repeats.size(); ++r) {
      const SplitRepeat& rep = res.repeats[r];
      const FittedModel& fm = rep.fits[m];
      nc += !fm.fit.converged;
      arr.push_back(Json{{"repeat", r},
                         {"rank", fm.rank},
                         {"lambda", fm.lambda},
                         {"converged", fm.fit.converged},
                         {"feature_sd", vector_to_json(column_sd(base.select_rows(rep.train_rows).X))},
                         {"params", params_to_json(fm.fit.params)}});
    }
    fits[models[m].name] = std::move(arr);
    if (nc) flags.push_back("nonconverged:" + models[m].name + ":" + std::to_string(nc));
  }
  for (std::size_t r = 0; r < res.repeats.size(); ++r) {
    if (res.repeats[r].flagged) flags.push_back("single_class_test_set:" + std::to_string(r));
  }
  write_json_file(join(a.out, "fits.json"), Json{{"feature_names", ds.feature_names}, {"models", std::move(fits)}});
  const Json config{{"data", a.data}, {"plan", plan_to_json(plan)}, {"models", models_to_json(models)}};
  write_json_file(join(a.out, "manifest.json"), manifest("splits", plan.seed, config, flags));
  return 0;
}

// ---- report -----------------------------------------------------------------

struct FactorsArgs {
  std::string fits;
  std::string model;
  std::string direction = "risk";
  Eigen::Index top_k = 10;
  std::string out;
};

int run_factors(const Globals& g, const FactorsArgs& a) {
  const Json j = read_json_file(a.fits);
  std::vector<ModelParams> params;
  std::vector<Eigen::VectorXd> sds;
  std::vector<std::string> names;
  try {
    names = j.at("feature_names").get<std::vector<std::string>>();
    const Json& models = j.at("models");
    if (!models.contains(a.model)) throw ArgumentError("model '" + a.model + "' not found in " + a.fits);
    for (const auto& f : models.at(a.model)) {
      params.push_back(params_from_json(f.at("params")));
      sds.push_back(vector_from_json(f.at("feature_sd")));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("fits file: ") + e.what());
  }
  const auto rows = rank_factors(params, sds, parse_direction(a.direction), a.top_k, names);
  write_text_file(a.out, factors_csv(rows));
  const Json config{{"fits", a.fits}, {"model", a.model}, {"direction", a.direction}, {"top_k", a.top_k}};
  write_json_file(a.out + ".manifest.json", manifest("report factors", g.seed, config, {}));
  return 0;
}

struct UniqueArgs {
  std::string scores;
  std::string data;
  std::string model_a;
  std::string model_b;
  int repeat = 0;
  double top_fraction = 0.10;
  std::string out;
};

int run_unique(const Globals& g, const UniqueArgs& a) {
  const Dataset ds = dataset_from_json(read_json_file(a.data));
  const auto table = parse_csv(read_text_file(a.scores));
  if (table.empty() || table[0] != std::vector<std::string>{"repeat", "model", "row", "label", "score"}) {
    throw IoError("scores file must have header repeat,model,row,label,score");
  }
  std::map<long, std::pair<std::optional<double>, std::optional<double>>> by_row;
  for (std::size_t i = 1; i < table.size(); ++i) {
    const auto& r = table[i];
    if (r.size() != 5) throw IoError("scores file: row " + std::to_string(i + 1) + " has the wrong field count");
    try {
      if (std::stoi(r[0]) != a.repeat) continue;
      const long row = std::stol(r[2]);
      const double s = std::stod(r[4]);
      if (r[1] == a.model_a) by_row[row].first = s;
      if (r[1] == a.model_b) by_row[row].second = s;
    } catch (const std::logic_error&) {
      throw IoError("scores file: malformed number on row " + std::to_string(i + 1));
    }
  }
  std::vector<long> rows;
  for (const auto& [row, s] : by_row) {
    if (!s.first || !s.second) throw IoError("scores file: row " + std::to_string(row) + " lacks a score for both models");
    if (row < 0 || row >= ds.n()) throw IoError("scores file: row index out of range");
    rows.push_back(row);
  }
  if (rows.empty()) throw ArgumentError("no scores for repeat " + std::to_string(a.repeat) + " and the given models");
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd sa(n), sb(n);
  Eigen::VectorXi labels(n);
  Eigen::MatrixXd feats(n, ds.p());
  for (Eigen::Index i = 0; i < n; ++i) {
    const long row = rows[static_cast<std::size_t>(i)];
    sa(i) = *by_row[row].first;
    sb(i) = *by_row[row].second;
    labels(i) = static_cast<int>(ds.Y(row, 0));
    feats.row(i) = ds.X.row(row);
  }
  const UniqueCaseTable res = compare_unique_cases(sa, sb, labels, feats, a.top_fraction, ds.feature_names);
  write_text_file(a.out, unique_cases_csv(res));
  if (!res.message.empty()) std::cout << res.message << '\n';
  const Json config{{"scores", a.scores}, {"data", a.data},     {"model_a", a.model_a},
                    {"model_b", a.model_b}, {"repeat", a.repeat}, {"top_fraction", a.top_fraction}};
  Json man = manifest("report unique-cases", g.seed, config, res.message.empty() ? std::vector<std::string>{}
                                                                                  : std::vector<std::string>{res.message});
  man["both_correct"] = res.both_total;
  man["only_b_correct"] = res.only_b_total;
  write_json_file(a.out + ".manifest.json", man);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid and integrative reduced-rank regression"};
  app.set_version_flag("--version", HIRRR_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  int threads_flag = 0;
  app.add_option("--seed", g.seed, "Root random seed (overrides seeds in config files)");
  app.add_option("--threads", threads_flag, "Worker threads (default: HIRRR_THREADS or 1)")->check(CLI::NonNegativeNumber);
  app.add_flag("--verbose", g.verbose, "Progress messages on stderr");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Run simulation replicates");
  c_sim->add_option("--spec", sim.spec, "Simulation spec (JSON)")->required();
  c_sim->add_option("--reps", sim.reps, "Replicates");
  c_sim->add_option("--out", sim.out, "Output directory")->required();

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "Fit one model");
  c_fit->add_option("--data", fit.data, "Dataset (JSON)")->required();
  c_fit->add_option("--model", fit.model, "glm, rrr or hirrr")->check(CLI::IsMember({"glm", "rrr", "hirrr"}));
  c_fit->add_option("--rank", fit.rank, "Rank");
  c_fit->add_option("--lambda", fit.lambda, "Weight of the single-record part");
  c_fit->add_option("--ltilde-ridge", fit.ridge, "Ridge on the single-record scores");
  c_fit->add_flag("--shared-dispersion", fit.shared_dispersion, "One dispersion for all Gaussian outcomes");
  c_fit->add_option("--tolerance", fit.tolerance, "Relative objective tolerance");
  c_fit->add_option("--max-iters", fit.max_iters, "Iteration cap");
  c_fit->add_option("--out", fit.out, "Output file (JSON)")->required();

  CvArgs cv;
  auto* c_cv = app.add_subcommand("cv", "Cross-validate rank and lambda");
  c_cv->add_option("--data", cv.data, "Dataset (JSON)")->required();
  c_cv->add_option("--grid", cv.grid, "Grid (JSON)")->required();
  c_cv->add_option("--model", cv.model, "rrr or hirrr")->check(CLI::IsMember({"glm", "rrr", "hirrr"}));
  c_cv->add_option("--ltilde-ridge", cv.ridge, "Ridge on the single-record scores");
  c_cv->add_option("--tolerance", cv.tolerance, "Relative objective tolerance");
  c_cv->add_option("--max-iters", cv.max_iters, "Iteration cap");
  c_cv->add_option("--out", cv.out, "Scores table (CSV)")->required();

  CohortArgs co;
  auto* c_co = app.add_subcommand("cohort", "Build the matched cohort dataset from encounter records");
  c_co->add_option("--records", co.records, "Encounter records (CSV)")->required();
  c_co->add_option("--config", co.config, "Cohort config (JSON)");
  c_co->add_option("--out", co.out, "Output directory")->required();

  RegistryArgs reg;
  auto* c_reg = app.add_subcommand("registry", "Write a synthetic encounter registry");
  c_reg->add_option("--patients", reg.patients, "Patients");
  c_reg->add_option("--single-fraction", reg.single_fraction, "Share of single-visit patients");
  c_reg->add_option("--attempt-rate", reg.attempt_rate, "Base attempt rate");
  c_reg->add_option("--out", reg.out, "Output file (CSV)")->required();

  SplitsArgs sp;
  auto* c_sp = app.add_subcommand("splits", "Repeated random train/test evaluation");
  c_sp->add_option("--data", sp.data, "Dataset (JSON)")->required();
  c_sp->add_option("--plan", sp.plan, "Split plan (JSON)")->required();
  c_sp->add_option("--models", sp.models, "Model list (JSON)")->required();
  c_sp->add_option("--out", sp.out, "Output directory")->required();

  auto* c_rep = app.add_subcommand("report", "Risk factor and unique-case tables");
  c_rep->require_subcommand(1);
  FactorsArgs fa;
  auto* c_fa = c_rep->add_subcommand("factors", "Rank features by averaged standardized coefficients");
  c_fa->add_option("--fits", fa.fits, "fits.json from `splits`")->required();
  c_fa->add_option("--model", fa.model, "Model name")->required();
  c_fa->add_option("--direction", fa.direction, "risk or protective")->check(CLI::IsMember({"risk", "protective"}));
  c_fa->add_option("--top-k", fa.top_k, "Rows to keep");
  c_fa->add_option("--out", fa.out, "Output file (CSV)")->required();
  UniqueArgs ua;
  auto* c_ua = c_rep->add_subcommand("unique-cases", "Compare cases flagged by two models");
  c_ua->add_option("--scores", ua.scores, "scores.csv from `splits`")->required();
  c_ua->add_option("--data", ua.data, "Dataset (JSON)")->required();
  c_ua->add_option("--model-a", ua.model_a, "Reference model")->required();
  c_ua->add_option("--model-b", ua.model_b, "Compared model")->required();
  c_ua->add_option("--repeat", ua.repeat, "Split repeat");
  c_ua->add_option("--top-fraction", ua.top_fraction, "Flagged fraction");
  c_ua->add_option("--out", ua.out, "Output file (CSV)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    g.seed_given = app.count("--seed") > 0;
    g.threads = resolve_threads(threads_flag);
    if (c_sim->parsed()) return run_simulate(g, sim);
    if (c_fit->parsed()) return run_fit(g, fit);
    if (c_cv->parsed()) return run_cv(g, cv);
    if (c_co->parsed()) return run_cohort(g, co);
    if (c_reg->parsed()) return run_registry(g, reg);
    if (c_sp->parsed()) return run_splits(g, sp);
    if (c_fa->parsed()) return run_factors(g, fa);
    if (c_ua->parsed()) return run_unique(g, ua);
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
