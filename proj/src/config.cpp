#include "hirrr/config.hpp"

#include <algorithm>
#include <initializer_list>
#include <string>

#include "hirrr/errors.hpp"

namespace hirrr {

namespace {

void require_object(const Json& j, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
}

void check_keys(const Json& j, const char* what, std::initializer_list<const char*> allowed) {
  require_object(j, what);
  for (const auto& item : j.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    if (!ok) throw ConfigError(std::string(what) + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
void read(const Json& j, const char* key, T& out, const char* what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(what) + ": key '" + key + "' has the wrong type");
  }
}

// Seeds may exceed the signed range, so accept any non-negative integer.
void read_seed(const Json& j, std::uint64_t& out, const char* what) {
  if (!j.contains("seed")) return;
  const Json& v = j.at("seed");
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
    throw ConfigError(std::string(what) + ": seed must be a non-negative integer");
  }
  out = v.get<std::uint64_t>();
}

}  // namespace

ScenarioSpec scenario_from_json(const Json& j) {
  check_keys(j, "scenario", {"scenario", "n", "n1", "p", "q", "q0", "r", "b", "target_prevalence", "seed"});
  ScenarioSpec s;
  std::string kind = to_string(s.scenario);
  read(j, "scenario", kind, "scenario");
  s.scenario = parse_scenario(kind);
  read(j, "n", s.n, "scenario");
  read(j, "n1", s.n1, "scenario");
  read(j, "p", s.p, "scenario");
  read(j, "q", s.q, "scenario");
  read(j, "q0", s.q0, "scenario");
  read(j, "r", s.r, "scenario");
  read(j, "b", s.b, "scenario");
  read(j, "target_prevalence", s.target_prevalence, "scenario");
  read_seed(j, s.seed, "scenario");
  try {
    s.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  return s;
}

Json scenario_to_json(const ScenarioSpec& s) {
  return Json{{"scenario", to_string(s.scenario)}, {"n", s.n}, {"n1", s.n1}, {"p", s.p}, {"q", s.q},
              {"q0", s.q0}, {"r", s.r}, {"b", s.b}, {"target_prevalence", s.target_prevalence}, {"seed", s.seed}};
}

CvGrid grid_from_json(const Json& j) {
  check_keys(j, "grid", {"ranks", "lambdas", "folds", "criterion", "seed"});
  CvGrid g;
  read(j, "ranks", g.ranks, "grid");
  read(j, "lambdas", g.lambdas, "grid");
  read(j, "folds", g.folds, "grid");
  std::string crit = to_string(g.criterion);
  read(j, "criterion", crit, "grid");
  g.criterion = parse_criterion(crit);
  read_seed(j, g.seed, "grid");
  g.validate();
  return g;
}

Json grid_to_json(const CvGrid& g) {
  return Json{{"ranks", g.ranks}, {"lambdas", g.lambdas}, {"folds", g.folds},
              {"criterion", to_string(g.criterion)}, {"seed", g.seed}};
}

ModelConfig model_from_json(const Json& j) {
  check_keys(j, "model", {"name", "model", "rank", "lambda", "cv", "features", "screen_top_k", "tolerance",
                          "max_iters", "ltilde_ridge", "shared_dispersion"});
  ModelConfig m;
  std::string kind = to_string(m.kind);
  read(j, "model", kind, "model");
  m.kind = parse_model_kind(kind);
  m.name = kind;
  read(j, "name", m.name, "model");
  read(j, "rank", m.rank, "model");
  read(j, "lambda", m.lambda, "model");
  if (j.contains("cv")) m.cv = grid_from_json(j.at("cv"));
  read(j, "features", m.features, "model");
  if (j.contains("screen_top_k")) {
    Eigen::Index k = 0;
    read(j, "screen_top_k", k, "model");
    if (k < 1) throw ConfigError("model: screen_top_k must be positive");
    m.screen_top_k = k;
  }
  read(j, "tolerance", m.tolerance, "model");
  read(j, "max_iters", m.max_iters, "model");
  read(j, "ltilde_ridge", m.ltilde_ridge, "model");
  read(j, "shared_dispersion", m.shared_dispersion, "model");
  if (m.rank < 1) throw ConfigError("model '" + m.name + "': rank must be positive");
  if (!(m.lambda >= 0.0)) throw ConfigError("model '" + m.name + "': lambda must be non-negative");
  if (!(m.tolerance > 0.0)) throw ConfigError("model '" + m.name + "': tolerance must be positive");
  if (m.max_iters < 0) throw ConfigError("model '" + m.name + "': max_iters must be non-negative");
  if (!(m.ltilde_ridge >= 0.0)) throw ConfigError("model '" + m.name + "': ltilde_ridge must be non-negative");
  return m;
}

Json model_to_json(const ModelConfig& m) {
  Json j{{"name", m.name},           {"model", to_string(m.kind)},   {"rank", m.rank},
         {"lambda", m.lambda},       {"tolerance", m.tolerance},     {"max_iters", m.max_iters},
         {"ltilde_ridge", m.ltilde_ridge}, {"shared_dispersion", m.shared_dispersion}};
  if (m.cv) j["cv"] = grid_to_json(*m.cv);
  if (!m.features.empty()) j["features"] = m.features;
  if (m.screen_top_k) j["screen_top_k"] = *m.screen_top_k;
  return j;
}

std::vector<ModelConfig> models_from_json(const Json& j) {
  const Json* arr = &j;
  if (j.is_object()) {
    check_keys(j, "models", {"models"});
    if (!j.contains("models")) throw ConfigError("models: missing key 'models'");
    arr = &j.at("models");
  }
  if (!arr->is_array() || arr->empty()) throw ConfigError("models must be a non-empty array");
  std::vector<ModelConfig> out;
  for (const auto& m : *arr) out.push_back(model_from_json(m));
  for (std::size_t a = 0; a < out.size(); ++a) {
    for (std::size_t b = a + 1; b < out.size(); ++b) {
      if (out[a].name == out[b].name) throw ConfigError("duplicate model name '" + out[a].name + "'");
    }
  }
  return out;
}

Json models_to_json(const std::vector<ModelConfig>& models) {
  Json arr = Json::array();
  for (const auto& m : models) arr.push_back(model_to_json(m));
  return arr;
}

SplitPlan plan_from_json(const Json& j) {
  check_keys(j, "plan", {"train_fraction", "repeats", "include_all_single_records_in_training", "seed"});
  SplitPlan p;
  read(j, "train_fraction", p.train_fraction, "plan");
  read(j, "repeats", p.repeats, "plan");
  read(j, "include_all_single_records_in_training", p.include_all_single_records_in_training, "plan");
  read_seed(j, p.seed, "plan");
  p.validate();
  return p;
}

Json plan_to_json(const SplitPlan& p) {
  return Json{{"train_fraction", p.train_fraction},
              {"repeats", p.repeats},
              {"include_all_single_records_in_training", p.include_all_single_records_in_training},
              {"seed", p.seed}};
}

CohortConfig cohort_config_from_json(const Json& j) {
  check_keys(j, "cohort config",
             {"control_ratio", "age_window", "code_prevalence_floor", "truncate_digits", "surrogate_map"});
  CohortConfig c;
  read(j, "control_ratio", c.control_ratio, "cohort config");
  read(j, "age_window", c.age_window, "cohort config");
  read(j, "code_prevalence_floor", c.code_prevalence_floor, "cohort config");
  read(j, "truncate_digits", c.truncate_digits, "cohort config");
  if (j.contains("surrogate_map")) {
    const Json& m = j.at("surrogate_map");
    if (!m.is_array()) throw ConfigError("cohort config: surrogate_map must be an array");
    c.surrogate_map.clear();
    for (const auto& d : m) {
      check_keys(d, "surrogate_map entry", {"disorder", "patterns"});
      DisorderPatterns dp;
      read(d, "disorder", dp.disorder, "surrogate_map entry");
      read(d, "patterns", dp.patterns, "surrogate_map entry");
      if (dp.disorder.empty()) throw ConfigError("surrogate_map entry: missing disorder name");
      c.surrogate_map.push_back(std::move(dp));
    }
  }
  c.validate();
  return c;
}

Json cohort_config_to_json(const CohortConfig& c) {
  Json map = Json::array();
  for (const auto& d : c.surrogate_map) map.push_back(Json{{"disorder", d.disorder}, {"patterns", d.patterns}});
  return Json{{"control_ratio", c.control_ratio},
              {"age_window", c.age_window},
              {"code_prevalence_floor", c.code_prevalence_floor},
              {"truncate_digits", c.truncate_digits},
              {"surrogate_map", std::move(map)}};
}

}  // namespace hirrr
