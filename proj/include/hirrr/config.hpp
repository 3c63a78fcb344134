#pragma once

// JSON forms of the configuration types. Unknown keys are rejected with
// ConfigError so typos do not silently fall back to defaults.

#include <vector>

#include "hirrr/cohort.hpp"
#include "hirrr/io.hpp"
#include "hirrr/model_selection.hpp"
#include "hirrr/simulation.hpp"

namespace hirrr {

ScenarioSpec scenario_from_json(const Json& j);
Json scenario_to_json(const ScenarioSpec& s);

CvGrid grid_from_json(const Json& j);
Json grid_to_json(const CvGrid& g);

ModelConfig model_from_json(const Json& j);
Json model_to_json(const ModelConfig& m);
/// Accepts either an array of models or {"models": [...]}.
std::vector<ModelConfig> models_from_json(const Json& j);
Json models_to_json(const std::vector<ModelConfig>& models);

SplitPlan plan_from_json(const Json& j);
Json plan_to_json(const SplitPlan& p);

CohortConfig cohort_config_from_json(const Json& j);
Json cohort_config_to_json(const CohortConfig& c);

}  // namespace hirrr
