#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hirrr/estimators.hpp"
#include "hirrr/metrics.hpp"
#include "hirrr/model_selection.hpp"

namespace hirrr {

enum class Scenario { Continuous, Binary };

std::string to_string(Scenario s);
Scenario parse_scenario(const std::string& name);

struct ScenarioSpec {
  Scenario scenario = Scenario::Continuous;
  Eigen::Index n = 2000;
  Eigen::Index n1 = 7000;
  Eigen::Index p = 300;
  Eigen::Index q = 30;
  int q0 = 1;
  Eigen::Index r = 3;
  double b = 0.05;
  double target_prevalence = 0.2;  // Binary only
  std::uint64_t seed = 0;

  void validate() const;
};

struct GroundTruth {
  Eigen::MatrixXd C;            // p x q, column 0 has the largest norm
  Eigen::VectorXd beta;         // C.col(0)
  Eigen::VectorXd mu;           // q
  Eigen::MatrixXd Ltilde_true;  // n1 x r, X~ U D where C = U D V^T
};

struct Instance {
  Dataset data;
  GroundTruth truth;
};

/// Draws C = b C1 C2 (column-permuted), X, X~ and outcomes. Bit-identical for a given spec.
Instance generate(const ScenarioSpec& spec);

/// Only the coefficient matrix of `generate` (same stream).
Eigen::MatrixXd generate_coefficients(const ScenarioSpec& spec);

/// Fresh multi-record rows from the same truth: X standard normal, outcomes per scenario.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> generate_test_set(const ScenarioSpec& spec, const GroundTruth& truth,
                                                              Eigen::Index n_test, std::uint64_t seed);

/// Intercept mu1 with E[plogis(mu1 + x^T beta)] = target over `draws` fresh
/// Monte Carlo draws (x ~ N(0, I), so x^T beta ~ N(0, ||beta||^2)), by bisection.
double calibrate_intercept(const Eigen::VectorXd& beta, double target, std::uint64_t seed, int draws = 100000);
double calibrate_intercept(const ScenarioSpec& spec);

struct ReplicationOptions {
  Eigen::Index test_size = 2000;
  double trim = 0.10;
  unsigned threads = 1;
};

struct ReplicateOutcome {
  std::uint64_t seed = 0;
  std::vector<MetricsReport> reports;       // one per model
  std::vector<std::string> errors;          // empty string = success
  std::vector<bool> converged;
};

struct MetricSummary {
  double mean = 0.0;
  double se = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
};

struct ReplicationTable {
  std::vector<std::string> model_names;
  std::vector<ReplicateOutcome> replicates;
  // summaries[model][metric]
  std::vector<std::map<std::string, MetricSummary>> summaries;
  std::vector<std::size_t> failures;  // per model

  /// Per-replicate values of one metric for one model (failed replicates skipped).
  [[nodiscard]] std::vector<double> values(std::size_t model, const std::string& metric) const;
};

ReplicationTable run_replications(const ScenarioSpec& spec, const std::vector<ModelConfig>& models, int reps,
                                  const ReplicationOptions& options = {});

struct ScalingPoint {
  Eigen::Index n1 = 0;
  double median_er_v = 0.0;
  double normalized = 0.0;  // median * (n + lambda * n1)
  std::vector<double> er_v;
};

/// Reruns replications over n1 values for one HiRRR model; only n1 varies.
std::vector<ScalingPoint> n1_scaling_experiment(const ScenarioSpec& spec, const ModelConfig& model,
                                                const std::vector<Eigen::Index>& n1_grid, int reps,
                                                const ReplicationOptions& options = {});

/// Metric rows x model columns (mean and sd) in the layout of a simulation table.
std::string replication_table_csv(const ReplicationTable& table);

/// One row per (replicate, model): seed, convergence, error text and every metric.
std::string replicates_csv(const ReplicationTable& table);

std::string scaling_csv(const std::vector<ScalingPoint>& points);

}  // namespace hirrr
