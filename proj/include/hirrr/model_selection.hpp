#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hirrr/estimators.hpp"
#include "hirrr/metrics.hpp"

namespace hirrr {

enum class CvCriterion { HeldOutWeightedLoglik, TargetAUC };

std::string to_string(CvCriterion c);
CvCriterion parse_criterion(const std::string& name);

struct CvGrid {
  std::vector<Eigen::Index> ranks;
  std::vector<double> lambdas;
  int folds = 5;
  CvCriterion criterion = CvCriterion::HeldOutWeightedLoglik;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class ModelKind { Glm, Rrr, Hirrr };

std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& name);

struct ModelConfig {
  std::string name;
  ModelKind kind = ModelKind::Hirrr;
  Eigen::Index rank = 1;
  double lambda = 1.0;
  std::optional<CvGrid> cv;             // tune (rank, lambda) on the training data
  std::vector<Eigen::Index> features;   // empty = all columns
  std::optional<Eigen::Index> screen_top_k;  // Fisher screening of binary columns (GLM)
  double tolerance = 1e-6;
  int max_iters = 5000;
  double ltilde_ridge = 0.0;
  bool shared_dispersion = false;
};

struct FittedModel {
  FitResult fit;                     // coefficients expanded back to all p features
  Eigen::Index rank = 0;
  double lambda = 0.0;
  std::vector<Eigen::Index> used_features;
};

/// Fits one configured model on `train`; CV (if requested) runs inside `train`.
FittedModel fit_model(const ModelConfig& model, const Dataset& train, std::uint64_t seed, unsigned threads = 1);

struct CvCell {
  Eigen::Index rank = 0;
  double lambda = 0.0;
  std::vector<double> fold_scores;
  double mean = 0.0;
};

struct CvResult {
  Eigen::Index best_rank = 0;
  double best_lambda = 0.0;
  std::vector<CvCell> cells;
  std::vector<int> fold_of;  // fold id per multi-record row
};

/// Stratified fold ids (by primary outcome when binary) for `n` rows.
std::vector<int> stratified_folds(const Eigen::VectorXd& primary, int folds, std::uint64_t seed);

/// k-fold CV over (rank, lambda). Folds cover the multi-record rows only; the
/// single-record block joins every training fold in full.
/// Rank and lambda come from the grid; every other fit option from `base`.
CvResult cross_validate(const Dataset& ds, const CvGrid& grid, ModelKind kind, unsigned threads = 1,
                        const FitConfig& base = {});

std::string cv_scores_csv(const CvResult& result);

struct SplitPlan {
  double train_fraction = 0.9;
  int repeats = 10;
  bool include_all_single_records_in_training = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitRepeat {
  std::vector<Eigen::Index> train_rows;
  std::vector<Eigen::Index> test_rows;
  bool flagged = false;  // test part still single-class after one resample
  std::vector<MetricsReport> reports;           // per model
  std::vector<Eigen::VectorXd> test_scores;     // per model, primary-outcome means
  std::vector<FittedModel> fits;                // per model
};

struct SplitResults {
  std::vector<std::string> model_names;
  std::vector<SplitRepeat> repeats;

  /// Arithmetic mean / sample sd over repeats of one metric.
  [[nodiscard]] MetricsReport mean(std::size_t model) const;
  [[nodiscard]] MetricsReport sd(std::size_t model) const;
};

/// Stratified train/test partition of the multi-record rows.
std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> stratified_split(const Eigen::VectorXd& primary,
                                                                                double train_fraction,
                                                                                std::uint64_t seed);

SplitResults run_random_splits(const Dataset& ds, const SplitPlan& plan, const std::vector<ModelConfig>& models,
                               unsigned threads = 1);

std::string split_results_csv(const SplitResults& results);

}  // namespace hirrr
