#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "hirrr/estimators.hpp"

namespace hirrr {

enum class FactorDirection { Risk, Protective };

FactorDirection parse_direction(const std::string& name);

struct FactorRow {
  Eigen::Index feature = 0;
  std::string name;
  double mean = 0.0;  // averaged standardized primary coefficient
  double sd = 0.0;    // sample sd across fits (0 for a single fit)
};

/// Averages C(:, 0) * sd over fits and sorts (Risk: descending, Protective: ascending;
/// ties by feature index). `feature_sds` holds one vector shared by all fits or one per fit.
std::vector<FactorRow> rank_factors(const std::vector<ModelParams>& fits, const std::vector<Eigen::VectorXd>& feature_sds,
                                    FactorDirection direction, Eigen::Index top_k,
                                    const std::vector<std::string>& feature_names = {});

std::string factors_csv(const std::vector<FactorRow>& rows);

/// Indices of the top ceil(fraction * n) scores; ties broken by lower index.
std::vector<Eigen::Index> top_flagged(const Eigen::VectorXd& scores, double fraction);

struct UniqueCaseRow {
  Eigen::Index feature = 0;
  std::string name;
  long both_count = 0;    // exposed among cases flagged by both models
  long only_b_count = 0;  // exposed among cases flagged only by model B
  double p_value = 1.0;
  double p_adjusted = 1.0;
};

struct UniqueCaseTable {
  std::size_t flagged_per_model = 0;
  std::size_t both_total = 0;
  std::size_t only_b_total = 0;
  std::vector<UniqueCaseRow> rows;  // sorted by raw p, then feature index
  std::string message;              // set when a comparison group is empty
};

UniqueCaseTable compare_unique_cases(const Eigen::VectorXd& scores_a, const Eigen::VectorXd& scores_b,
                                     const Eigen::VectorXi& labels, const Eigen::MatrixXd& features,
                                     double top_fraction = 0.10, const std::vector<std::string>& feature_names = {});

std::string unique_cases_csv(const UniqueCaseTable& table);

}  // namespace hirrr
