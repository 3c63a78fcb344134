#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <vector>

namespace hirrr {

struct MetricsReport {
  std::optional<double> auc, prauc, sens_at_90, ppv_at_90, sens_at_95, ppv_at_95;
  std::optional<double> er_beta, er_c, er_u, er_v, er_d, pred_beta, pred_c;

  static const std::vector<std::string>& field_names();
  /// Values in field order; absent entries are NaN.
  [[nodiscard]] std::vector<double> values() const;
  [[nodiscard]] std::optional<double> get(const std::string& name) const;
  void set(const std::string& name, double value);
};

/// Pairwise concordance with ties counted 1/2.
double auc(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels);

/// Average precision over distinct score thresholds (step-wise).
double prauc(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels);

struct ThresholdMetrics {
  double sensitivity = 0.0;
  double ppv = 0.0;  // NaN when nothing is called positive
  double threshold = 0.0;
};

/// Operating point with the highest sensitivity among thresholds t whose specificity
/// (#negatives < t) / #negatives reaches the target; ties go to the higher t.
/// Candidates are the observed scores and +inf; "positive" means score >= t.
ThresholdMetrics sensitivity_ppv_at_specificity(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels,
                                                double specificity);

/// Fills the classification fields of a report for primary-outcome scores.
void classification_metrics(MetricsReport& report, const Eigen::VectorXd& scores, const Eigen::VectorXi& labels);

struct EstimationErrors {
  double er_beta = 0.0, er_c = 0.0, er_u = 0.0, er_v = 0.0, er_d = 0.0;
};

/// Errors of C_hat against C_true using rank-r SVD factors of both; beta is column 0.
EstimationErrors estimation_errors(const Eigen::MatrixXd& C_hat, const Eigen::MatrixXd& C_true, Eigen::Index r);

/// ||P_hat - P||_F^2 / r for the projectors of two orthonormal frames.
double subspace_error(const Eigen::MatrixXd& U_hat, const Eigen::MatrixXd& U);

struct PredictionErrors {
  double pred_beta = 0.0, pred_c = 0.0;
};

PredictionErrors prediction_errors(const Eigen::MatrixXd& X, const Eigen::MatrixXd& C_hat,
                                   const Eigen::MatrixXd& C_true);

struct TrimmedStats {
  double mean = 0.0;
  double se = 0.0;
  double sd = 0.0;
  std::size_t kept = 0;
};

/// Drops floor(trim * m) values from each tail; se = sd / sqrt(kept).
TrimmedStats trimmed_mean_se(std::vector<double> values, double trim = 0.10);

/// Two-sided Fisher exact p-value for {{a, b}, {c, d}}.
double fisher_exact(long a, long b, long c, long d);
inline double fisher_exact(const std::array<std::array<long, 2>, 2>& t) {
  return fisher_exact(t[0][0], t[0][1], t[1][0], t[1][1]);
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
std::vector<double> bh_adjust(const std::vector<double>& p_values);

}  // namespace hirrr
