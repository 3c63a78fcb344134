#pragma once

// Hybrid reduced-rank regression:
//   Theta  = 1 mu^T + X A B^T          (multi-record rows, supervised)
//   Theta~ = 1 mu^T + L~ B^T           (single-record rows, autoencoder)
// with B^T B = I_r shared by both parts, fitted by minimizing
//   -l_W(Theta, phi; Y) - lambda * l_W~(Theta~, phi; Y~).

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hirrr/expfam.hpp"
#include "hirrr/matrix_kernels.hpp"

namespace hirrr {

struct Dataset {
  Eigen::MatrixXd X;       // n x p multi-record features
  Eigen::MatrixXd Y;       // n x q multi-record outcomes
  Eigen::MatrixXd Ytilde;  // n1 x q single-record outcomes (n1 may be 0)
  int q0 = 1;              // columns [0, q0) are primary
  std::vector<Family> families;
  std::vector<std::string> feature_names;
  std::vector<std::string> outcome_names;

  [[nodiscard]] Eigen::Index n() const { return X.rows(); }
  [[nodiscard]] Eigen::Index p() const { return X.cols(); }
  [[nodiscard]] Eigen::Index q() const { return Y.cols(); }
  [[nodiscard]] Eigen::Index n1() const { return Ytilde.rows(); }

  /// Throws ArgumentError/DomainError on violated invariants. Normalizes an
  /// empty 0x0 Ytilde to 0 x q and fills missing names.
  void validate();
  [[nodiscard]] bool all_families(FamilyKind kind) const;

  /// Multi-record rows `rows` (in order); single-record part kept whole.
  [[nodiscard]] Dataset select_rows(const std::vector<Eigen::Index>& rows) const;
  /// Same data with the single-record part removed.
  [[nodiscard]] Dataset without_single_records() const;
};

struct ModelParams {
  Eigen::MatrixXd A;         // p x r
  OrthonormalFrame B;        // q x r
  Eigen::VectorXd mu;        // q
  Eigen::MatrixXd Ltilde;    // n1 x r
  Eigen::VectorXd phi;       // q
  std::vector<double> objective_trace;

  [[nodiscard]] Eigen::Index rank() const { return B.rank(); }
  /// C = A B^T (p x q)
  [[nodiscard]] Eigen::MatrixXd coefficients() const { return A * B.cols().transpose(); }
  [[nodiscard]] Eigen::MatrixXd theta(const Eigen::MatrixXd& X) const;
  [[nodiscard]] Eigen::MatrixXd theta_tilde() const;
};

struct FitConfig {
  Eigen::Index rank = 1;
  double lambda = 1.0;
  Eigen::MatrixXd W;       // n x q; empty = unit weights
  Eigen::MatrixXd Wtilde;  // n1 x q; empty = unit weights
  double tolerance = 1e-6;
  int max_iters = 5000;
  std::uint64_t seed = 0;
  // One dispersion shared by all Gaussian columns instead of one per column.
  // The closed form is the exact optimum only in this setting.
  bool shared_dispersion = false;
  // Adds lambda * ltilde_ridge / 2 * ||L~||_F^2 to the objective. Keeps the
  // single-record scores finite for binary outcomes, where their unpenalized
  // maximum likelihood estimate often does not exist.
  double ltilde_ridge = 0.0;
};

struct FitResult {
  ModelParams params;
  bool converged = false;
  int iterations = 0;
  bool degenerate_procrustes = false;  // some B-step target was rank deficient
  bool eigen_tie = false;              // closed form hit lambda_r == lambda_{r+1}
  std::string method;
};

/// Objective value L(A, B, mu, L~, phi) for a dataset/config.
double hirrr_objective(const Dataset& ds, const FitConfig& cfg, const ModelParams& params);

/// Deterministic warm start: marginal link for mu, rank-r closed form on the
/// link-transformed outcomes for A and B, L~ = (link(Y~) - 1 mu^T) B.
ModelParams initialize_params(const Dataset& ds, const FitConfig& cfg);

/// Closed form for all-Gaussian, unweighted data: B = top-r eigenvectors of
/// Yc^T P Yc + lambda Y~c^T Y~c with P the projector onto [1, X].
FitResult fit_hirrr_gaussian(const Dataset& ds, const FitConfig& cfg);

/// Block coordinate descent for all-Bernoulli outcomes (majorizer with the
/// logistic curvature bound 1/4). Objective trace is non-increasing.
FitResult fit_hirrr_binary(const Dataset& ds, const FitConfig& cfg,
                           const std::optional<ModelParams>& init = std::nullopt);

/// Block coordinate descent for mixed families, weights allowed.
FitResult fit_hirrr_general(const Dataset& ds, const FitConfig& cfg,
                            const std::optional<ModelParams>& init = std::nullopt);

/// Chooses the closed form, binary, or general route from families/weights.
FitResult fit_hirrr(const Dataset& ds, const FitConfig& cfg);

/// Reduced-rank regression on the multi-record part only (lambda = 0, no L~).
FitResult fit_rrr(const Dataset& ds, const FitConfig& cfg);

struct GlmFit {
  Eigen::VectorXd beta;
  double intercept = 0.0;
  bool converged = false;
  bool separation = false;  // fitted probabilities pinned at 0/1
  int iterations = 0;
};

/// IRLS for a canonical-link GLM with intercept.
GlmFit fit_glm_irls(const Family& family, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    int max_iters = 50, double tolerance = 1e-10);

GlmFit fit_glm_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int max_iters = 50,
                        double tolerance = 1e-10);

/// One GLM per outcome column, packed as ModelParams with A = C and B = I_q.
FitResult fit_glm(const Dataset& ds, const FitConfig& cfg);

struct Prediction {
  Eigen::MatrixXd theta;
  Eigen::MatrixXd means;
};

Prediction predict(const ModelParams& params, const Eigen::MatrixXd& Xnew,
                   const std::vector<Family>& families);

/// C_jk * sd_j; zero-variance features give zero rows.
Eigen::MatrixXd standardized_coefficients(const ModelParams& params, const Eigen::VectorXd& feature_sd);

/// Column standard deviations (population form, divisor n).
Eigen::VectorXd column_sd(const Eigen::MatrixXd& X);

}  // namespace hirrr
