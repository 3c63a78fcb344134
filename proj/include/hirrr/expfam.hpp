#pragma once

// Exponential-dispersion families with canonical links:
//   log f(y; theta, phi) = (y*theta - b(theta)) / a(phi) + c(y; phi)

#include <Eigen/Dense>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hirrr {

enum class FamilyKind { Gaussian, Bernoulli, Poisson };

struct Family {
  FamilyKind kind = FamilyKind::Gaussian;

  /// True iff the dispersion is a free parameter (Gaussian only).
  [[nodiscard]] bool dispersion_free() const { return kind == FamilyKind::Gaussian; }

  static Family gaussian() { return {FamilyKind::Gaussian}; }
  static Family bernoulli() { return {FamilyKind::Bernoulli}; }
  static Family poisson() { return {FamilyKind::Poisson}; }

  friend bool operator==(const Family&, const Family&) = default;
};

std::string to_string(FamilyKind kind);
/// Accepts "gaussian", "bernoulli"/"binomial", "poisson" (case-insensitive).
Family parse_family(std::string_view name);

namespace expfam {

/// Numerically stable logistic function; saturates instead of overflowing.
double plogis(double theta);
/// log(1 + exp(theta)) without overflow.
double softplus(double theta);

/// Cumulant function b(theta).
double cumulant(const Family& family, double theta);
/// a(phi); identity for Gaussian, 1 otherwise.
double dispersion_scale(const Family& family, double phi);
/// Validates y against the family's support; throws DomainError.
void check_support(const Family& family, double y);

double log_density(const Family& family, double y, double theta, double phi);

/// Canonical mean b'(theta).
double mean(const Family& family, double theta);
/// Canonical variance function b''(theta).
double variance(const Family& family, double theta);
/// Canonical link g(m) = (b')^{-1}(m).
double link(const Family& family, double m);

/// -sum_{i,k} w_ik * log f_k(y_ik; theta_ik, phi_k). An empty W means unit weights.
double weighted_negloglik(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Theta,
                          std::span<const Family> families, const Eigen::VectorXd& phi,
                          const Eigen::MatrixXd& W);

}  // namespace expfam
}  // namespace hirrr
