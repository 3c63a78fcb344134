#include "hirrr/expfam.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include "hirrr/errors.hpp"

namespace hirrr {

std::string to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Gaussian:
      return "gaussian";
    case FamilyKind::Bernoulli:
      return "bernoulli";
    case FamilyKind::Poisson:
      return "poisson";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "gaussian" || s == "normal") return Family::gaussian();
  if (s == "bernoulli" || s == "binomial" || s == "binary") return Family::bernoulli();
  if (s == "poisson") return Family::poisson();
  throw ArgumentError("unknown family '" + std::string(name) + "'");
}

namespace expfam {

double plogis(double theta) {
  if (theta >= 0.0) {
    return 1.0 / (1.0 + std::exp(-theta));
  }
  const double e = std::exp(theta);
  return e / (1.0 + e);
}

double softplus(double theta) {
  if (theta > 0.0) return theta + std::log1p(std::exp(-theta));
  return std::log1p(std::exp(theta));
}

double cumulant(const Family& family, double theta) {
  switch (family.kind) {
    case FamilyKind::Gaussian:
      return 0.5 * theta * theta;
    case FamilyKind::Bernoulli:
      return softplus(theta);
    case FamilyKind::Poisson:
      return std::exp(theta);
  }
  return 0.0;
}

double dispersion_scale(const Family& family, double phi) {
  return family.dispersion_free() ? phi : 1.0;
}

void check_support(const Family& family, double y) {
  if (!std::isfinite(y)) throw DomainError("non-finite outcome value");
  switch (family.kind) {
    case FamilyKind::Gaussian:
      return;
    case FamilyKind::Bernoulli:
      if (y != 0.0 && y != 1.0) throw DomainError("Bernoulli outcome must be 0 or 1");
      return;
    case FamilyKind::Poisson:
      if (y < 0.0 || y != std::floor(y)) {
        throw DomainError("Poisson outcome must be a non-negative integer");
      }
      return;
  }
}

namespace {

double log_normalizer(const Family& family, double y, double phi) {
  switch (family.kind) {
    case FamilyKind::Gaussian:
      return -y * y / (2.0 * phi) - 0.5 * std::log(2.0 * std::numbers::pi * phi);
    case FamilyKind::Bernoulli:
      return 0.0;
    case FamilyKind::Poisson:
      return -std::lgamma(y + 1.0);
  }
  return 0.0;
}

// Same as log_density without argument checks; used in the hot loops.
double log_density_unchecked(const Family& family, double y, double theta, double phi) {
  if (family.kind == FamilyKind::Gaussian) {
    const double r = y - theta;
    return -r * r / (2.0 * phi) - 0.5 * std::log(2.0 * std::numbers::pi * phi);
  }
  const double a = dispersion_scale(family, phi);
  return (y * theta - cumulant(family, theta)) / a + log_normalizer(family, y, phi);
}

}  // namespace

double log_density(const Family& family, double y, double theta, double phi) {
  if (!(phi > 0.0)) throw ArgumentError("dispersion must be positive");
  check_support(family, y);
  return log_density_unchecked(family, y, theta, phi);
}

double mean(const Family& family, double theta) {
  switch (family.kind) {
    case FamilyKind::Gaussian:
      return theta;
    case FamilyKind::Bernoulli:
      return plogis(theta);
    case FamilyKind::Poisson:
      return std::exp(theta);
  }
  return theta;
}

double variance(const Family& family, double theta) {
  switch (family.kind) {
    case FamilyKind::Gaussian:
      return 1.0;
    case FamilyKind::Bernoulli: {
      const double m = plogis(theta);
      return m * (1.0 - m);
    }
    case FamilyKind::Poisson:
      return std::exp(theta);
  }
  return 1.0;
}

double link(const Family& family, double m) {
  switch (family.kind) {
    case FamilyKind::Gaussian:
      return m;
    case FamilyKind::Bernoulli:
      return std::log(m / (1.0 - m));
    case FamilyKind::Poisson:
      return std::log(m);
  }
  return m;
}

double weighted_negloglik(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Theta,
                          std::span<const Family> families, const Eigen::VectorXd& phi,
                          const Eigen::MatrixXd& W) {
  const auto n = Y.rows();
  const auto q = Y.cols();
  if (Theta.rows() != n || Theta.cols() != q) {
    throw ArgumentError("weighted_negloglik: Theta is not conformable with Y");
  }
  if (static_cast<Eigen::Index>(families.size()) != q || phi.size() != q) {
    throw ArgumentError("weighted_negloglik: families/phi length must equal column count");
  }
  const bool unit = W.size() == 0;
  if (!unit && (W.rows() != n || W.cols() != q)) {
    throw ArgumentError("weighted_negloglik: W is not conformable with Y");
  }
  for (Eigen::Index k = 0; k < q; ++k) {
    if (!(phi(k) > 0.0)) throw ArgumentError("dispersion must be positive");
  }
  // Row totals are summed in row order, so stacking two blocks adds their values.
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double row = 0.0;
    for (Eigen::Index k = 0; k < q; ++k) {
      const double w = unit ? 1.0 : W(i, k);
      if (w == 0.0) continue;
      if (w < 0.0) throw ArgumentError("weights must be non-negative");
      const Family& f = families[static_cast<std::size_t>(k)];
      check_support(f, Y(i, k));
      row -= w * log_density_unchecked(f, Y(i, k), Theta(i, k), phi(k));
    }
    total += row;
  }
  return total;
}

}  // namespace expfam
}  // namespace hirrr
