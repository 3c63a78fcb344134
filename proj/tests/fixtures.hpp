#pragma once

// Small synthetic datasets built directly in the tests (independent of the
// simulation module).

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "hirrr/estimators.hpp"
#include "oracles.hpp"

namespace fixture {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Truth {
  MatrixXd C;
  VectorXd mu;
};

inline Truth low_rank_truth(std::mt19937_64& rng, Index p, Index q, Index r, double scale) {
  Truth t;
  t.C = scale * oracle::gaussian(rng, p, r) * oracle::gaussian(rng, r, q);
  t.mu = 0.3 * oracle::gaussian(rng, q, 1);
  return t;
}

inline double draw(std::mt19937_64& rng, const hirrr::Family& f, double theta) {
  switch (f.kind) {
    case hirrr::FamilyKind::Gaussian:
      return theta + std::normal_distribution<double>()(rng);
    case hirrr::FamilyKind::Bernoulli:
      return std::bernoulli_distribution(1.0 / (1.0 + std::exp(-theta)))(rng) ? 1.0 : 0.0;
    case hirrr::FamilyKind::Poisson:
      return static_cast<double>(std::poisson_distribution<int>(std::exp(theta))(rng));
  }
  return 0.0;
}

inline MatrixXd outcomes(std::mt19937_64& rng, const MatrixXd& Theta, const std::vector<hirrr::Family>& fams) {
  MatrixXd Y(Theta.rows(), Theta.cols());
  for (Index i = 0; i < Theta.rows(); ++i) {
    for (Index k = 0; k < Theta.cols(); ++k) Y(i, k) = draw(rng, fams[static_cast<std::size_t>(k)], Theta(i, k));
  }
  return Y;
}

// Outcomes Y = g^{-1}(1 mu^T + X C), Ytilde the same with fresh covariates that are then dropped.
inline hirrr::Dataset dataset(std::uint64_t seed, Index n, Index p, Index q, Index r, Index n1,
                              const std::vector<hirrr::Family>& fams, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  const Truth t = low_rank_truth(rng, p, q, r, scale);
  hirrr::Dataset ds;
  ds.X = oracle::gaussian(rng, n, p);
  MatrixXd Th = ds.X * t.C;
  Th.rowwise() += t.mu.transpose();
  ds.Y = outcomes(rng, Th, fams);
  const MatrixXd Xt = oracle::gaussian(rng, n1, p);
  MatrixXd Tht = Xt * t.C;
  Tht.rowwise() += t.mu.transpose();
  ds.Ytilde = outcomes(rng, Tht, fams);
  ds.families = fams;
  ds.q0 = 1;
  ds.validate();
  return ds;
}

inline std::vector<hirrr::Family> all(hirrr::Family f, Index q) { return std::vector<hirrr::Family>(static_cast<std::size_t>(q), f); }

inline hirrr::Dataset gaussian(std::uint64_t seed, Index n, Index p, Index q, Index r, Index n1, double scale = 0.5) {
  return dataset(seed, n, p, q, r, n1, all(hirrr::Family::gaussian(), q), scale);
}

inline hirrr::Dataset binary(std::uint64_t seed, Index n, Index p, Index q, Index r, Index n1, double scale = 0.5) {
  return dataset(seed, n, p, q, r, n1, all(hirrr::Family::bernoulli(), q), scale);
}

// Reduced-rank estimate with intercept written out directly:
// (Xc^T Xc)^+ Xc^T Yc V V^T, V the top-r right singular vectors of P_Xc Yc.
inline MatrixXd rrr_explicit(const MatrixXd& X, const MatrixXd& Y, Index r) {
  const MatrixXd Xc = X.rowwise() - X.colwise().mean();
  const MatrixXd Yc = Y.rowwise() - Y.colwise().mean();
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(Xc);
  const MatrixXd ols = cod.solve(Yc);
  const MatrixXd fitted = Xc * ols;
  Eigen::JacobiSVD<MatrixXd> svd(fitted, Eigen::ComputeThinV);
  const MatrixXd V = svd.matrixV().leftCols(r);
  return ols * V * V.transpose();
}

}  // namespace fixture
