#include "doctest.h"

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "hirrr/errors.hpp"
#include "hirrr/estimators.hpp"
#include "oracles.hpp"

using namespace hirrr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

bool non_increasing(const std::vector<double>& tr) {
  for (std::size_t i = 1; i < tr.size(); ++i) {
    if (tr[i] > tr[i - 1] + 1e-10 * std::abs(tr[i - 1])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("config validation") {
  const Dataset ds = fixture::gaussian(1, 30, 4, 3, 1, 10);
  FitConfig cfg;
  cfg.rank = 4;
  CHECK_THROWS_AS(fit_hirrr_gaussian(ds, cfg), ArgumentError);
  CHECK_THROWS_AS(fit_hirrr_general(ds, cfg), ArgumentError);
  cfg.rank = 0;
  CHECK_THROWS_AS(fit_hirrr(ds, cfg), ArgumentError);
  cfg.rank = 2;
  cfg.lambda = -0.1;
  CHECK_THROWS_AS(fit_hirrr(ds, cfg), ArgumentError);
  cfg.lambda = 1.0;
  cfg.ltilde_ridge = -1.0;
  CHECK_THROWS_AS(fit_hirrr_general(ds, cfg), ArgumentError);
}

TEST_CASE("dataset validation") {
  Dataset ds = fixture::gaussian(2, 20, 3, 2, 1, 5);
  Dataset bad = ds;
  bad.q0 = 3;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  bad = ds;
  bad.Ytilde = MatrixXd::Zero(4, 3);
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  Dataset none = ds;
  none.Ytilde.resize(0, 0);
  none.validate();
  CHECK(none.n1() == 0);
  CHECK(none.Ytilde.cols() == 2);
}

TEST_CASE("gaussian closed form with lambda 0 is reduced-rank regression") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Dataset ds = fixture::gaussian(100 + s, 60, 6, 5, 2, 40);
    FitConfig cfg;
    cfg.rank = 2;
    cfg.lambda = 0.0;
    const MatrixXd C = fit_hirrr_gaussian(ds, cfg).params.coefficients();
    CHECK((C - fixture::rrr_explicit(ds.X, ds.Y, 2)).norm() <= 1e-8);
    CHECK((fit_rrr(ds, cfg).params.coefficients() - C).norm() <= 1e-10);
  }
}

TEST_CASE("gaussian full rank is least squares") {
  const Dataset ds = fixture::gaussian(7, 50, 4, 3, 3, 20);
  FitConfig cfg;
  cfg.rank = 3;
  cfg.lambda = 0.7;
  const MatrixXd Xc = ds.X.rowwise() - ds.X.colwise().mean();
  const MatrixXd Yc = ds.Y.rowwise() - ds.Y.colwise().mean();
  const MatrixXd ols = (Xc.transpose() * Xc).ldlt().solve(Xc.transpose() * Yc);
  // Full rank: V V^T = I, so the single-record block cannot move C; only mu is shared.
  const FitResult f = fit_hirrr_gaussian(ds, cfg);
  const MatrixXd P = f.params.B.projector();
  CHECK((P - MatrixXd::Identity(3, 3)).norm() <= 1e-10);
  FitConfig c0 = cfg;
  c0.lambda = 0.0;
  CHECK((fit_rrr(ds, c0).params.coefficients() - ols).norm() <= 1e-9);
}

TEST_CASE("gaussian closed form beats random feasible candidates") {
  const Dataset ds = fixture::gaussian(8, 50, 5, 4, 2, 100);
  FitConfig cfg;
  cfg.rank = 2;
  cfg.lambda = 1.0;
  cfg.shared_dispersion = true;
  const FitResult f = fit_hirrr_gaussian(ds, cfg);
  const double best = hirrr_objective(ds, cfg, f.params);
  CHECK(best == doctest::Approx(f.params.objective_trace.back()).epsilon(1e-12));

  std::mt19937_64 rng(88);
  const double N = static_cast<double>(ds.n() + ds.n1());
  const VectorXd mu = (ds.Y.colwise().sum() + ds.Ytilde.colwise().sum()).transpose() / N;
  const MatrixXd Yc = ds.Y.rowwise() - mu.transpose();
  const MatrixXd Ytc = ds.Ytilde.rowwise() - mu.transpose();
  const MatrixXd ols = (ds.X.transpose() * ds.X).ldlt().solve(ds.X.transpose() * Yc);
  int worse = 0;
  for (int c = 0; c < 1000; ++c) {
    // Random B with every other block at its best response.
    ModelParams P;
    const MatrixXd B = oracle::random_orthonormal(rng, 4, 2);
    P.B = OrthonormalFrame(B);
    P.mu = mu;
    P.A = ols * B;
    P.Ltilde = Ytc * B;
    const double rss = (ds.Y - P.theta(ds.X)).squaredNorm() + (ds.Ytilde - P.theta_tilde()).squaredNorm();
    P.phi = VectorXd::Constant(4, rss / (N * 4.0));
    worse += hirrr_objective(ds, cfg, P) >= best - 1e-9 * std::abs(best);
  }
  CHECK(worse == 1000);
}

TEST_CASE("general solver agrees with the closed form on gaussian data") {
  const Dataset ds = fixture::gaussian(9, 100, 10, 5, 2, 200);
  FitConfig cfg;
  cfg.rank = 2;
  cfg.lambda = 1.0;
  cfg.shared_dispersion = true;
  cfg.tolerance = 1e-12;
  cfg.max_iters = 20000;
  const double cf = fit_hirrr_gaussian(ds, cfg).params.objective_trace.back();
  const FitResult g = fit_hirrr_general(ds, cfg);
  CHECK(non_increasing(g.params.objective_trace));
  CHECK(std::abs(g.params.objective_trace.back() - cf) <= 1e-6 * std::abs(cf));
}

TEST_CASE("autoencoder scores are stationary at the closed form") {
  const Dataset ds = fixture::gaussian(10, 40, 5, 4, 2, 60);
  FitConfig cfg;
  cfg.rank = 2;
  cfg.lambda = 0.5;
  FitResult f = fit_hirrr_gaussian(ds, cfg);
  const double L0 = hirrr_objective(ds, cfg, f.params);
  ModelParams P = f.params;
  P.Ltilde = (ds.Ytilde.rowwise() - P.mu.transpose()) * P.B.cols();
  CHECK(std::abs(hirrr_objective(ds, cfg, P) - L0) < cfg.tolerance);
}

TEST_CASE("binary fit with zero iterations returns the initialization") {
  const Dataset ds = fixture::binary(11, 80, 5, 4, 2, 50);
  FitConfig cfg;
  cfg.rank = 2;
  cfg.lambda = 0.5;
  cfg.max_iters = 0;
  const FitResult f = fit_hirrr_binary(ds, cfg);
  const ModelParams init = initialize_params(ds, cfg);
  CHECK(f.params.objective_trace.size() == 1);
  CHECK(f.iterations == 0);
  CHECK_FALSE(f.converged);
  CHECK(f.params.A == init.A);
  CHECK(f.params.B.cols() == init.B.cols());
  CHECK(f.params.mu == init.mu);
  CHECK(f.params.Ltilde == init.Ltilde);
}

TEST_CASE("binary fit rejects non-binary entries") {
  Dataset ds = fixture::binary(12, 30, 3, 2, 1, 10);
  ds.Y(0, 0) = 0.5;
  FitConfig cfg;
  CHECK_THROWS_AS(fit_hirrr_binary(ds, cfg), DomainError);
  Dataset g = fixture::gaussian(12, 30, 3, 2, 1, 10);
  CHECK_THROWS_AS(fit_hirrr_binary(g, cfg), ArgumentError);
  Dataset b = fixture::binary(12, 30, 3, 2, 1, 10);
  CHECK_THROWS_AS(fit_hirrr_gaussian(b, cfg), ArgumentError);
}

TEST_CASE("binary rank one without single records is logistic regression") {
  const Dataset ds = fixture::binary(13, 400, 3, 1, 1, 0, 0.8);
  FitConfig cfg;
  cfg.rank = 1;
  cfg.lambda = 0.0;
  cfg.tolerance = 1e-13;
  cfg.max_iters = 50000;
  const FitResult f = fit_hirrr_binary(ds, cfg);
  const GlmFit g = fit_glm_logistic(ds.X, ds.Y.col(0));
  CHECK((f.params.coefficients().col(0) - g.beta).cwiseAbs().maxCoeff() < 1e-3);
  CHECK(std::abs(f.params.mu(0) - g.intercept) < 1e-3);
}

TEST_CASE("binary and general traces are non-increasing") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Dataset ds = fixture::binary(200 + s, 60, 5, 4, 2, 80);
    FitConfig cfg;
    cfg.rank = 2;
    cfg.lambda = 0.5;
    cfg.max_iters = 300;
    cfg.ltilde_ridge = 0.05;
    CHECK(non_increasing(fit_hirrr_binary(ds, cfg).params.objective_trace));
    CHECK(non_increasing(fit_hirrr_general(ds, cfg).params.objective_trace));
  }
}

TEST_CASE("general on all-bernoulli data matches the binary solver") {
  const Dataset ds = fixture::binary(14, 80, 5, 4, 2, 60);
  FitConfig cfg;
  cfg.rank = 2;
  cfg.lambda = 0.3;
  cfg.ltilde_ridge = 0.05;
  cfg.tolerance = 1e-12;
  cfg.max_iters = 20000;
  const ModelParams init = initialize_params(ds, cfg);
  const double lb = fit_hirrr_binary(ds, cfg, init).params.objective_trace.back();
  const double lg = fit_hirrr_general(ds, cfg, init).params.objective_trace.back();
  CHECK(std::abs(lb - lg) <= 1e-8 * std::abs(lb));
}

TEST_CASE("mixed gaussian and bernoulli toy") {
  const std::vector<Family> fams{Family::bernoulli(), Family::gaussian(), Family::bernoulli()};
  const Dataset ds = fixture::dataset(15, 80, 4, 3, 1, 50, fams);
  FitConfig cfg;
  cfg.rank = 1;
  cfg.lambda = 0.5;
  cfg.ltilde_ridge = 0.05;
  const FitResult f = fit_hirrr_general(ds, cfg);
  CHECK(f.params.objective_trace.size() > 1);
  CHECK(non_increasing(f.params.objective_trace));
  CHECK(f.params.phi(0) == 1.0);
  CHECK(f.params.phi(2) == 1.0);
  CHECK(f.params.B.orthonormality_defect() <= 1e-10);
}

TEST_CASE("poisson columns fit through the general solver") {
  const std::vector<Family> fams{Family::poisson(), Family::gaussian()};
  const Dataset ds = fixture::dataset(16, 80, 3, 2, 1, 30, fams, 0.2);
  FitConfig cfg;
  cfg.rank = 1;
  cfg.lambda = 0.5;
  const FitResult f = fit_hirrr(ds, cfg);
  CHECK(f.method == "hirrr-general");
  CHECK(non_increasing(f.params.objective_trace));
}

TEST_CASE("dispatcher routes") {
  const Dataset g = fixture::gaussian(17, 40, 3, 3, 1, 20);
  FitConfig cfg;
  CHECK(fit_hirrr(g, cfg).method == "hirrr-gaussian-closed-form");
  cfg.W = MatrixXd::Ones(40, 3);
  cfg.W(0, 0) = 2.0;
  CHECK(fit_hirrr(g, cfg).method == "hirrr-general");
  CHECK_THROWS_AS(fit_hirrr_gaussian(g, cfg), ArgumentError);
  const Dataset b = fixture::binary(17, 40, 3, 3, 1, 20);
  CHECK(fit_hirrr(b, FitConfig{}).method == "hirrr-binary");
}

TEST_CASE("lambda 0 hirrr equals rrr on binary data") {
  const Dataset ds = fixture::binary(18, 80, 5, 4, 2, 60);
  FitConfig cfg;
  cfg.rank = 2;
  cfg.lambda = 0.0;
  const MatrixXd a = fit_hirrr(ds, cfg).params.coefficients();
  const MatrixXd b = fit_rrr(ds, cfg).params.coefficients();
  CHECK((a - b).norm() <= 1e-10);
}

TEST_CASE("fits are deterministic") {
  const Dataset ds = fixture::binary(19, 60, 4, 3, 2, 30);
  FitConfig cfg;
  cfg.rank = 2;
  cfg.lambda = 0.4;
  cfg.ltilde_ridge = 0.05;
  const FitResult a = fit_hirrr_binary(ds, cfg);
  const FitResult b = fit_hirrr_binary(ds, cfg);
  CHECK(a.params.A == b.params.A);
  CHECK(a.params.objective_trace == b.params.objective_trace);
}

TEST_CASE("predict") {
  const Dataset ds = fixture::binary(20, 50, 4, 3, 2, 20);
  FitConfig cfg;
  cfg.rank = 2;
  const FitResult f = fit_hirrr(ds, cfg);
  const Prediction pr = predict(f.params, ds.X, ds.families);
  CHECK((pr.theta - f.params.theta(ds.X)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(((pr.means.array() > 0) && (pr.means.array() < 1)).all());

  const Prediction z = predict(f.params, MatrixXd::Zero(3, 4), ds.families);
  for (int i = 0; i < 3; ++i) CHECK((z.theta.row(i).transpose() - f.params.mu).norm() == 0.0);

  const MatrixXd dup = ds.X.row(5).replicate(4, 1);
  const Prediction d = predict(f.params, dup, ds.families);
  for (int i = 1; i < 4; ++i) CHECK(d.theta.row(i) == d.theta.row(0));

  CHECK_THROWS_AS(predict(f.params, ds.X, {Family::bernoulli()}), ArgumentError);
  CHECK_THROWS_AS(predict(f.params, MatrixXd::Zero(2, 5), ds.families), ArgumentError);
}

TEST_CASE("standardized coefficients") {
  const Dataset ds = fixture::gaussian(21, 40, 4, 3, 2, 10);
  FitConfig cfg;
  cfg.rank = 2;
  const ModelParams P = fit_hirrr(ds, cfg).params;
  const MatrixXd C = P.coefficients();
  CHECK(standardized_coefficients(P, VectorXd::Ones(4)) == C);
  VectorXd sd(4);
  sd << 0.5, 0.0, 2.0, 1.3;
  const MatrixXd S = standardized_coefficients(P, sd);
  for (int j = 0; j < 4; ++j) {
    for (int k = 0; k < 3; ++k) CHECK(S(j, k) == C(j, k) * sd(j));
  }
  CHECK(S.row(1).isZero(0.0));
  CHECK_THROWS_AS(standardized_coefficients(P, VectorXd::Ones(3)), ArgumentError);

  MatrixXd X(3, 2);
  X << 1, 5, 2, 5, 3, 5;
  const VectorXd s = column_sd(X);
  CHECK(s(0) == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(s(1) == 0.0);
}

TEST_CASE("logistic regression") {
  // intercept-only through a constant column
  MatrixXd X = MatrixXd::Ones(40, 1);
  VectorXd y = VectorXd::Zero(40);
  y.head(10).setOnes();
  const GlmFit g = fit_glm_logistic(X, y);
  CHECK(g.intercept == doctest::Approx(std::log(0.25 / 0.75)).epsilon(1e-10));
  CHECK(g.beta(0) == 0.0);
  CHECK(g.converged);

  // separation
  MatrixXd x1(10, 1);
  VectorXd ys(10);
  for (int i = 0; i < 10; ++i) {
    x1(i, 0) = i;
    ys(i) = i >= 5;
  }
  const GlmFit sep = fit_glm_logistic(x1, ys);
  CHECK_FALSE(sep.converged);
  CHECK(sep.separation);
  CHECK(std::isfinite(sep.beta(0)));
  CHECK(std::isfinite(sep.intercept));

  CHECK_THROWS_AS(fit_glm_logistic(x1, VectorXd::Ones(10)), DegenerateInputError);

  // consistency on simulated data: within 3 standard errors
  std::mt19937_64 rng(21);
  const int n = 5000;
  const MatrixXd Xs = oracle::gaussian(rng, n, 3);
  VectorXd beta(3);
  beta << 0.8, -0.5, 0.25;
  VectorXd yy(n);
  for (int i = 0; i < n; ++i) {
    const double eta = -0.4 + Xs.row(i).dot(beta);
    yy(i) = std::bernoulli_distribution(1.0 / (1.0 + std::exp(-eta)))(rng) ? 1.0 : 0.0;
  }
  const GlmFit fit = fit_glm_logistic(Xs, yy);
  MatrixXd X1(n, 4);
  X1.col(0).setOnes();
  X1.rightCols(3) = Xs;
  VectorXd w(n);
  for (int i = 0; i < n; ++i) {
    const double m = 1.0 / (1.0 + std::exp(-(fit.intercept + Xs.row(i).dot(fit.beta))));
    w(i) = m * (1 - m);
  }
  const MatrixXd cov = (X1.transpose() * w.asDiagonal() * X1).inverse();
  for (int j = 0; j < 3; ++j) CHECK(std::abs(fit.beta(j) - beta(j)) < 3.0 * std::sqrt(cov(j + 1, j + 1)));
  CHECK(std::abs(fit.intercept + 0.4) < 3.0 * std::sqrt(cov(0, 0)));
}

TEST_CASE("glm packs one model per outcome") {
  const Dataset ds = fixture::binary(22, 200, 3, 2, 1, 10);
  const FitResult f = fit_glm(ds, FitConfig{});
  CHECK(f.params.rank() == 2);
  for (int k = 0; k < 2; ++k) {
    const GlmFit g = fit_glm_logistic(ds.X, ds.Y.col(k));
    CHECK((f.params.coefficients().col(k) - g.beta).norm() <= 1e-12);
    CHECK(f.params.mu(k) == g.intercept);
  }
}
