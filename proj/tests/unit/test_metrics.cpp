#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "hirrr/errors.hpp"
#include "hirrr/metrics.hpp"
#include "oracles.hpp"

using namespace hirrr;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

VectorXi ivec(std::initializer_list<int> v) {
  VectorXi out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (int x : v) out(i++) = x;
  return out;
}

// Random labelled scores with deliberate ties (scores on a coarse grid).
void random_instance(std::mt19937_64& rng, VectorXd& s, VectorXi& y) {
  std::uniform_int_distribution<int> nd(2, 50);
  const int n = nd(rng);
  std::uniform_int_distribution<int> grid(0, 9);
  std::bernoulli_distribution coin(0.4);
  s.resize(n);
  y.resize(n);
  for (int i = 0; i < n; ++i) {
    s(i) = grid(rng) / 4.0;
    y(i) = coin(rng) ? 1 : 0;
  }
  y(0) = 1;
  y(1) = 0;
}

}  // namespace

TEST_CASE("auc examples") {
  CHECK(auc(vec({0.1, 0.2, 0.8, 0.9}), ivec({0, 0, 1, 1})) == 1.0);
  CHECK(auc(vec({1, 1, 1, 1}), ivec({0, 1, 0, 1})) == 0.5);
  CHECK(auc(vec({0.1, 0.4, 0.35, 0.8}), ivec({0, 0, 1, 1})) == 0.75);
  CHECK_THROWS_AS(auc(vec({0.1, 0.2}), ivec({1, 1})), UndefinedMetricError);
}

TEST_CASE("prauc examples") {
  CHECK(prauc(vec({0.1, 0.2, 0.8, 0.9}), ivec({0, 0, 1, 1})) == 1.0);
  CHECK(prauc(vec({0.1, 0.5, 0.6, 0.9}), ivec({1, 0, 0, 0})) == 0.25);
  CHECK_THROWS_AS(prauc(vec({0.1, 0.2}), ivec({0, 0})), UndefinedMetricError);
}

TEST_CASE("sensitivity and ppv at specificity") {
  auto sep = sensitivity_ppv_at_specificity(vec({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 2, 3}),
                                            ivec({0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1}), 0.9);
  CHECK(sep.sensitivity == 1.0);
  CHECK(sep.ppv == 1.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u;
  std::bernoulli_distribution coin(0.5);
  const int n = 20000;
  VectorXd s(n);
  VectorXi y(n);
  for (int i = 0; i < n; ++i) {
    s(i) = u(rng);
    y(i) = coin(rng);
  }
  auto null = sensitivity_ppv_at_specificity(s, y, 0.9);
  CHECK(std::abs(null.sensitivity - 0.1) < 0.015);
}

TEST_CASE("classification metrics match exhaustive enumeration") {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 200; ++t) {
    VectorXd s;
    VectorXi y;
    random_instance(rng, s, y);
    CHECK(auc(s, y) == oracle::auc(s, y));
    CHECK(prauc(s, y) == doctest::Approx(oracle::prauc(s, y)).epsilon(1e-14));
    for (int pct : {90, 95}) {
      auto got = sensitivity_ppv_at_specificity(s, y, pct / 100.0);
      auto want = oracle::sens_ppv_at_specificity(s, y, pct);
      CHECK(got.sensitivity == want.sensitivity);
      CHECK((std::isnan(got.ppv) ? std::isnan(want.ppv) : got.ppv == want.ppv));
    }
  }
}

TEST_CASE("auc symmetry and monotone invariance") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  VectorXd s(40);
  VectorXi y(40);
  for (int i = 0; i < 40; ++i) {
    s(i) = nd(rng);
    y(i) = i % 3 == 0;
  }
  CHECK(auc(s, y) + auc(-s, y) == doctest::Approx(1.0).epsilon(1e-14));
  const VectorXd t = s.array().exp() * 3.0 + 1.0;
  CHECK(auc(t, y) == auc(s, y));
  CHECK(sensitivity_ppv_at_specificity(t, y, 0.9).sensitivity == sensitivity_ppv_at_specificity(s, y, 0.9).sensitivity);
}

TEST_CASE("estimation errors") {
  std::mt19937_64 rng(8);
  const MatrixXd C = oracle::gaussian(rng, 6, 4);
  auto zero = estimation_errors(C, C, 2);
  CHECK(zero.er_beta == 0.0);
  CHECK(zero.er_c == 0.0);
  CHECK(zero.er_u <= 1e-20);
  CHECK(zero.er_v <= 1e-20);
  CHECK(zero.er_d <= 1e-20);

  // q=2, r=1 with right factors e1 and e2.
  MatrixXd Ch = MatrixXd::Zero(3, 2);
  MatrixXd Ct = MatrixXd::Zero(3, 2);
  Ch(0, 0) = 2.0;
  Ct(0, 1) = 1.0;
  CHECK(estimation_errors(Ch, Ct, 1).er_v == doctest::Approx(2.0).epsilon(1e-14));

  for (int t = 0; t < 20; ++t) {
    const MatrixXd A = oracle::gaussian(rng, 8, 5);
    const MatrixXd B = oracle::gaussian(rng, 8, 5);
    const MatrixXd X = oracle::gaussian(rng, 15, 8);
    auto got = estimation_errors(A, B, 3);
    auto pe = prediction_errors(X, A, B);
    auto want = oracle::errors_loop(X, A, B, 3);
    CHECK(std::abs(got.er_beta - want.er_beta) <= 1e-12 * std::max(1.0, want.er_beta));
    CHECK(std::abs(got.er_c - want.er_c) <= 1e-12 * std::max(1.0, want.er_c));
    CHECK(std::abs(got.er_u - want.er_u) <= 1e-10);
    CHECK(std::abs(got.er_v - want.er_v) <= 1e-10);
    CHECK(std::abs(got.er_d - want.er_d) <= 1e-10 * std::max(1.0, want.er_d));
    CHECK(std::abs(pe.pred_beta - want.pred_beta) <= 1e-12 * std::max(1.0, want.pred_beta));
    CHECK(std::abs(pe.pred_c - want.pred_c) <= 1e-12 * std::max(1.0, want.pred_c));
  }
}

TEST_CASE("prediction errors") {
  std::mt19937_64 rng(9);
  const MatrixXd C = oracle::gaussian(rng, 5, 3);
  const MatrixXd X = oracle::gaussian(rng, 7, 5);
  auto z = prediction_errors(X, C, C);
  CHECK(z.pred_beta == 0.0);
  CHECK(z.pred_c == 0.0);
  // X = I: Pred(C) = ||C - C_hat||^2 / (n q) = Er(C) p / n with n = p.
  const MatrixXd Ch = oracle::gaussian(rng, 5, 3);
  auto pe = prediction_errors(MatrixXd::Identity(5, 5), Ch, C);
  auto ee = estimation_errors(Ch, C, 2);
  CHECK(pe.pred_c == doctest::Approx(ee.er_c).epsilon(1e-13));
}

TEST_CASE("subspace error invariant under rotation") {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 20; ++t) {
    const MatrixXd U1 = oracle::random_orthonormal(rng, 9, 3);
    const MatrixXd U2 = oracle::random_orthonormal(rng, 9, 3);
    const MatrixXd R = oracle::random_orthonormal(rng, 3, 3);
    CHECK(std::abs(subspace_error(U1 * R, U2) - subspace_error(U1, U2)) <= 1e-12);
    CHECK(std::abs(subspace_error(U1, U2) - oracle::proj_err_loop(U1, U2)) <= 1e-12);
  }
}

TEST_CASE("trimmed mean") {
  std::vector<double> v(10);
  std::iota(v.begin(), v.end(), 1.0);
  auto t = trimmed_mean_se(v, 0.10);
  CHECK(t.mean == 5.5);
  CHECK(t.kept == 8);
  auto c = trimmed_mean_se(std::vector<double>(6, 2.5), 0.10);
  CHECK(c.mean == 2.5);
  CHECK(c.se == 0.0);
  std::vector<double> w{3, 1, 9, 4};
  CHECK(trimmed_mean_se(w, 0.0).mean == 4.25);
}

TEST_CASE("fisher exact") {
  CHECK(fisher_exact(2, 3, 3, 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fisher_exact(5, 0, 0, 5) == doctest::Approx(2.0 / 252.0).epsilon(1e-12));
  CHECK_THROWS_AS(fisher_exact(0, 0, 3, 4), UndefinedMetricError);
  CHECK_THROWS_AS(fisher_exact(1, 0, 3, 0), UndefinedMetricError);
  // Exposure 0/84 vs 3/39 as printed gives 0.0302; the reported 0.035 comes
  // out with the 42 uniquely identified patients quoted alongside it.
  const double p39 = fisher_exact(0, 84, 3, 36);
  CHECK(p39 == doctest::Approx(oracle::fisher(0, 84, 3, 36)).epsilon(1e-12));
  CHECK(p39 == doctest::Approx(9139.0 / 302621.0).epsilon(1e-12));
  const double p42 = fisher_exact(0, 84, 3, 39);
  CHECK(p42 == doctest::Approx(oracle::fisher(0, 84, 3, 39)).epsilon(1e-12));
  CHECK(std::abs(p42 - 0.035) < 0.0005);

  int checked = 0;
  for (long a = 0; a <= 40; ++a) {
    for (long b = 0; a + b <= 40; ++b) {
      for (long c = 0; a + b + c <= 40; ++c) {
        for (long d = 0; a + b + c + d <= 40; d += 3) {
          if (a + b == 0 || c + d == 0 || a + c == 0 || b + d == 0) continue;
          const double got = fisher_exact(a, b, c, d);
          const double want = oracle::fisher(a, b, c, d);
          if (std::abs(got - want) > 1e-12) FAIL_CHECK("table " << a << ' ' << b << ' ' << c << ' ' << d);
          ++checked;
        }
      }
    }
  }
  CHECK(checked > 10000);
}

TEST_CASE("bh adjust") {
  auto a = bh_adjust({0.01, 0.02, 0.03});
  for (double x : a) CHECK(x == doctest::Approx(0.03).epsilon(1e-14));
  CHECK(bh_adjust({0.2}) == std::vector<double>{0.2});
  auto eq = bh_adjust({0.4, 0.4, 0.4});
  for (double x : eq) CHECK(x == doctest::Approx(0.4).epsilon(1e-14));

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u;
  std::uniform_int_distribution<int> len(1, 30);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> p(len(rng));
    for (auto& x : p) x = u(rng) < 0.2 ? 0.5 : u(rng) * u(rng);
    auto got = bh_adjust(p);
    auto want = oracle::bh(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));
      CHECK(got[i] >= p[i]);
    }
  }
}

TEST_CASE("metrics report fields") {
  MetricsReport r;
  r.set("auc", 0.7);
  CHECK(r.get("auc").value() == 0.7);
  CHECK_FALSE(r.get("er_c").has_value());
  CHECK(MetricsReport::field_names().size() == 13);
  CHECK(MetricsReport::field_names().front() == "auc");
  CHECK(std::isnan(r.values()[1]));
}
