#include "doctest.h"

#include <cmath>
#include <random>

#include "hirrr/errors.hpp"
#include "hirrr/simulation.hpp"

using namespace hirrr;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ScenarioSpec small(Scenario s, std::uint64_t seed) {
  ScenarioSpec sp;
  sp.scenario = s;
  sp.n = 200;
  sp.n1 = 300;
  sp.p = 20;
  sp.q = 6;
  sp.r = 2;
  sp.b = 0.2;
  sp.seed = seed;
  return sp;
}

ModelConfig cfg(const std::string& name, ModelKind kind, Index rank, double lambda) {
  ModelConfig m;
  m.name = name;
  m.kind = kind;
  m.rank = rank;
  m.lambda = lambda;
  return m;
}

}  // namespace

TEST_CASE("generation is deterministic and well formed") {
  for (Scenario s : {Scenario::Continuous, Scenario::Binary}) {
    const ScenarioSpec sp = small(s, 3);
    const Instance a = generate(sp);
    const Instance b = generate(sp);
    CHECK(a.data.X == b.data.X);
    CHECK(a.data.Y == b.data.Y);
    CHECK(a.data.Ytilde == b.data.Ytilde);
    CHECK(a.truth.C == b.truth.C);
    CHECK(a.data.n() == 200);
    CHECK(a.data.n1() == 300);
    CHECK(a.data.p() == 20);
    CHECK(a.data.q() == 6);
    CHECK(a.truth.beta == a.truth.C.col(0));
    CHECK(a.truth.Ltilde_true.rows() == 300);
    CHECK(a.truth.Ltilde_true.cols() == 2);
    for (Index k = 1; k < 6; ++k) CHECK(a.truth.C.col(0).norm() >= a.truth.C.col(k).norm());
    Eigen::JacobiSVD<MatrixXd> svd(a.truth.C);
    const VectorXd sv = svd.singularValues();
    CHECK(sv(1) > 1e-8 * sv(0));
    CHECK(sv(2) <= 1e-10 * sv(0));
    CHECK(generate_coefficients(sp) == a.truth.C);
    if (s == Scenario::Binary) {
      CHECK(((a.data.Y.array() == 0.0) || (a.data.Y.array() == 1.0)).all());
      CHECK(a.data.families[0] == Family::bernoulli());
    } else {
      CHECK(a.data.families[0] == Family::gaussian());
    }
  }
  CHECK(generate(small(Scenario::Continuous, 4)).data.X != generate(small(Scenario::Continuous, 3)).data.X);
}

TEST_CASE("null signal") {
  ScenarioSpec sp = small(Scenario::Continuous, 5);
  sp.b = 0.0;
  const Instance inst = generate(sp);
  CHECK(inst.truth.C.isZero(0.0));
}

TEST_CASE("spec validation") {
  ScenarioSpec sp = small(Scenario::Continuous, 1);
  sp.r = 7;
  CHECK_THROWS_AS(sp.validate(), ArgumentError);
  sp = small(Scenario::Binary, 1);
  sp.target_prevalence = 0.9995;
  CHECK_THROWS_AS(generate(sp), ArgumentError);
  CHECK(parse_scenario("binary") == Scenario::Binary);
}

TEST_CASE("target prevalence is met") {
  // Binomial sd of one seed's prevalence at n = 2000 is about 0.009, so the
  // 0.02 band applies to the mean over seeds; single seeds get four sds.
  double total = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    ScenarioSpec sp;
    sp.scenario = Scenario::Binary;
    sp.q = 10;
    sp.n1 = 10;
    sp.seed = 300 + s;
    const Instance inst = generate(sp);
    const double prev = inst.data.Y.col(0).mean();
    CHECK(std::abs(prev - 0.20) <= 4.0 * std::sqrt(0.16 / 2000.0));
    total += prev;
  }
  CHECK(std::abs(total / 20.0 - 0.20) <= 0.02);
  CHECK(std::abs(total / 20.0 - 0.20) <= 3.0 * std::sqrt(0.16 / 2000.0 / 20.0));
}

TEST_CASE("intercept calibration") {
  CHECK(calibrate_intercept(VectorXd::Zero(5), 0.2, 1) == doctest::Approx(std::log(0.2 / 0.8)).epsilon(1e-9));
  VectorXd beta(4);
  beta << 0.7, -0.7, 0.3, -0.3;
  CHECK(std::abs(calibrate_intercept(beta, 0.5, 2)) < 0.01);
  CHECK_THROWS_AS(calibrate_intercept(beta, 0.0005, 2), ArgumentError);

  // Fresh Monte Carlo: x ~ N(0, I_4), a million draws.
  VectorXd b2(4);
  b2 << 1.2, -0.4, 0.8, 0.1;
  const double mu = calibrate_intercept(b2, 0.15, 3);
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd;
  double s = 0.0;
  const int m = 1000000;
  for (int i = 0; i < m; ++i) {
    double eta = mu;
    for (int j = 0; j < 4; ++j) eta += b2(j) * nd(rng);
    s += 1.0 / (1.0 + std::exp(-eta));
  }
  CHECK(std::abs(s / m - 0.15) < 0.002);
}

TEST_CASE("test sets reuse the truth") {
  const ScenarioSpec sp = small(Scenario::Binary, 6);
  const Instance inst = generate(sp);
  const auto [X, Y] = generate_test_set(sp, inst.truth, 50, 17);
  CHECK(X.rows() == 50);
  CHECK(X.cols() == 20);
  CHECK(Y.cols() == 6);
  CHECK(generate_test_set(sp, inst.truth, 50, 17).second == Y);
}

TEST_CASE("replications") {
  const ScenarioSpec sp = small(Scenario::Continuous, 7);
  const std::vector<ModelConfig> models{cfg("rrr", ModelKind::Rrr, 2, 0.0), cfg("hirrr", ModelKind::Hirrr, 2, 1.0)};
  ReplicationOptions opt;
  opt.test_size = 100;
  const ReplicationTable one = run_replications(sp, models, 1, opt);
  REQUIRE(one.replicates.size() == 1);
  for (std::size_t m = 0; m < 2; ++m) {
    CHECK(one.failures[m] == 0);
    for (const auto& name : {"er_c", "er_v", "pred_beta"}) {
      CHECK(one.summaries[m].at(name).mean == one.replicates[0].reports[m].get(name).value());
      CHECK(one.summaries[m].at(name).count == 1);
    }
  }
  const ReplicationTable a = run_replications(sp, models, 3, opt);
  ReplicationOptions t3 = opt;
  t3.threads = 3;
  const ReplicationTable b = run_replications(sp, models, 3, t3);
  CHECK(replication_table_csv(a) == replication_table_csv(b));
  CHECK(replicates_csv(a) == replicates_csv(b));
  CHECK(replicates_csv(a).rfind("replicate,seed,model,converged,error,auc,", 0) == 0);
  CHECK(a.values(1, "er_v").size() == 3);
}

TEST_CASE("binary replications report classification metrics") {
  ScenarioSpec sp = small(Scenario::Binary, 8);
  sp.b = 0.3;
  const std::vector<ModelConfig> models{cfg("glm", ModelKind::Glm, 1, 0.0), cfg("rrr", ModelKind::Rrr, 2, 0.0)};
  ReplicationOptions opt;
  opt.test_size = 300;
  const ReplicationTable t = run_replications(sp, models, 2, opt);
  for (std::size_t m = 0; m < 2; ++m) {
    CHECK(t.values(m, "auc").size() == 2);
    CHECK(t.values(m, "sens_at_90").size() == 2);
  }
}

TEST_CASE("n1 scaling") {
  ScenarioSpec sp = small(Scenario::Continuous, 9);
  sp.r = 3;
  ModelConfig h = cfg("hirrr", ModelKind::Hirrr, 3, 1.0);
  ReplicationOptions opt;
  opt.test_size = 50;
  const auto pts = n1_scaling_experiment(sp, h, {0, 400}, 3, opt);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].n1 == 0);
  CHECK(pts[0].er_v.size() == 3);
  CHECK(pts[1].normalized == doctest::Approx(pts[1].median_er_v * (200 + 400)));

  // With n1 = 0 the single-record term is vacuous: identical to reduced-rank regression.
  sp.n1 = 0;
  const std::vector<ModelConfig> both{cfg("rrr", ModelKind::Rrr, 3, 0.0), h};
  const ReplicationTable t = run_replications(sp, both, 3, opt);
  const auto rrr = t.values(0, "er_v");
  std::vector<double> sorted = rrr;
  std::sort(sorted.begin(), sorted.end());
  CHECK(pts[0].median_er_v == doctest::Approx(sorted[1]).epsilon(1e-10));
  CHECK(scaling_csv(pts).rfind("n1,median_er_v,normalized,replicates\n", 0) == 0);
  CHECK_THROWS_AS(n1_scaling_experiment(sp, h, {400, 0}, 1, opt), ArgumentError);
}
