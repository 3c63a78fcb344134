#include "hirrr/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <tuple>

#include "hirrr/errors.hpp"
#include "hirrr/io.hpp"
#include "hirrr/parallel.hpp"
#include "hirrr/random.hpp"

namespace hirrr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(Scenario s) { return s == Scenario::Binary ? "binary" : "continuous"; }

Scenario parse_scenario(const std::string& name) {
  if (name == "continuous" || name == "Continuous") return Scenario::Continuous;
  if (name == "binary" || name == "Binary") return Scenario::Binary;
  throw ConfigError("unknown scenario '" + name + "'");
}

void ScenarioSpec::validate() const {
  if (n < 1 || p < 1 || q < 1 || n1 < 0) throw ArgumentError("scenario sizes must be positive (n1 >= 0)");
  if (q0 < 1 || q0 > q) throw ArgumentError("q0 must satisfy 1 <= q0 <= q");
  if (r < 1 || r > std::min(p, q)) throw ArgumentError("r must satisfy 1 <= r <= min(p, q)");
  if (!(b >= 0.0) || !std::isfinite(b)) throw ArgumentError("signal scale b must be finite and non-negative");
  if (scenario == Scenario::Binary && !(target_prevalence > 0.001 && target_prevalence < 0.999)) {
    throw ArgumentError("target_prevalence must lie in (0.001, 0.999)");
  }
}

namespace {

// Stream ids inside one scenario seed.
enum Stream : std::uint64_t { kCoef = 1, kX = 2, kNoise = 3, kXt = 4, kNoiseT = 5, kCalib = 6 };

MatrixXd draw_outcomes(const ScenarioSpec& spec, const MatrixXd& Theta, Rng& rng) {
  if (spec.scenario == Scenario::Continuous) return Theta + normal_matrix(rng, Theta.rows(), Theta.cols());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  MatrixXd Y(Theta.rows(), Theta.cols());
  for (Index k = 0; k < Theta.cols(); ++k) {
    for (Index i = 0; i < Theta.rows(); ++i) Y(i, k) = unif(rng) < expfam::plogis(Theta(i, k)) ? 1.0 : 0.0;
  }
  return Y;
}

std::vector<Family> families_for(const ScenarioSpec& spec) {
  return std::vector<Family>(static_cast<std::size_t>(spec.q),
                             spec.scenario == Scenario::Binary ? Family::bernoulli() : Family::gaussian());
}

}  // namespace

MatrixXd generate_coefficients(const ScenarioSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {kCoef}));
  const MatrixXd C1 = normal_matrix(rng, spec.p, spec.r);
  const MatrixXd C2 = normal_matrix(rng, spec.r, spec.q);
  MatrixXd C = spec.b * (C1 * C2);
  Index best = 0;
  C.colwise().squaredNorm().maxCoeff(&best);
  if (best != 0) C.col(0).swap(C.col(best));
  return C;
}

double calibrate_intercept(const VectorXd& beta, double target, std::uint64_t seed, int draws) {
  if (!(target > 0.001 && target < 0.999)) throw ArgumentError("target prevalence must lie in (0.001, 0.999)");
  if (draws < 1) throw ArgumentError("need at least one Monte Carlo draw");
  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double sd = beta.norm();
  std::vector<double> z(static_cast<std::size_t>(draws));
  for (auto& v : z) v = sd * nd(rng);
  const auto prevalence = [&](double mu) {
    double s = 0.0;
    for (double v : z) s += expfam::plogis(mu + v);
    return s / static_cast<double>(draws);
  };
  const double start = std::log(target / (1.0 - target));
  double lo = start - 1.0;
  double hi = start + 1.0;
  for (int k = 0; k < 60 && prevalence(lo) > target; ++k) lo -= (hi - lo);
  for (int k = 0; k < 60 && prevalence(hi) < target; ++k) hi += (hi - lo);
  if (prevalence(lo) > target || prevalence(hi) < target) {
    throw CalibrationError("intercept calibration could not bracket the target prevalence");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (prevalence(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double calibrate_intercept(const ScenarioSpec& spec) {
  const MatrixXd C = generate_coefficients(spec);
  return calibrate_intercept(C.col(0), spec.target_prevalence, derive_seed(spec.seed, {kCalib}));
}

Instance generate(const ScenarioSpec& spec) {
  spec.validate();
  Instance inst;
  GroundTruth& t = inst.truth;
  t.C = generate_coefficients(spec);
  t.beta = t.C.col(0);
  t.mu = VectorXd::Zero(spec.q);
  if (spec.scenario == Scenario::Binary) {
    t.mu(0) = calibrate_intercept(t.beta, spec.target_prevalence, derive_seed(spec.seed, {kCalib}));
  }

  Rng rx(derive_seed(spec.seed, {kX}));
  Rng re(derive_seed(spec.seed, {kNoise}));
  Rng rxt(derive_seed(spec.seed, {kXt}));
  Rng ret(derive_seed(spec.seed, {kNoiseT}));
  const MatrixXd X = normal_matrix(rx, spec.n, spec.p);
  const MatrixXd Xt = normal_matrix(rxt, spec.n1, spec.p);

  MatrixXd Theta = X * t.C;
  Theta.rowwise() += t.mu.transpose();
  MatrixXd ThetaT = Xt * t.C;
  ThetaT.rowwise() += t.mu.transpose();

  Eigen::JacobiSVD<MatrixXd> svd(t.C, Eigen::ComputeThinU | Eigen::ComputeThinV);
  t.Ltilde_true = Xt * (svd.matrixU().leftCols(spec.r) * svd.singularValues().head(spec.r).asDiagonal());

  Dataset& ds = inst.data;
  ds.X = X;
  ds.Y = draw_outcomes(spec, Theta, re);
  ds.Ytilde = draw_outcomes(spec, ThetaT, ret);
  ds.q0 = spec.q0;
  ds.families = families_for(spec);
  ds.validate();
  return inst;
}

std::pair<MatrixXd, MatrixXd> generate_test_set(const ScenarioSpec& spec, const GroundTruth& truth, Index n_test,
                                                std::uint64_t seed) {
  Rng rx(derive_seed(seed, {kX}));
  Rng re(derive_seed(seed, {kNoise}));
  MatrixXd X = normal_matrix(rx, n_test, spec.p);
  MatrixXd Theta = X * truth.C;
  Theta.rowwise() += truth.mu.transpose();
  return {std::move(X), draw_outcomes(spec, Theta, re)};
}

std::vector<double> ReplicationTable::values(std::size_t model, const std::string& metric) const {
  std::vector<double> out;
  for (const auto& rep : replicates) {
    if (!rep.errors[model].empty()) continue;
    if (auto v = rep.reports[model].get(metric)) out.push_back(*v);
  }
  return out;
}

ReplicationTable run_replications(const ScenarioSpec& spec, const std::vector<ModelConfig>& models, int reps,
                                  const ReplicationOptions& options) {
  spec.validate();
  if (reps < 1) throw ArgumentError("reps must be >= 1");
  if (models.empty()) throw ConfigError("no models configured");
  ReplicationTable table;
  for (const auto& m : models) table.model_names.push_back(m.name);
  table.replicates.resize(static_cast<std::size_t>(reps));

  parallel_for(static_cast<std::size_t>(reps), options.threads, [&](std::size_t rep) {
    ReplicateOutcome& out = table.replicates[rep];
    ScenarioSpec s = spec;
    s.seed = derive_seed(spec.seed, {0x5EED, rep});
    out.seed = s.seed;
    out.reports.resize(models.size());
    out.errors.assign(models.size(), "");
    out.converged.assign(models.size(), false);
    const Instance inst = generate(s);
    MatrixXd Xtest;
    MatrixXd Ytest;
    if (s.scenario == Scenario::Binary) {
      std::tie(Xtest, Ytest) = generate_test_set(s, inst.truth, options.test_size, derive_seed(s.seed, {0x7E57}));
    }
    for (std::size_t m = 0; m < models.size(); ++m) {
      try {
        const FittedModel fm = fit_model(models[m], inst.data, derive_seed(s.seed, {m}), 1);
        out.converged[m] = fm.fit.converged;
        const MatrixXd C_hat = fm.fit.params.coefficients();
        MetricsReport& rpt = out.reports[m];
        const EstimationErrors ee = estimation_errors(C_hat, inst.truth.C, s.r);
        const PredictionErrors pe = prediction_errors(inst.data.X, C_hat, inst.truth.C);
        rpt.er_beta = ee.er_beta;
        rpt.er_c = ee.er_c;
        rpt.er_u = ee.er_u;
        rpt.er_v = ee.er_v;
        rpt.er_d = ee.er_d;
        rpt.pred_beta = pe.pred_beta;
        rpt.pred_c = pe.pred_c;
        if (s.scenario == Scenario::Binary) {
          const Prediction pr = predict(fm.fit.params, Xtest, inst.data.families);
          classification_metrics(rpt, pr.means.col(0), Ytest.col(0).cast<int>());
        }
      } catch (const Error& e) {
        out.errors[m] = e.what();
        out.reports[m] = MetricsReport{};
      }
    }
  });

  table.summaries.resize(models.size());
  table.failures.assign(models.size(), 0);
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (const auto& rep : table.replicates) {
      if (!rep.errors[m].empty()) ++table.failures[m];
    }
    for (const auto& name : MetricsReport::field_names()) {
      const std::vector<double> v = table.values(m, name);
      if (v.empty()) continue;
      MetricSummary s;
      s.count = v.size();
      // Too few values to trim: plain mean, sd over what is there.
      const std::size_t k = static_cast<std::size_t>(std::floor(options.trim * static_cast<double>(v.size()) + 1e-9));
      if (v.size() >= 2 * k + 3) {
        const TrimmedStats ts = trimmed_mean_se(v, options.trim);
        s.mean = ts.mean;
        s.se = ts.se;
        s.sd = ts.sd;
      } else {
        double sum = 0.0;
        for (double x : v) sum += x;
        s.mean = sum / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        s.se = s.sd / std::sqrt(static_cast<double>(v.size()));
      }
      table.summaries[m][name] = s;
    }
  }
  return table;
}

std::vector<ScalingPoint> n1_scaling_experiment(const ScenarioSpec& spec, const ModelConfig& model,
                                                const std::vector<Index>& n1_grid, int reps,
                                                const ReplicationOptions& options) {
  if (n1_grid.empty()) throw ArgumentError("n1 grid must be non-empty");
  if (!std::is_sorted(n1_grid.begin(), n1_grid.end())) throw ArgumentError("n1 grid must be sorted ascending");
  std::vector<ScalingPoint> out;
  for (Index n1 : n1_grid) {
    ScenarioSpec s = spec;
    s.n1 = n1;
    const ReplicationTable t = run_replications(s, {model}, reps, options);
    ScalingPoint pt;
    pt.n1 = n1;
    pt.er_v = t.values(0, "er_v");
    if (pt.er_v.empty()) throw DivergenceError("every replicate failed at n1 = " + std::to_string(n1));
    std::vector<double> sorted = pt.er_v;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    pt.median_er_v = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    const double lam = model.kind == ModelKind::Hirrr ? model.lambda : 0.0;
    pt.normalized = pt.median_er_v * (static_cast<double>(s.n) + lam * static_cast<double>(n1));
    out.push_back(std::move(pt));
  }
  return out;
}

std::string replication_table_csv(const ReplicationTable& table) {
  std::ostringstream os;
  os << "metric";
  for (const auto& name : table.model_names) os << ',' << csv_escape(name + "_mean") << ',' << csv_escape(name + "_sd");
  os << '\n';
  for (const auto& metric : MetricsReport::field_names()) {
    bool any = false;
    for (const auto& s : table.summaries) any = any || s.count(metric);
    if (!any) continue;
    os << metric;
    for (const auto& s : table.summaries) {
      const auto it = s.find(metric);
      if (it == s.end()) {
        os << ",NA,NA";
      } else {
        os << ',' << format_number(it->second.mean) << ',' << format_number(it->second.sd);
      }
    }
    os << '\n';
  }
  os << "failures";
  for (std::size_t f : table.failures) os << ',' << f << ",NA";
  os << '\n';
  return os.str();
}

std::string replicates_csv(const ReplicationTable& table) {
  std::ostringstream os;
  os << "replicate,seed,model,converged,error";
  for (const auto& f : MetricsReport::field_names()) os << ',' << f;
  os << '\n';
  for (std::size_t r = 0; r < table.replicates.size(); ++r) {
    const ReplicateOutcome& rep = table.replicates[r];
    for (std::size_t m = 0; m < table.model_names.size(); ++m) {
      os << r << ',' << rep.seed << ',' << csv_escape(table.model_names[m]) << ',' << (rep.converged[m] ? 1 : 0) << ','
         << csv_escape(rep.errors[m]);
      for (double v : rep.reports[m].values()) os << ',' << format_number(v);
      os << '\n';
    }
  }
  return os.str();
}

std::string scaling_csv(const std::vector<ScalingPoint>& points) {
  std::ostringstream os;
  os << "n1,median_er_v,normalized,replicates\n";
  for (const auto& p : points) {
    os << p.n1 << ',' << format_number(p.median_er_v) << ',' << format_number(p.normalized) << ',' << p.er_v.size()
       << '\n';
  }
  return os.str();
}

}  // namespace hirrr
